//! Ω-realizations of polynomial symbols on weighted spaces `H_Φ` in one
//! complex dimension.
//!
//! Holomorphic samples are stored *reduced*: the vector holds
//! `ũ(x) = u(x)·e^{−λΦ(x)}` at every grid point, which keeps magnitudes near
//! one for any `λ`. The realization
//!
//! ```text
//! Q^Ω u(x) = (λ/π) ∫_Ω e^{2λψ(x,ȳ)} q(x,ȳ,λ)·n(x,ȳ) u(y) e^{−2λΦ(y)} dA(y)
//! ```
//!
//! becomes, in reduced form, a kernel `exp(2λψ(x,ȳ) − λΦ(x) − λΦ(y))` of
//! modulus at most about `e^{−λ|x−y|²/4}`. The factor `n = 2∂ₓ∂_wψ` is the
//! identity symbol, so the constant symbol `1` realizes the identity up to
//! boundary and `O(λ⁻¹)` effects.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::counterexample::{lattice_weights, GREGORY_ORDER};
use crate::deformation::{DeformError, WeightFunction};
use crate::fbi::{Axis, ComplexGrid};
use crate::symbolic::PolySymbol;

pub use crate::deformation::DomainSpec;

/// Largest admissible `λ·h²` for the kernel quadrature.
pub const RESOLUTION_LIMIT: f64 = 0.5;

/// Relative Taylor residual below which a quadratic fit counts as exact.
pub const EXACT_FIT_TOL: f64 = 1e-11;

#[derive(Debug, Error)]
pub enum RealizationError {
    #[error("λ·h² = {value:.3} exceeds the resolution limit {limit} at λ = {lambda}")]
    Resolution { lambda: f64, value: f64, limit: f64 },
    #[error("no polarization: {0}")]
    Polarization(String),
    #[error("symbol term λ^{found} exceeds the declared order {order}")]
    OrderExceeded { order: f64, found: i32 },
    #[error("symbol has a non-finite coefficient")]
    NonFiniteSymbol,
    #[error("symbol must be in one variable pair (x, w), found dimension {0}")]
    SymbolDimension(usize),
    #[error("sample vector has {found} entries, grid has {expected}")]
    SampleLength { expected: usize, found: usize },
    #[error("operators live on different grids or domains")]
    Incompatible,
    #[error("composition needs both orders ≤ 0, got {0} and {1}")]
    CompositionOrder(f64, f64),
    #[error("composition symbol overflowed at expansion order {0}")]
    ExpansionOverflow(usize),
    #[error("principal symbol reaches {min:.3e} < c0 = {c0} at x = {at}")]
    NotElliptic { min: f64, c0: f64, at: Complex64 },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error(transparent)]
    Domain(#[from] DeformError),
}

pub type Result<T> = std::result::Result<T, RealizationError>;

/// Polynomial symbol `Σ c·λ^p·x^a·w^b` with `w` standing for `ȳ`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RealSymbol {
    terms: BTreeMap<(i32, u32, u32), Complex64>,
}

impl RealSymbol {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: Complex64) -> Self {
        Self::zero().plus_term(c, 0, 0, 0)
    }

    pub fn identity() -> Self {
        Self::constant(Complex64::new(1.0, 0.0))
    }

    pub fn x() -> Self {
        Self::zero().plus_term(Complex64::new(1.0, 0.0), 0, 1, 0)
    }

    pub fn w() -> Self {
        Self::zero().plus_term(Complex64::new(1.0, 0.0), 0, 0, 1)
    }

    /// Adds `c·λ^p·x^a·w^b`.
    pub fn plus_term(mut self, c: Complex64, p: i32, a: u32, b: u32) -> Self {
        let e = self.terms.entry((p, a, b)).or_insert(Complex64::new(0.0, 0.0));
        *e += c;
        if *e == Complex64::new(0.0, 0.0) {
            self.terms.remove(&(p, a, b));
        }
        self
    }

    /// Reads a one-variable phase-space polynomial, mapping `x1 → x` and `xi1 → w`.
    pub fn from_poly(p: &PolySymbol) -> Result<Self> {
        if p.dim() != 1 {
            return Err(RealizationError::SymbolDimension(p.dim()));
        }
        let mut s = Self::zero();
        for (e, c) in p.terms() {
            let c = num_traits::ToPrimitive::to_f64(c).unwrap_or(f64::NAN);
            s = s.plus_term(Complex64::new(c, 0.0), 0, e[0], e[1]);
        }
        Ok(s)
    }

    /// Multiplies every term by `λ^p`.
    pub fn times_lambda_pow(&self, p: i32) -> Self {
        Self {
            terms: self.terms.iter().map(|(&(q, a, b), &c)| ((q + p, a, b), c)).collect(),
        }
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let mut out = Self::zero();
        for (&(p, a, b), &v) in &self.terms {
            out = out.plus_term(v * c, p, a, b);
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (&(p, a, b), &v) in &other.terms {
            out = out.plus_term(v, p, a, b);
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero();
        for (&(p, a, b), &u) in &self.terms {
            for (&(q, c, d), &v) in &other.terms {
                out = out.plus_term(u * v, p + q, a + c, b + d);
            }
        }
        out
    }

    pub fn d_x(&self) -> Self {
        let mut out = Self::zero();
        for (&(p, a, b), &v) in &self.terms {
            if a > 0 {
                out = out.plus_term(v * a as f64, p, a - 1, b);
            }
        }
        out
    }

    pub fn d_w(&self) -> Self {
        let mut out = Self::zero();
        for (&(p, a, b), &v) in &self.terms {
            if b > 0 {
                out = out.plus_term(v * b as f64, p, a, b - 1);
            }
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.terms.values().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Highest power of `λ` present; `None` for the zero symbol.
    pub fn lambda_order(&self) -> Option<i32> {
        self.terms.keys().map(|k| k.0).max()
    }

    /// Terms at the given power of `λ`, with the power stripped.
    pub fn at_order(&self, p: i32) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .filter(|(k, _)| k.0 == p)
                .map(|(&(_, a, b), &c)| ((0, a, b), c))
                .collect(),
        }
    }

    /// `q(x, w, λ)`.
    pub fn eval(&self, x: Complex64, w: Complex64, lambda: f64) -> Complex64 {
        self.terms
            .iter()
            .map(|(&(p, a, b), &c)| c * lambda.powi(p) * x.powu(a) * w.powu(b))
            .sum()
    }

    /// Whether `conj q(y, x̄) = q(x, ȳ)` holds identically.
    pub fn is_hermitian(&self) -> bool {
        self.terms.iter().all(|(&(p, a, b), &c)| {
            let mirror = self.terms.get(&(p, b, a)).copied().unwrap_or_default();
            (mirror.conj() - c).norm() <= 1e-14 * (1.0 + c.norm())
        })
    }

    /// Coefficients `m_{ab}` of `x^a w^b` with `λ` substituted.
    fn dense(&self, lambda: f64) -> DMatrix<Complex64> {
        let da = self.terms.keys().map(|k| k.1).max().unwrap_or(0) as usize + 1;
        let db = self.terms.keys().map(|k| k.2).max().unwrap_or(0) as usize + 1;
        let mut m = DMatrix::from_element(da, db, Complex64::new(0.0, 0.0));
        for (&(p, a, b), &c) in &self.terms {
            m[(a as usize, b as usize)] += c * lambda.powi(p);
        }
        m
    }
}

impl fmt::Display for RealSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(&(p, a, b), c)| {
                let mut s = format!("({})", c);
                if p != 0 {
                    s += &format!("·λ^{p}");
                }
                if a > 0 {
                    s += &format!("·x^{a}");
                }
                if b > 0 {
                    s += &format!("·w^{b}");
                }
                s
            })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

/// Holomorphic-antiholomorphic extension `ψ(x, w)` of a weight, with `ψ(x, x̄) = Φ(x)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Polarization {
    /// Expansion point `x₀`.
    pub center: (f64, f64),
    /// `c_{jk}` for `j ≤ k`, meaning `c_{jk}(x−x₀)^j(w−x̄₀)^k` plus its mirror.
    coeffs: Vec<(u32, u32, (f64, f64))>,
    pub degree: u32,
    /// `max |Φ − ψ(x, x̄)|` over `Ω`.
    pub truncation_error: f64,
    pub exact: bool,
}

impl Polarization {
    /// `ψ₀(x, w) = −(x − w)²/8` for `Φ₀ = (Im x)²/2`.
    pub fn standard() -> Self {
        Self {
            center: (0.0, 0.0),
            coeffs: vec![
                (0, 2, (-0.125, 0.0)),
                (1, 1, (0.25, 0.0)),
            ],
            degree: 2,
            truncation_error: 0.0,
            exact: true,
        }
    }

    /// Least-squares Taylor polarization of `weight` on the `Ω` points,
    /// expanded at `center`. A quadratic fit is kept when it reproduces the
    /// samples to rounding; otherwise degree 4 is used and its residual reported.
    pub fn fit(weight: &WeightFunction, omega: &[bool], center: Complex64) -> Result<Self> {
        let grid = weight.grid();
        let pts: Vec<(Complex64, f64)> = (0..grid.len())
            .filter(|&p| omega[p])
            .map(|p| (grid.point(p)[0] - center, weight.values()[p]))
            .collect();
        let scale = pts.iter().map(|(_, v)| v.abs()).fold(1.0, f64::max);
        let mut last = None;
        for degree in [2u32, 4] {
            let fit = Self::fit_degree(&pts, center, degree)?;
            if fit.truncation_error <= EXACT_FIT_TOL * scale {
                return Ok(Self { exact: true, ..fit });
            }
            last = Some(fit);
        }
        Ok(last.expect("degree 4 fitted"))
    }

    fn fit_degree(pts: &[(Complex64, f64)], center: Complex64, degree: u32) -> Result<Self> {
        let mut layout = Vec::new();
        for j in 0..=degree {
            for k in j..=degree - j {
                layout.push((j, k));
            }
        }
        let unknowns: usize = layout.iter().map(|&(j, k)| if j == k { 1 } else { 2 }).sum();
        if pts.len() < unknowns {
            return Err(RealizationError::Polarization(format!(
                "{} points cannot fix {unknowns} Taylor coefficients",
                pts.len()
            )));
        }
        let basis = |d: Complex64| -> Vec<f64> {
            let mut row = Vec::with_capacity(unknowns);
            for &(j, k) in &layout {
                let m = d.powu(j) * d.conj().powu(k);
                if j == k {
                    row.push(m.re);
                } else {
                    // c·m + conj(c·m) = 2(Re c·Re m − Im c·Im m)
                    row.push(2.0 * m.re);
                    row.push(-2.0 * m.im);
                }
            }
            row
        };
        let a = DMatrix::from_row_iterator(pts.len(), unknowns, pts.iter().flat_map(|(d, _)| basis(*d)));
        let b = DVector::from_iterator(pts.len(), pts.iter().map(|(_, v)| *v));
        let svd = a.clone().svd(true, true);
        let sol = svd
            .solve(&b, 1e-12)
            .map_err(|e| RealizationError::Polarization(e.to_string()))?;
        let resid = (&a * &sol - &b).amax();
        let mut coeffs = Vec::with_capacity(layout.len());
        let mut it = sol.iter();
        for &(j, k) in &layout {
            let re = *it.next().expect("layout length");
            let im = if j == k { 0.0 } else { *it.next().expect("layout length") };
            coeffs.push((j, k, (re, im)));
        }
        Ok(Self {
            center: (center.re, center.im),
            coeffs,
            degree,
            truncation_error: resid,
            exact: false,
        })
    }

    /// Full coefficient matrices of `ψ` and `∂ₓ∂_wψ` in `(x − x₀)^j (w − x̄₀)^k`.
    fn dense(&self) -> DensePolarization {
        let d = self.degree as usize + 1;
        let zero = Complex64::new(0.0, 0.0);
        let mut psi = DMatrix::from_element(d, d, zero);
        for &(j, k, (re, im)) in &self.coeffs {
            let c = Complex64::new(re, im);
            psi[(j as usize, k as usize)] += c;
            if j != k {
                psi[(k as usize, j as usize)] += c.conj();
            }
        }
        let mut mixed = DMatrix::from_element(d, d, zero);
        for j in 1..d {
            for k in 1..d {
                mixed[(j - 1, k - 1)] = psi[(j, k)] * (j * k) as f64;
            }
        }
        DensePolarization { psi, mixed }
    }

    fn shift(&self, x: Complex64, w: Complex64) -> (Complex64, Complex64) {
        let c = Complex64::new(self.center.0, self.center.1);
        (x - c, w - c.conj())
    }

    /// `ψ(x, w)`.
    pub fn eval(&self, x: Complex64, w: Complex64) -> Complex64 {
        let (dx, dw) = self.shift(x, w);
        self.coeffs
            .iter()
            .map(|&(j, k, (re, im))| {
                let c = Complex64::new(re, im);
                let t = c * dx.powu(j) * dw.powu(k);
                if j == k {
                    t
                } else {
                    t + c.conj() * dx.powu(k) * dw.powu(j)
                }
            })
            .sum()
    }

    /// `∂ₓ∂_wψ(x, w)`.
    pub fn mixed(&self, x: Complex64, w: Complex64) -> Complex64 {
        let (dx, dw) = self.shift(x, w);
        let mono = |a: u32, b: u32| -> Complex64 {
            if a == 0 || b == 0 {
                Complex64::new(0.0, 0.0)
            } else {
                dx.powu(a - 1) * dw.powu(b - 1) * (a * b) as f64
            }
        };
        self.coeffs
            .iter()
            .map(|&(j, k, (re, im))| {
                let c = Complex64::new(re, im);
                let t = c * mono(j, k);
                if j == k {
                    t
                } else {
                    t + c.conj() * mono(k, j)
                }
            })
            .sum()
    }
}

struct DensePolarization {
    psi: DMatrix<Complex64>,
    mixed: DMatrix<Complex64>,
}

/// Quadrature weights on the `Ω` mask: a product of 1-D rules along the row
/// and column runs through each point. Runs of at least `2·GREGORY_ORDER`
/// intervals get Gregory end corrections; shorter runs fall back to trapezoid.
fn mask_weights(grid: &ComplexGrid, omega: &[bool]) -> Vec<f64> {
    let (re, im) = grid.axes(0);
    let (nr, ni) = (re.count, im.count);
    let idx = |i: usize, j: usize| grid.flatten(&[i, j]);
    let mut wr = vec![0.0; grid.len()];
    let mut wi = vec![0.0; grid.len()];
    let fill = |len: usize, h: f64| -> Vec<f64> {
        match len {
            0 => vec![],
            1 => vec![h],
            n if n - 1 >= 2 * GREGORY_ORDER => lattice_weights(n - 1, h),
            n => {
                let mut w = vec![h; n];
                w[0] *= 0.5;
                w[n - 1] *= 0.5;
                w
            }
        }
    };
    for j in 0..ni {
        let mut i = 0;
        while i < nr {
            if !omega[idx(i, j)] {
                i += 1;
                continue;
            }
            let start = i;
            while i < nr && omega[idx(i, j)] {
                i += 1;
            }
            for (o, w) in fill(i - start, re.spacing).into_iter().enumerate() {
                wr[idx(start + o, j)] = w;
            }
        }
    }
    for i in 0..nr {
        let mut j = 0;
        while j < ni {
            if !omega[idx(i, j)] {
                j += 1;
                continue;
            }
            let start = j;
            while j < ni && omega[idx(i, j)] {
                j += 1;
            }
            for (o, w) in fill(j - start, im.spacing).into_iter().enumerate() {
                wi[idx(i, start + o)] = w;
            }
        }
    }
    wr.iter().zip(&wi).map(|(a, b)| a * b).collect()
}

/// A polynomial symbol bound to a weight, a domain and a polarization.
#[derive(Debug, Clone)]
pub struct RealizationOp {
    pub symbol: RealSymbol,
    pub weight: WeightFunction,
    pub domain: DomainSpec,
    /// Declared order `θ`: no term may carry `λ^p` with `p > θ`.
    pub order: f64,
    polarization: Polarization,
    quad: Vec<f64>,
}

impl RealizationOp {
    /// Polarizes `weight` (closed form when it is the untouched `Φ₀`, Taylor fit otherwise).
    pub fn new(symbol: RealSymbol, weight: WeightFunction, domain: DomainSpec, order: f64) -> Result<Self> {
        let grid = weight.grid().clone();
        if domain.omega.len() != grid.len() {
            return Err(RealizationError::Incompatible);
        }
        let is_phi0 = (0..grid.len()).all(|p| weight.values()[p] == grid.phi0(p));
        let polarization = if is_phi0 {
            Polarization::standard()
        } else {
            let center = domain_center(&grid, &domain.omega);
            Polarization::fit(&weight, &domain.omega, center)?
        };
        Self::with_polarization(symbol, weight, domain, order, polarization)
    }

    pub fn with_polarization(
        symbol: RealSymbol,
        weight: WeightFunction,
        domain: DomainSpec,
        order: f64,
        polarization: Polarization,
    ) -> Result<Self> {
        check_symbol(&symbol, order)?;
        let quad = mask_weights(weight.grid(), &domain.omega);
        Ok(Self {
            symbol,
            weight,
            domain,
            order,
            polarization,
            quad,
        })
    }

    /// Same weight, domain and polarization with another symbol.
    pub fn with_symbol(&self, symbol: RealSymbol, order: f64) -> Result<Self> {
        check_symbol(&symbol, order)?;
        Ok(Self {
            symbol,
            order,
            ..self.clone()
        })
    }

    /// `Φ₀` on the box `[−a, a]²` with `Ω` the whole box and `Ω₁` the box of
    /// half-width `inner`; spacing chosen so that `λ_max·h² ≤ resolution`.
    pub fn standard(symbol: RealSymbol, order: f64, a: f64, inner: f64, lambda_max: f64, resolution: f64) -> Result<Self> {
        if !(a > 0.0 && inner > 0.0 && inner < a && lambda_max >= 1.0 && resolution > 0.0) {
            return Err(RealizationError::BadParameter(format!(
                "standard box a={a}, inner={inner}, λ_max={lambda_max}, resolution={resolution}"
            )));
        }
        let h = (resolution / lambda_max).sqrt();
        let n = ((2.0 * a / h).ceil() as usize + 1).max(2 * GREGORY_ORDER + 1);
        let axis = Axis::span(-a, a, n).map_err(|e| RealizationError::BadParameter(e.to_string()))?;
        let grid = ComplexGrid::one_dim(axis, axis).map_err(|e| RealizationError::BadParameter(e.to_string()))?;
        let weight = WeightFunction::phi0(&grid)?;
        let omega = vec![true; grid.len()];
        let omega1 = grid.box_mask(&[-inner, -inner], &[inner, inner]);
        let domain = DomainSpec::new(&grid, omega, omega1)?;
        Self::with_polarization(symbol, weight, domain, order, Polarization::standard())
    }

    pub fn grid(&self) -> &ComplexGrid {
        self.weight.grid()
    }

    pub fn polarization(&self) -> &Polarization {
        &self.polarization
    }

    /// Quadrature weight of each grid point (zero off `Ω`).
    pub fn quadrature(&self) -> &[f64] {
        &self.quad
    }

    fn same_setting(&self, other: &Self) -> bool {
        self.grid() == other.grid()
            && self.domain == other.domain
            && self.weight.values() == other.weight.values()
            && self.polarization == other.polarization
    }

    fn check_lambda(&self, lambda: f64) -> Result<()> {
        if !(lambda >= 1.0) || !lambda.is_finite() {
            return Err(RealizationError::BadParameter(format!("λ = {lambda} must be ≥ 1")));
        }
        let (re, im) = self.grid().axes(0);
        let h = re.spacing.max(im.spacing);
        let value = lambda * h * h;
        if value > RESOLUTION_LIMIT {
            return Err(RealizationError::Resolution {
                lambda,
                value,
                limit: RESOLUTION_LIMIT,
            });
        }
        Ok(())
    }

    fn check_len(&self, u: &[Complex64]) -> Result<()> {
        if u.len() != self.grid().len() {
            return Err(RealizationError::SampleLength {
                expected: self.grid().len(),
                found: u.len(),
            });
        }
        Ok(())
    }

    /// Weighted norm `‖u‖_{Φ + s·d²}` of reduced samples.
    pub fn norm(&self, u: &[Complex64], lambda: f64, s: f64) -> f64 {
        self.quad
            .iter()
            .zip(u)
            .zip(&self.domain.d)
            .filter(|((&w, _), _)| w != 0.0)
            .map(|((&w, v), &d)| w * v.norm_sqr() * (-2.0 * lambda * s * d * d).exp())
            .sum::<f64>()
            .sqrt()
    }

    /// Weighted inner product `⟨u, v⟩_Φ = ∫_Ω u v̄ e^{−2λΦ}` of reduced samples.
    pub fn inner(&self, u: &[Complex64], v: &[Complex64]) -> Complex64 {
        self.quad
            .iter()
            .zip(u.iter().zip(v))
            .map(|(&w, (a, b))| a * b.conj() * w)
            .sum()
    }

    /// Reduced coherent state `exp(2λψ(x, z̄) − λΦ(x) − λΦ(z))`.
    pub fn coherent_state(&self, z: Complex64, lambda: f64) -> Vec<Complex64> {
        let phi_z = self.polarization.eval(z, z.conj()).re;
        let grid = self.grid();
        (0..grid.len())
            .map(|p| {
                let x = grid.point(p)[0];
                (2.0 * lambda * self.polarization.eval(x, z.conj()) - lambda * self.weight.values()[p] - lambda * phi_z).exp()
            })
            .collect()
    }
}

fn check_symbol(symbol: &RealSymbol, order: f64) -> Result<()> {
    if !symbol.is_finite() || !order.is_finite() {
        return Err(RealizationError::NonFiniteSymbol);
    }
    if let Some(p) = symbol.lambda_order() {
        if p as f64 > order {
            return Err(RealizationError::OrderExceeded { order, found: p });
        }
    }
    Ok(())
}

fn domain_center(grid: &ComplexGrid, omega: &[bool]) -> Complex64 {
    let (sum, n) = (0..grid.len())
        .filter(|&p| omega[p])
        .fold((Complex64::new(0.0, 0.0), 0usize), |(s, n), p| (s + grid.point(p)[0], n + 1));
    sum / n.max(1) as f64
}

/// Applies `op` to reduced samples; the output is reduced and defined at every grid point.
pub fn realize_apply(op: &RealizationOp, u: &[Complex64], lambda: f64) -> Result<Vec<Complex64>> {
    let mut out = realize_apply_many(op, &[u.to_vec()], lambda)?;
    Ok(out.pop().expect("one input"))
}

/// Applies `op` to several inputs, evaluating each kernel entry once.
pub fn realize_apply_many(op: &RealizationOp, us: &[Vec<Complex64>], lambda: f64) -> Result<Vec<Vec<Complex64>>> {
    op.check_lambda(lambda)?;
    for u in us {
        op.check_len(u)?;
    }
    let grid = op.grid();
    let n = grid.len();
    if op.symbol.is_zero() || us.is_empty() {
        return Ok(vec![vec![Complex64::new(0.0, 0.0); n]; us.len()]);
    }
    let points: Vec<Complex64> = (0..n).map(|p| grid.point(p)[0]).collect();
    let phi = op.weight.values();
    let sources: Vec<usize> = (0..n).filter(|&p| op.quad[p] != 0.0).collect();
    let pre = lambda / std::f64::consts::PI;
    let pol = op.polarization.dense();
    let sym = op.symbol.dense(lambda);
    let c0 = Complex64::new(op.polarization.center.0, op.polarization.center.1).conj();
    // Per source: powers of w − x̄₀ and of w, for the polarization and the symbol.
    let src: Vec<(Vec<Complex64>, Vec<Complex64>)> = sources
        .iter()
        .map(|&q| {
            let w = points[q].conj();
            (powers(w - c0, pol.psi.ncols()), powers(w, sym.ncols()))
        })
        .collect();
    let rows: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|p| {
            let x = points[p];
            let dx = powers(x - c0.conj(), pol.psi.nrows());
            let psi_k = contract(&pol.psi, &dx);
            let mix_k = contract(&pol.mixed, &dx);
            let sym_b = contract(&sym, &powers(x, sym.nrows()));
            let mut acc = vec![Complex64::new(0.0, 0.0); us.len()];
            for (s, &q) in sources.iter().enumerate() {
                let (dw, w) = &src[s];
                let expo = 2.0 * lambda * dot(&psi_k, dw) - lambda * (phi[p] + phi[q]);
                if expo.re < -745.0 {
                    continue;
                }
                let k = expo.exp() * dot(&sym_b, w) * (2.0 * dot(&mix_k, dw)) * op.quad[q];
                for (a, u) in acc.iter_mut().zip(us) {
                    *a += k * u[q];
                }
            }
            acc.iter().map(|a| a * pre).collect()
        })
        .collect();
    Ok((0..us.len()).map(|i| rows.iter().map(|r| r[i]).collect()).collect())
}

fn powers(z: Complex64, n: usize) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(n);
    let mut acc = Complex64::new(1.0, 0.0);
    for _ in 0..n {
        out.push(acc);
        acc *= z;
    }
    out
}

/// `v_k = Σ_j m_{jk} a_j`.
fn contract(m: &DMatrix<Complex64>, a: &[Complex64]) -> Vec<Complex64> {
    (0..m.ncols())
        .map(|k| (0..m.nrows()).map(|j| m[(j, k)] * a[j]).sum())
        .collect()
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Coherent-state centers spread over `Ω₁`: a `side × side` lattice,
/// truncated to `count` points, all snapped to grid points inside `Ω₁`.
pub fn coherent_battery(op: &RealizationOp, count: usize) -> Result<Vec<Complex64>> {
    if count == 0 {
        return Err(RealizationError::Empty("battery"));
    }
    let grid = op.grid();
    let inner: Vec<Complex64> = (0..grid.len())
        .filter(|&p| op.domain.omega1[p])
        .map(|p| grid.point(p)[0])
        .collect();
    if inner.is_empty() {
        return Err(RealizationError::Empty("omega1"));
    }
    let (lo, hi) = inner.iter().fold(
        ((f64::INFINITY, f64::INFINITY), (f64::NEG_INFINITY, f64::NEG_INFINITY)),
        |(l, h), z| ((l.0.min(z.re), l.1.min(z.im)), (h.0.max(z.re), h.1.max(z.im))),
    );
    let side = (count as f64).sqrt().ceil() as usize;
    let at = |k: usize, a: f64, b: f64| if side == 1 { 0.5 * (a + b) } else { a + (b - a) * k as f64 / (side - 1) as f64 };
    let mut out = Vec::with_capacity(count);
    'outer: for j in 0..side {
        for i in 0..side {
            if out.len() == count {
                break 'outer;
            }
            let target = Complex64::new(at(i, lo.0, hi.0), at(j, lo.1, hi.1));
            let nearest = inner
                .iter()
                .min_by(|a, b| (*a - target).norm().total_cmp(&(*b - target).norm()))
                .expect("non-empty");
            out.push(*nearest);
        }
    }
    Ok(out)
}

/// Identity-defect measurements at one `λ`.
#[derive(Debug, Clone, Serialize)]
pub struct DefectAtLambda {
    pub lambda: f64,
    /// `max ‖I^Ωu − u‖_{Φ−d²/C} / ‖u‖_{Φ+d²/C}` over the battery.
    pub worst_ratio: f64,
    /// Scalar `s` minimizing `Σ‖s·I^Ωu − u‖²_Φ` over `Ω₁`; one for a perfect identity.
    pub best_scale: f64,
    /// `exp(λ·max d²/C)`: the factor by which the `Φ − d²/C` norm inflates
    /// rounding errors. Ratios are only meaningful while this times machine
    /// epsilon stays well below them.
    pub amplification: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityDefectReport {
    pub c: f64,
    pub centers: Vec<(f64, f64)>,
    pub per_lambda: Vec<DefectAtLambda>,
    /// Measured `C′`: the largest ratio across the ladder.
    pub c_prime: f64,
    /// Least-squares slope of `log(ratio)` against `log λ`.
    pub growth_slope: f64,
}

/// Measures the identity defect of the constant symbol on coherent states.
pub fn identity_defect(op: &RealizationOp, centers: &[Complex64], ladder: &[f64], c: f64) -> Result<IdentityDefectReport> {
    if centers.is_empty() || ladder.is_empty() {
        return Err(RealizationError::Empty("battery or ladder"));
    }
    if !(c > 0.0) {
        return Err(RealizationError::BadParameter(format!("C = {c} must be positive")));
    }
    let id = op.with_symbol(RealSymbol::identity(), 0.0)?;
    let inner_mask = &op.domain.omega1;
    let d_max = op.domain.d.iter().fold(0.0f64, |m, &d| m.max(d));
    let mut per = Vec::with_capacity(ladder.len());
    for &lambda in ladder {
        let us: Vec<Vec<Complex64>> = centers.iter().map(|&z| id.coherent_state(z, lambda)).collect();
        let ius = realize_apply_many(&id, &us, lambda)?;
        let mut worst = 0.0f64;
        let (mut num, mut den) = (0.0, 0.0);
        for (u, iu) in us.iter().zip(&ius) {
            let diff: Vec<Complex64> = iu.iter().zip(u).map(|(a, b)| a - b).collect();
            worst = worst.max(id.norm(&diff, lambda, -1.0 / c) / id.norm(u, lambda, 1.0 / c));
            for p in 0..u.len() {
                if inner_mask[p] {
                    let w = id.quad[p];
                    num += w * (iu[p] * u[p].conj()).re;
                    den += w * iu[p].norm_sqr();
                }
            }
        }
        per.push(DefectAtLambda {
            lambda,
            worst_ratio: worst,
            best_scale: if den > 0.0 { num / den } else { f64::NAN },
            amplification: (lambda * d_max * d_max / c).exp(),
        });
    }
    let c_prime = per.iter().map(|d| d.worst_ratio).fold(0.0, f64::max);
    let growth_slope = log_slope(per.iter().map(|d| (d.lambda, d.worst_ratio)));
    Ok(IdentityDefectReport {
        c,
        centers: centers.iter().map(|z| (z.re, z.im)).collect(),
        per_lambda: per,
        c_prime,
        growth_slope,
    })
}

/// Least-squares slope of `log y` against `log x`; zero when fewer than two usable points.
pub fn log_slope(points: impl Iterator<Item = (f64, f64)>) -> f64 {
    let pts: Vec<(f64, f64)> = points
        .filter(|&(x, y)| x > 0.0 && y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return 0.0;
    }
    pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx
}

/// Symbol of `Q₁∘Q₂` through `λ^{−max_order}`:
/// `Σ_l (κ/λ)^l/l! · ∂_w^l q₁ · ∂_x^l q₂` with `κ = 1/(2∂ₓ∂_wψ)` at the
/// expansion point (exact for quadratic weights).
pub fn composition_symbol(q1: &RealSymbol, q2: &RealSymbol, kappa: Complex64, max_order: usize) -> Result<RealSymbol> {
    let mut out = RealSymbol::zero();
    let (mut a, mut b) = (q1.clone(), q2.clone());
    let mut fact = 1.0;
    for l in 0..=max_order {
        if l > 0 {
            a = a.d_w();
            b = b.d_x();
            fact *= l as f64;
        }
        if a.is_zero() || b.is_zero() {
            break;
        }
        let term = a.mul(&b).scale(kappa.powu(l as u32) / fact).times_lambda_pow(-(l as i32));
        if !term.is_finite() {
            return Err(RealizationError::ExpansionOverflow(l));
        }
        out = out.add(&term);
    }
    Ok(out)
}

/// `κ = 1/(2∂ₓ∂_wψ)` at the polarization center.
pub fn commutator_scale(op: &RealizationOp) -> Complex64 {
    let c = Complex64::new(op.polarization.center.0, op.polarization.center.1);
    1.0 / (2.0 * op.polarization.mixed(c, c.conj()))
}

/// `‖(Q₁^Ω∘Q₂^Ω − (Q₁∘Q₂)^Ω)u‖_{Φ−d²/C} / ‖u‖_{Φ+d²/C}`, with the composed
/// symbol truncated at order `λ⁻¹`.
pub fn compose_defect(q1: &RealizationOp, q2: &RealizationOp, u: &[Complex64], lambda: f64, c: f64) -> Result<f64> {
    Ok(compose_defects(q1, q2, &[u.to_vec()], lambda, c)?[0])
}

/// [`compose_defect`] for a batch of inputs sharing each kernel pass.
pub fn compose_defects(q1: &RealizationOp, q2: &RealizationOp, us: &[Vec<Complex64>], lambda: f64, c: f64) -> Result<Vec<f64>> {
    if !q1.same_setting(q2) {
        return Err(RealizationError::Incompatible);
    }
    if q1.order > 0.0 || q2.order > 0.0 {
        return Err(RealizationError::CompositionOrder(q1.order, q2.order));
    }
    if !(c > 0.0) {
        return Err(RealizationError::BadParameter(format!("C = {c} must be positive")));
    }
    let mut dens = Vec::with_capacity(us.len());
    for u in us {
        q1.check_len(u)?;
        let den = q1.norm(u, lambda, 1.0 / c);
        if den == 0.0 {
            return Err(RealizationError::Empty("input has zero norm"));
        }
        dens.push(den);
    }
    let sym = composition_symbol(&q1.symbol, &q2.symbol, commutator_scale(q1), 1)?;
    let q12 = q1.with_symbol(sym, q1.order + q2.order)?;
    let vs = realize_apply_many(q2, us, lambda)?;
    let twos = realize_apply_many(q1, &vs, lambda)?;
    let ones = realize_apply_many(&q12, us, lambda)?;
    Ok(twos
        .iter()
        .zip(&ones)
        .zip(&dens)
        .map(|((two, one), den)| {
            let diff: Vec<Complex64> = two.iter().zip(one).map(|(a, b)| a - b).collect();
            q1.norm(&diff, lambda, -1.0 / c) / den
        })
        .collect())
}

/// Relative asymmetry `|⟨Qu, v⟩ − ⟨u, Qv⟩| / (‖Qu‖‖v‖ + ‖u‖‖Qv‖)`.
pub fn self_adjoint_defect(op: &RealizationOp, u: &[Complex64], v: &[Complex64], lambda: f64) -> Result<f64> {
    let out = realize_apply_many(op, &[u.to_vec(), v.to_vec()], lambda)?;
    let (qu, qv) = (&out[0], &out[1]);
    let lhs = op.inner(qu, v);
    let rhs = op.inner(u, qv);
    let scale = op.norm(qu, lambda, 0.0) * op.norm(v, lambda, 0.0) + op.norm(u, lambda, 0.0) * op.norm(qv, lambda, 0.0);
    Ok(if scale == 0.0 { 0.0 } else { (lhs - rhs).norm() / scale })
}

/// `max ‖Q^Ωu‖_Φ / ‖u‖_Φ` over coherent states at each `λ`.
pub fn norm_ratios(op: &RealizationOp, centers: &[Complex64], ladder: &[f64]) -> Result<Vec<(f64, f64)>> {
    ladder
        .iter()
        .map(|&lambda| {
            let us: Vec<Vec<Complex64>> = centers.iter().map(|&z| op.coherent_state(z, lambda)).collect();
            let qus = realize_apply_many(op, &us, lambda)?;
            let worst = us
                .iter()
                .zip(&qus)
                .map(|(u, qu)| op.norm(qu, lambda, 0.0) / op.norm(u, lambda, 0.0))
                .fold(0.0, f64::max);
            Ok((lambda, worst))
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct EllipticAtLambda {
    pub lambda: f64,
    /// `min (‖u‖_{Φ̃} + ‖Q^Ωu‖_Φ) / ‖u‖_Φ` over the battery.
    pub worst_ratio: f64,
    /// `c₀ − κ·λ^{−1/2}` with the fitted `κ`.
    pub corrected_floor: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EllipticReport {
    pub c0: f64,
    pub c: f64,
    /// Smallest `|q₀(x, x̄)|` over `Ω`.
    pub symbol_floor: f64,
    pub per_lambda: Vec<EllipticAtLambda>,
    /// Measured lower-bound constant: the worst ratio across the ladder.
    pub measured_c: f64,
    /// Smallest `κ ≥ 0` with `ratio ≥ c₀ − κλ^{−1/2}` on every rung.
    pub kappa: f64,
}

/// Checks `‖u‖_{Φ̃} + ‖Q^Ωu‖_Φ ≥ C‖u‖_Φ`, `Φ̃ = Φ + d²/C_w`, on coherent states.
pub fn elliptic_lower_bound(
    q: &RealizationOp,
    c0: f64,
    centers: &[Complex64],
    ladder: &[f64],
    c_weight: f64,
) -> Result<EllipticReport> {
    if centers.is_empty() || ladder.is_empty() {
        return Err(RealizationError::Empty("battery or ladder"));
    }
    if !(c0 > 0.0 && c_weight > 0.0) {
        return Err(RealizationError::BadParameter(format!("c0 = {c0}, C = {c_weight}")));
    }
    let order = q.symbol.lambda_order().unwrap_or(0);
    let principal = q.symbol.at_order(order.max(0));
    let grid = q.grid();
    let mut floor = (f64::INFINITY, Complex64::new(0.0, 0.0));
    for p in 0..grid.len() {
        if q.domain.omega[p] {
            let x = grid.point(p)[0];
            let v = principal.eval(x, x.conj(), 1.0).norm();
            if v < floor.0 {
                floor = (v, x);
            }
        }
    }
    if floor.0 < c0 {
        return Err(RealizationError::NotElliptic {
            min: floor.0,
            c0,
            at: floor.1,
        });
    }
    let mut rows = Vec::with_capacity(ladder.len());
    for &lambda in ladder {
        let us: Vec<Vec<Complex64>> = centers.iter().map(|&z| q.coherent_state(z, lambda)).collect();
        let qus = realize_apply_many(q, &us, lambda)?;
        let worst = us
            .iter()
            .zip(&qus)
            .map(|(u, qu)| (q.norm(u, lambda, 1.0 / c_weight) + q.norm(qu, lambda, 0.0)) / q.norm(u, lambda, 0.0))
            .fold(f64::INFINITY, f64::min);
        rows.push((lambda, worst));
    }
    let kappa = rows
        .iter()
        .map(|&(l, r)| (c0 - r) * l.sqrt())
        .fold(0.0, f64::max);
    let per_lambda = rows
        .iter()
        .map(|&(lambda, worst_ratio)| EllipticAtLambda {
            lambda,
            worst_ratio,
            corrected_floor: c0 - kappa / lambda.sqrt(),
        })
        .collect::<Vec<_>>();
    let measured_c = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    Ok(EllipticReport {
        c0,
        c: c_weight,
        symbol_floor: floor.0,
        per_lambda,
        measured_c,
        kappa,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::parse_symbol;

    #[test]
    fn symbol_algebra() {
        let q = RealSymbol::from_poly(&parse_symbol("x1*xi1 + 2*xi1^2", Some(1)).unwrap()).unwrap();
        assert_eq!(q.eval(Complex64::new(2.0, 0.0), Complex64::new(3.0, 0.0), 5.0), Complex64::new(24.0, 0.0));
        assert_eq!(q.d_w().eval(Complex64::new(2.0, 0.0), Complex64::new(1.0, 0.0), 1.0), Complex64::new(6.0, 0.0));
        assert!(RealSymbol::x().add(&RealSymbol::w()).is_hermitian());
        assert!(!RealSymbol::x().is_hermitian());
        assert_eq!(RealSymbol::x().times_lambda_pow(-1).lambda_order(), Some(-1));
    }

    #[test]
    fn composition_of_w_after_x_gains_a_commutator() {
        let s = composition_symbol(&RealSymbol::w(), &RealSymbol::x(), Complex64::new(2.0, 0.0), 1).unwrap();
        let want = RealSymbol::x().mul(&RealSymbol::w()).plus_term(Complex64::new(2.0, 0.0), -1, 0, 0);
        assert_eq!(s, want);
        let s = composition_symbol(&RealSymbol::x(), &RealSymbol::w(), Complex64::new(2.0, 0.0), 1).unwrap();
        assert_eq!(s, RealSymbol::x().mul(&RealSymbol::w()));
    }

    #[test]
    fn standard_polarization_restricts_to_phi0() {
        let p = Polarization::standard();
        let x = Complex64::new(0.3, -0.7);
        assert!((p.eval(x, x.conj()).re - 0.5 * 0.49).abs() < 1e-15);
        assert!(p.eval(x, x.conj()).im.abs() < 1e-15);
        assert!((p.mixed(x, x.conj()) - Complex64::new(0.25, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn fitted_polarization_of_phi0_is_exact() {
        let a = Axis::span(-1.0, 1.0, 9).unwrap();
        let g = ComplexGrid::one_dim(a, a).unwrap();
        let w = WeightFunction::phi0(&g).unwrap();
        let omega = vec![true; g.len()];
        let p = Polarization::fit(&w, &omega, Complex64::new(0.1, 0.2)).unwrap();
        assert!(p.exact && p.degree == 2, "{p:?}");
        let std = Polarization::standard();
        let (x, y) = (Complex64::new(0.4, 0.1), Complex64::new(-0.3, 0.5));
        assert!((p.eval(x, y) - std.eval(x, y)).norm() < 1e-10);
    }

    #[test]
    fn box_weights_integrate_polynomials() {
        let a = Axis::span(-1.0, 1.0, 41).unwrap();
        let g = ComplexGrid::one_dim(a, a).unwrap();
        let w = mask_weights(&g, &vec![true; g.len()]);
        let total: f64 = (0..g.len())
            .map(|p| {
                let x = g.point(p)[0];
                w[p] * x.re.powi(6) * x.im.powi(2)
            })
            .sum();
        assert!((total - (2.0 / 7.0) * (2.0 / 3.0)).abs() < 1e-12);
    }
}
