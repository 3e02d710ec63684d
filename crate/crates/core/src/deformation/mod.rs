//! Hamilton–Jacobi deformation `2∂ₜΦ = h(x, (2/i)∂ₓΦ)` of weights on one
//! complex dimension, and the monotonicity `Φₜ ≥ Φ₀` it implies for `h ≥ 0`.
//!
//! A point `x = x′ + ix″` carries `ξ = (2/i)∂ₓΦ = −∂_{x″}Φ − i∂_{x′}Φ`. A
//! generator given on the real phase space `(y, η)` acts through the inverse
//! of `(y, η) ↦ (y − iη, η)`, i.e. at `(x + iξ, ξ)`; on `Λ_{Φ₀}` this is the
//! real point `(x′, −x″)`. The real part of `h` drives `Φ`.

use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::fbi::{ComplexGrid, FbiError};
use crate::symbolic::PolySymbol;

#[derive(Debug, Error)]
pub enum DeformError {
    #[error("weights need a one-dimensional complex grid, got dimension {0}")]
    GridDimension(usize),
    #[error("grid needs at least 3 points per axis")]
    GridTooSmall,
    #[error("time {t} outside [0, {t_max}]")]
    TimeOutOfRange { t: f64, t_max: f64 },
    #[error("lambda must be ≥ 1, got {0}")]
    BadLambda(f64),
    #[error("generator is negative ({value:.3e}) at ({y}, {eta})")]
    NegativeGenerator { y: f64, eta: f64, value: f64 },
    #[error("generator must be a symbol in one x and one ξ variable, got dimension {0}")]
    GeneratorDimension(usize),
    #[error("unstable integration at step {step}: {reason}")]
    Unstable { step: usize, reason: String },
    #[error("monotonicity violated: min(Φₜ − Φ₀) = {min_gap:.3e} below −{tol:.1e}")]
    MonotonicityViolated { min_gap: f64, tol: f64 },
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("weights live on different grids")]
    GridMismatch,
    #[error(transparent)]
    Fbi(#[from] FbiError),
}

pub type Result<T> = std::result::Result<T, DeformError>;

/// Sampled real weight on a one-dimensional complex grid at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightFunction {
    grid: ComplexGrid,
    values: Vec<f64>,
    t: f64,
    /// `λ` and the generator prefactor the weight was built with.
    lambda_scaling: Option<LambdaScaling>,
    base: Arc<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaScaling {
    pub lambda: f64,
    pub prefactor: f64,
}

impl WeightFunction {
    /// `Φ₀ = x″²/2` sampled on `grid`.
    pub fn phi0(grid: &ComplexGrid) -> Result<Self> {
        check_grid(grid)?;
        let values: Vec<f64> = (0..grid.len()).map(|p| grid.phi0(p)).collect();
        Ok(Self {
            grid: grid.clone(),
            base: Arc::new(values.clone()),
            values,
            t: 0.0,
            lambda_scaling: None,
        })
    }

    /// A time-zero weight from arbitrary finite samples.
    pub fn from_samples(grid: &ComplexGrid, values: Vec<f64>) -> Result<Self> {
        check_grid(grid)?;
        if values.len() != grid.len() {
            return Err(FbiError::DimensionMismatch {
                expected: grid.len(),
                found: values.len(),
            }
            .into());
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FbiError::NonFinite.into());
        }
        Ok(Self {
            grid: grid.clone(),
            base: Arc::new(values.clone()),
            values,
            t: 0.0,
            lambda_scaling: None,
        })
    }

    pub fn grid(&self) -> &ComplexGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn lambda_scaling(&self) -> Option<LambdaScaling> {
        self.lambda_scaling
    }

    /// Samples of the weight this one was deformed from.
    pub fn base(&self) -> &[f64] {
        &self.base
    }

    /// `(∂_{x′}Φ, ∂_{x″}Φ)` at every point: centered differences inside,
    /// second-order one-sided differences on the edges.
    pub fn gradient(&self) -> Vec<(f64, f64)> {
        gradient(&self.grid, &self.values)
    }

    /// `ξ = −∂_{x″}Φ − i∂_{x′}Φ` at every point.
    pub fn xi(&self) -> Vec<Complex64> {
        self.gradient()
            .into_iter()
            .map(|(gr, gi)| Complex64::new(-gi, -gr))
            .collect()
    }

    /// CSV with columns `x_re,x_im,t,lambda,phi,phi0`.
    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["x_re", "x_im", "t", "lambda", "phi", "phi0"])?;
        let lambda = self.lambda_scaling.map_or(f64::NAN, |s| s.lambda);
        for p in 0..self.grid.len() {
            let x = self.grid.point(p)[0];
            out.write_record(&[
                x.re.to_string(),
                x.im.to_string(),
                self.t.to_string(),
                lambda.to_string(),
                self.values[p].to_string(),
                self.base[p].to_string(),
            ])?;
        }
        out.flush()
    }
}

fn check_grid(grid: &ComplexGrid) -> Result<()> {
    if grid.dim() != 1 {
        return Err(DeformError::GridDimension(grid.dim()));
    }
    let (re, im) = grid.axes(0);
    if re.count < 3 || im.count < 3 {
        return Err(DeformError::GridTooSmall);
    }
    Ok(())
}

fn gradient(grid: &ComplexGrid, v: &[f64]) -> Vec<(f64, f64)> {
    let (re, im) = grid.axes(0);
    let (n_re, n_im) = (re.count, im.count);
    let d = |get: &dyn Fn(usize) -> f64, i: usize, n: usize, h: f64| -> f64 {
        if i == 0 {
            (-3.0 * get(0) + 4.0 * get(1) - get(2)) / (2.0 * h)
        } else if i == n - 1 {
            (3.0 * get(n - 1) - 4.0 * get(n - 2) + get(n - 3)) / (2.0 * h)
        } else {
            (get(i + 1) - get(i - 1)) / (2.0 * h)
        }
    };
    (0..grid.len())
        .into_par_iter()
        .map(|p| {
            let (a, b) = (p / n_im, p % n_im);
            let g_re = d(&|i| v[i * n_im + b], a, n_re, re.spacing);
            let g_im = d(&|j| v[a * n_im + j], b, n_im, im.spacing);
            (g_re, g_im)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorKind {
    /// `(y − y₀)² + (η − η₀)²`.
    QuadraticCenter,
    /// A user symbol `h(y, η)` in one `x` and one `ξ` variable.
    Polynomial(PolySymbol),
}

/// `h = c_λ·h₁` with `c_λ = λ^{−(r−1)/r}` when `r` is set, else `c_λ = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationGenerator {
    pub kind: GeneratorKind,
    /// Real phase-space center `(y₀, η₀)`.
    pub center: (f64, f64),
    pub r: Option<u32>,
}

impl DeformationGenerator {
    pub fn quadratic(center: (f64, f64), r: u32) -> Self {
        Self {
            kind: GeneratorKind::QuadraticCenter,
            center,
            r: Some(r),
        }
    }

    pub fn polynomial(h: PolySymbol, r: Option<u32>) -> Result<Self> {
        if h.dim() != 1 {
            return Err(DeformError::GeneratorDimension(h.dim()));
        }
        Ok(Self {
            kind: GeneratorKind::Polynomial(h),
            center: (0.0, 0.0),
            r,
        })
    }

    pub fn prefactor(&self, lambda: f64) -> f64 {
        match self.r {
            Some(r) if r >= 1 => lambda.powf(-((r - 1) as f64) / r as f64),
            _ => 1.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(&self.kind, GeneratorKind::Polynomial(h) if h.is_zero())
    }

    /// Unscaled `h₁` at a complex phase-space point `(y, η)`.
    pub fn eval(&self, y: Complex64, eta: Complex64) -> Complex64 {
        match &self.kind {
            GeneratorKind::QuadraticCenter => {
                let a = y - self.center.0;
                let b = eta - self.center.1;
                a * a + b * b
            }
            GeneratorKind::Polynomial(h) => h.eval_complex(&[y, eta]),
        }
    }

    /// `∂h₁/∂η` at `(y, η)`.
    pub fn d_eta(&self, y: Complex64, eta: Complex64) -> Complex64 {
        match &self.kind {
            GeneratorKind::QuadraticCenter => 2.0 * (eta - self.center.1),
            GeneratorKind::Polynomial(h) => h.d_dxi(0).eval_complex(&[y, eta]),
        }
    }

    /// `∂h₁/∂y` at `(y, η)`.
    pub fn d_y(&self, y: Complex64, eta: Complex64) -> Complex64 {
        match &self.kind {
            GeneratorKind::QuadraticCenter => 2.0 * (y - self.center.0),
            GeneratorKind::Polynomial(h) => h.d_dx(0).eval_complex(&[y, eta]),
        }
    }

    /// `h` acting at `x` with fibre variable `ξ`, through `y = x + iξ, η = ξ`.
    pub fn on_weight(&self, x: Complex64, xi: Complex64, lambda: f64) -> Complex64 {
        self.prefactor(lambda) * self.eval(x + Complex64::i() * xi, xi)
    }

    /// `h|_{Λ_{Φ₀}}` at the grid point `x`: the real value `h(x′, −x″)`.
    pub fn on_base(&self, x: Complex64, lambda: f64) -> f64 {
        self.prefactor(lambda) * self.eval(Complex64::new(x.re, 0.0), Complex64::new(-x.im, 0.0)).re
    }

    /// Rejects generators that are negative somewhere on `Λ_{Φ₀}` over the grid.
    pub fn check_nonnegative(&self, grid: &ComplexGrid) -> Result<()> {
        for p in 0..grid.len() {
            let x = grid.point(p)[0];
            let v = self.on_base(x, 1.0);
            if v < -1e-12 {
                return Err(DeformError::NegativeGenerator {
                    y: x.re,
                    eta: -x.im,
                    value: v,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeformOptions {
    /// `dt ≤ cfl · min spacing² / max|∂h/∂ξ|`.
    pub cfl: f64,
    pub min_steps: usize,
    pub t_max: f64,
}

impl Default for DeformOptions {
    fn default() -> Self {
        Self {
            cfl: 0.25,
            min_steps: 200,
            t_max: 0.25,
        }
    }
}

/// Result of one integration.
#[derive(Debug, Clone)]
pub struct Deformation {
    pub weight: WeightFunction,
    /// `h|_{Λ_{Φ₀}}` samples, including the `λ` prefactor.
    pub h_base: Vec<f64>,
    /// `½∫₀ᵗ Re h(x, ξ(Φ_s)) ds` by the trapezoid rule in time.
    pub h_integral: Vec<f64>,
    /// Second-order Taylor solution in `t`, for the quadratic generator.
    pub series: Option<Vec<f64>>,
    pub steps: usize,
    pub dt: f64,
    /// Largest `|Im h|` met along the path, relative to `max|h|`.
    pub max_rel_imag: f64,
}

/// Integrates from `base` up to time `t`.
pub fn deform_weight(
    base: &WeightFunction,
    gen: &DeformationGenerator,
    t: f64,
    lambda: f64,
    opts: DeformOptions,
) -> Result<Deformation> {
    let mut out = deform_snapshots(base, gen, &[t], lambda, opts)?;
    Ok(out.pop().expect("one snapshot"))
}

/// Integrates once and returns a snapshot at each requested time (sorted
/// ascending). Each snapshot uses the step size chosen for the largest time.
pub fn deform_snapshots(
    base: &WeightFunction,
    gen: &DeformationGenerator,
    times: &[f64],
    lambda: f64,
    opts: DeformOptions,
) -> Result<Vec<Deformation>> {
    check_grid(&base.grid)?;
    if !(lambda >= 1.0) || !lambda.is_finite() {
        return Err(DeformError::BadLambda(lambda));
    }
    for &t in times {
        if !(0.0..=opts.t_max).contains(&t) {
            return Err(DeformError::TimeOutOfRange {
                t,
                t_max: opts.t_max,
            });
        }
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(DeformError::InvalidDomain("snapshot times must be ascending".into()));
    }
    gen.check_nonnegative(&base.grid)?;
    let grid = &base.grid;
    let scaling = LambdaScaling {
        lambda,
        prefactor: gen.prefactor(lambda),
    };
    let h_base: Vec<f64> = (0..grid.len())
        .map(|p| gen.on_base(grid.point(p)[0], lambda))
        .collect();
    let t_end = times.last().copied().unwrap_or(0.0);
    let points: Vec<Complex64> = (0..grid.len()).map(|p| grid.point(p)[0]).collect();

    let rhs = |phi: &[f64]| -> (Vec<f64>, f64, f64, f64) {
        let grad = gradient(grid, phi);
        let vals: Vec<(Complex64, f64)> = points
            .par_iter()
            .zip(grad.par_iter())
            .map(|(&x, &(gr, gi))| {
                let xi = Complex64::new(-gi, -gr);
                let y = x + Complex64::i() * xi;
                let h = scaling.prefactor * gen.eval(y, xi);
                // Speed of the characteristic: |∂h/∂ξ| through y = x + iξ.
                let speed = scaling.prefactor
                    * (gen.d_eta(y, xi) + Complex64::i() * gen.d_y(y, xi)).norm();
                (h, speed)
            })
            .collect();
        let max_h = vals.iter().map(|(h, _)| h.norm()).fold(0.0, f64::max);
        let max_im = vals.iter().map(|(h, _)| h.im.abs()).fold(0.0, f64::max);
        let speed = vals.iter().map(|&(_, s)| s).fold(0.0, f64::max);
        (vals.iter().map(|(h, _)| 0.5 * h.re).collect(), max_h, max_im, speed)
    };

    let (re, im) = grid.axes(0);
    let spacing = re.spacing.min(im.spacing);
    let (rate0, _, _, speed0) = rhs(&base.values);
    let dt_cfl = if speed0 > 0.0 {
        opts.cfl * spacing * spacing / speed0
    } else {
        f64::INFINITY
    };
    let steps_total = if t_end == 0.0 || gen.is_zero() {
        0
    } else {
        ((t_end / dt_cfl).ceil() as usize).max(opts.min_steps)
    };
    let dt = if steps_total == 0 { 0.0 } else { t_end / steps_total as f64 };

    let mut phi = base.values.clone();
    let mut integral = vec![0.0; phi.len()];
    let mut rate = rate0;
    let mut max_rel_imag = 0.0f64;
    let mut out = Vec::with_capacity(times.len());
    let mut step = 0usize;
    let mut last_increment = rate.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let snapshot = |phi: &[f64], integral: &[f64], t: f64, step: usize, rel: f64| Deformation {
        weight: WeightFunction {
            grid: grid.clone(),
            values: if t == 0.0 { base.values.clone() } else { phi.to_vec() },
            t,
            lambda_scaling: Some(scaling),
            base: Arc::clone(&base.base),
        },
        h_base: h_base.clone(),
        h_integral: integral.to_vec(),
        series: quadratic_series(gen, grid, t, lambda, &base.values),
        steps: step,
        dt,
        max_rel_imag: rel,
    };
    for &t in times {
        let target = if dt == 0.0 { 0 } else { (t / dt).round() as usize };
        while step < target {
            let next: Vec<f64> = phi.iter().zip(&rate).map(|(p, r)| p + dt * r).collect();
            let (next_rate, max_h, max_im, _) = rhs(&next);
            if max_h > 0.0 {
                max_rel_imag = max_rel_imag.max(max_im / max_h);
            }
            let inc = next_rate.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if !inc.is_finite() || next.iter().any(|v| !v.is_finite()) {
                return Err(DeformError::Unstable {
                    step,
                    reason: "non-finite weight".into(),
                });
            }
            if last_increment > 0.0 && inc > 1e3 * last_increment.max(1e-300) && inc > 1.0 {
                return Err(DeformError::Unstable {
                    step,
                    reason: format!("rate jumped from {last_increment:.3e} to {inc:.3e}"),
                });
            }
            for ((acc, a), b) in integral.iter_mut().zip(&rate).zip(&next_rate) {
                *acc += 0.5 * dt * (a + b);
            }
            last_increment = inc;
            phi = next;
            rate = next_rate;
            step += 1;
        }
        out.push(snapshot(&phi, &integral, t, step, max_rel_imag));
    }
    Ok(out)
}

/// `Φ₀ + (t/2)h|_{Λ₀} + (t²/4)·{second-order term}` for the quadratic
/// generator on the standard base, from differentiating the flow twice.
fn quadratic_series(
    gen: &DeformationGenerator,
    grid: &ComplexGrid,
    t: f64,
    lambda: f64,
    base: &[f64],
) -> Option<Vec<f64>> {
    if gen.kind != GeneratorKind::QuadraticCenter {
        return None;
    }
    let c = gen.prefactor(lambda);
    // On Φ = Φ₀ + a·H₁: h = c(1 + 4a)H₁, so ∂ₜa = c/2 + 2ca, a = ct/2 + c²t²/2 + O(t³).
    let a = 0.5 * c * t + 0.5 * c * c * t * t;
    Some(
        (0..grid.len())
            .map(|p| base[p] + a * gen.on_base(grid.point(p)[0], 1.0))
            .collect(),
    )
}

/// Masks `Ω ⊃ Ω₁` on a complex grid with the distance `d` from each point to
/// the complement of `Ω` (the ring just outside the grid counts as outside).
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    pub omega: Vec<bool>,
    pub omega1: Vec<bool>,
    pub d: Vec<f64>,
}

impl DomainSpec {
    pub fn new(grid: &ComplexGrid, omega: Vec<bool>, omega1: Vec<bool>) -> Result<Self> {
        check_grid(grid)?;
        if omega.len() != grid.len() || omega1.len() != grid.len() {
            return Err(DeformError::InvalidDomain("mask length differs from the grid".into()));
        }
        if !omega.iter().any(|&b| b) {
            return Err(DeformError::InvalidDomain("omega is empty".into()));
        }
        let d = distance_to_complement(grid, &omega);
        let dom = Self { omega, omega1, d };
        for p in 0..grid.len() {
            if dom.omega1[p] && (!dom.omega[p] || dom.d[p] <= 0.0) {
                return Err(DeformError::InvalidDomain(
                    "omega1 must lie strictly inside omega".into(),
                ));
            }
        }
        let margin = dom.margin();
        if dom.omega1.iter().any(|&b| b) && margin <= 0.0 {
            return Err(DeformError::InvalidDomain("omega1 touches the boundary of omega".into()));
        }
        Ok(dom)
    }

    /// `Ω` and `Ω₁` as concentric boxes `|x′ − c′| ≤ r`, `|x″ − c″| ≤ r`.
    pub fn boxes(grid: &ComplexGrid, center: Complex64, r_outer: f64, r_inner: f64) -> Result<Self> {
        if !(r_inner < r_outer) {
            return Err(DeformError::InvalidDomain("inner radius must be below outer".into()));
        }
        let lo = |r: f64| [center.re - r, center.im - r];
        let hi = |r: f64| [center.re + r, center.im + r];
        let omega = grid.box_mask(&lo(r_outer), &hi(r_outer));
        let omega1 = grid.box_mask(&lo(r_inner), &hi(r_inner));
        Self::new(grid, omega, omega1)
    }

    /// Smallest `d` over `Ω₁`.
    pub fn margin(&self) -> f64 {
        self.d
            .iter()
            .zip(&self.omega1)
            .filter(|(_, &b)| b)
            .map(|(&d, _)| d)
            .fold(f64::INFINITY, f64::min)
    }

    /// Points of `Ω ∖ Ω₁`.
    pub fn annulus(&self) -> Vec<bool> {
        self.omega.iter().zip(&self.omega1).map(|(&a, &b)| a && !b).collect()
    }
}

fn distance_to_complement(grid: &ComplexGrid, omega: &[bool]) -> Vec<f64> {
    let (re, im) = grid.axes(0);
    let mut outside: Vec<(f64, f64)> = (0..grid.len())
        .filter(|&p| !omega[p])
        .map(|p| {
            let x = grid.point(p)[0];
            (x.re, x.im)
        })
        .collect();
    for i in -1..=re.count as isize {
        let a = re.origin + i as f64 * re.spacing;
        outside.push((a, im.origin - im.spacing));
        outside.push((a, im.end() + im.spacing));
    }
    for j in 0..im.count {
        let b = im.coord(j);
        outside.push((re.origin - re.spacing, b));
        outside.push((re.end() + re.spacing, b));
    }
    (0..grid.len())
        .into_par_iter()
        .map(|p| {
            if !omega[p] {
                return 0.0;
            }
            let x = grid.point(p)[0];
            outside
                .iter()
                .map(|&(a, b)| ((x.re - a).powi(2) + (x.im - b).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Evidence for `Φₜ ≥ Φ₀` on `Ω` and `Φₜ ≥ Φ₀ + c′t` on `Ω ∖ Ω₁`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotoneReport {
    pub t: f64,
    pub min_gap: f64,
    pub tolerance: f64,
    /// `min (Φₜ − Φ₀)/t` over the annulus; `None` at `t = 0` or for an empty annulus.
    pub c_prime: Option<f64>,
    /// `½ min h|_{Λ₀}` over the annulus.
    pub half_h_floor: Option<f64>,
    /// `c′ / (½ min h)`.
    pub c_ratio: Option<f64>,
    /// `max |Φₜ − Φ₀ − ½∫₀ᵗ h ds|` over `Ω`.
    pub integral_residual: f64,
}

/// Grid tolerance for the sign check of `Φₜ − Φ₀`.
pub const MONOTONE_TOL: f64 = 1e-9;

pub fn verify_monotone(def: &Deformation, dom: &DomainSpec) -> Result<MonotoneReport> {
    let w = &def.weight;
    if dom.omega.len() != w.values.len() {
        return Err(DeformError::GridMismatch);
    }
    let gap: Vec<f64> = w.values.iter().zip(w.base.iter()).map(|(a, b)| a - b).collect();
    let min_gap = gap
        .iter()
        .zip(&dom.omega)
        .filter(|(_, &m)| m)
        .map(|(&g, _)| g)
        .fold(f64::INFINITY, f64::min);
    if min_gap < -MONOTONE_TOL {
        return Err(DeformError::MonotonicityViolated {
            min_gap,
            tol: MONOTONE_TOL,
        });
    }
    let ann = dom.annulus();
    let any_ann = ann.iter().any(|&b| b);
    let (c_prime, half_h_floor) = if w.t > 0.0 && any_ann {
        let cp = gap
            .iter()
            .zip(&ann)
            .filter(|(_, &m)| m)
            .map(|(&g, _)| g / w.t)
            .fold(f64::INFINITY, f64::min);
        let hf = def
            .h_base
            .iter()
            .zip(&ann)
            .filter(|(_, &m)| m)
            .map(|(&h, _)| 0.5 * h)
            .fold(f64::INFINITY, f64::min);
        (Some(cp), Some(hf))
    } else {
        (None, None)
    };
    let c_ratio = match (c_prime, half_h_floor) {
        (Some(c), Some(h)) if h > 0.0 => Some(c / h),
        _ => None,
    };
    let integral_residual = gap
        .iter()
        .zip(&def.h_integral)
        .zip(&dom.omega)
        .filter(|(_, &m)| m)
        .map(|((g, i), _)| (g - i).abs())
        .fold(0.0, f64::max);
    Ok(MonotoneReport {
        t: w.t,
        min_gap,
        tolerance: MONOTONE_TOL,
        c_prime,
        half_h_floor,
        c_ratio,
        integral_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbi::Axis;
    use crate::symbolic::parse_symbol;

    fn grid() -> ComplexGrid {
        ComplexGrid::one_dim(Axis::span(-1.0, 1.0, 21).unwrap(), Axis::span(-1.0, 1.0, 21).unwrap()).unwrap()
    }

    #[test]
    fn gradient_is_exact_on_quadratics() {
        let g = grid();
        let v: Vec<f64> = (0..g.len())
            .map(|p| {
                let x = g.point(p)[0];
                x.re * x.re - 2.0 * x.re * x.im + 0.5 * x.im
            })
            .collect();
        let w = WeightFunction::from_samples(&g, v).unwrap();
        for (p, (gr, gi)) in w.gradient().into_iter().enumerate() {
            let x = g.point(p)[0];
            assert!((gr - (2.0 * x.re - 2.0 * x.im)).abs() < 1e-12);
            assert!((gi - (-2.0 * x.re + 0.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn base_xi_is_minus_imaginary_part() {
        let w = WeightFunction::phi0(&grid()).unwrap();
        for (p, xi) in w.xi().into_iter().enumerate() {
            let x = w.grid().point(p)[0];
            assert!((xi - Complex64::new(-x.im, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_time_and_zero_generator_are_identity() {
        let g = grid();
        let base = WeightFunction::phi0(&g).unwrap();
        let gen = DeformationGenerator::quadratic((0.0, 1.0), 2);
        let d = deform_weight(&base, &gen, 0.0, 4.0, DeformOptions::default()).unwrap();
        assert_eq!(d.weight.values(), base.values());
        let zero = DeformationGenerator::polynomial(parse_symbol("0", Some(1)).unwrap(), None).unwrap();
        let d = deform_weight(&base, &zero, 0.2, 4.0, DeformOptions::default()).unwrap();
        assert_eq!(d.weight.values(), base.values());
    }

    #[test]
    fn rejects_negative_generator_and_bad_time() {
        let g = grid();
        let base = WeightFunction::phi0(&g).unwrap();
        let neg = DeformationGenerator::polynomial(parse_symbol("x1 - 1/2", Some(1)).unwrap(), None).unwrap();
        assert!(matches!(
            deform_weight(&base, &neg, 0.1, 1.0, DeformOptions::default()),
            Err(DeformError::NegativeGenerator { .. })
        ));
        let gen = DeformationGenerator::quadratic((0.0, 0.0), 2);
        assert!(matches!(
            deform_weight(&base, &gen, 0.3, 1.0, DeformOptions::default()),
            Err(DeformError::TimeOutOfRange { .. })
        ));
    }

    #[test]
    fn domain_distance_and_margin() {
        let g = grid();
        let dom = DomainSpec::boxes(&g, Complex64::new(0.0, 0.0), 0.55, 0.25).unwrap();
        assert!(dom.margin() > 0.25);
        let center = g.len() / 2;
        assert!((dom.d[center] - 0.6).abs() < 1e-12);
        assert!(DomainSpec::boxes(&g, Complex64::new(0.0, 0.0), 0.2, 0.3).is_err());
    }
}
