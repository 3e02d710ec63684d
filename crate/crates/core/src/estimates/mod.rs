//! Discrete probes of the subelliptic estimate
//! `‖u‖²_s + Σ‖Xⱼu‖² ≤ C(|⟨Pu, u⟩| + ‖u‖²)` on a two-dimensional torus.
//!
//! Fields are periodized by substituting a periodic function for each
//! coordinate that appears in a coefficient; derivatives, Sobolev norms and
//! the multiplier `|D₂|^θ` are exact on the discrete Fourier lattice.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::Zero;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;
use thiserror::Error;

use crate::spectral::EigenPair;
use crate::symbolic::{check_hormander, compute_nu, rational, Nu, PolySymbol, SymbolicError, VectorFieldSystem};

/// Slope of `log(ratio)` against `log(frequency)` below which a trend counts as bounded.
pub const BOUNDED_SLOPE: f64 = 0.05;

/// Bracket budget for the symbolic re-check.
pub const RECHECK_BUDGET: usize = 8;

/// Allowed deviation of a battery element's `L²` norm from one.
pub const NORM_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error("only two-dimensional systems are supported, got dimension {0}")]
    Dimension(usize),
    #[error("torus needs at least 8 points and a positive period per axis")]
    BadGrid,
    #[error("coordinate x{0} appears in a coefficient but is not periodized")]
    NotPeriodic(usize),
    #[error("periodization changes the bracket data at the reference point: {before} before, {after} after")]
    VanishingOrderChanged { before: String, after: String },
    #[error("battery element {index} has L² norm {norm}, expected 1")]
    NotNormalized { index: usize, norm: f64 },
    #[error("battery element {index} has {found} samples, grid has {expected}")]
    SampleLength { index: usize, expected: usize, found: usize },
    #[error("empty battery")]
    EmptyBattery,
    #[error("frequency {mu} is not below the Nyquist limit {limit} of the x₂ axis")]
    Nyquist { mu: f64, limit: f64 },
    #[error("θ = {theta} is the critical order 2/r; supply the eigenvalue that sets the coupling")]
    MissingEigenvalue { theta: f64 },
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error(transparent)]
    Symbolic(#[from] SymbolicError),
}

pub type Result<T> = std::result::Result<T, EstimateError>;

/// Periodic grid on `[−L₁/2, L₁/2) × [−L₂/2, L₂/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TorusGrid {
    pub n: [usize; 2],
    pub period: [f64; 2],
}

impl TorusGrid {
    pub fn new(n: [usize; 2], period: [f64; 2]) -> Result<Self> {
        if n.iter().any(|&k| k < 8) || period.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(EstimateError::BadGrid);
        }
        Ok(Self { n, period })
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, l: usize) -> f64 {
        self.period[l] / self.n[l] as f64
    }

    pub fn coord(&self, l: usize, i: usize) -> f64 {
        -0.5 * self.period[l] + i as f64 * self.spacing(l)
    }

    /// Angular wavenumber of FFT bin `m` on axis `l`; the Nyquist bin maps to zero.
    pub fn wavenumber(&self, l: usize, m: usize) -> f64 {
        let n = self.n[l];
        let s = if 2 * m < n {
            m as f64
        } else if 2 * m == n {
            0.0
        } else {
            m as f64 - n as f64
        };
        2.0 * PI * s / self.period[l]
    }

    /// `|wavenumber|` with the Nyquist bin kept, for even multipliers.
    pub fn abs_wavenumber(&self, l: usize, m: usize) -> f64 {
        let n = self.n[l];
        let s = if 2 * m <= n { m } else { n - m };
        2.0 * PI * s as f64 / self.period[l]
    }

    fn cell(&self) -> f64 {
        self.spacing(0) * self.spacing(1)
    }
}

/// Substitution applied to a coordinate before evaluating coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Periodization {
    /// Only allowed for coordinates no coefficient depends on.
    Identity,
    /// `x ↦ (L/2π)·sin(2πx/L)`, which keeps every vanishing order at the origin.
    Sin,
    /// `x ↦ (L/2π)²·(1 − cos(2πx/L))`, which doubles vanishing orders.
    OneMinusCos,
}

impl Periodization {
    fn apply(self, x: f64, period: f64) -> f64 {
        let s = period / (2.0 * PI);
        match self {
            Self::Identity => x,
            Self::Sin => s * (x / s).sin(),
            Self::OneMinusCos => s * s * (1.0 - (x / s).cos()),
        }
    }

    /// Taylor polynomial at the origin for the unit period, through `x^9`.
    fn taylor(self, dim: usize, l: usize) -> PolySymbol {
        let x = PolySymbol::x(dim, l);
        let mut out = PolySymbol::zero(dim);
        let mut pow = PolySymbol::constant(dim, rational(1));
        let mut fact: i64 = 1;
        for p in 1..=9i64 {
            pow = &pow * &x;
            fact *= p;
            let c: Option<i64> = match self {
                Self::Identity => (p == 1).then_some(1),
                Self::Sin => (p % 2 == 1).then(|| if (p / 2) % 2 == 0 { 1 } else { -1 }),
                Self::OneMinusCos => (p % 2 == 0).then(|| if (p / 2) % 2 == 1 { 1 } else { -1 }),
            };
            if let Some(c) = c {
                let coef = BigRational::new(c.into(), fact.into());
                out = &out + &pow.scale(&coef);
            }
        }
        out
    }
}

type FftPair = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

/// Forward/inverse 2-D FFT on row-major `[i₁][i₂]` data.
#[derive(Clone)]
struct Fft2 {
    n: [usize; 2],
    plans: [FftPair; 2],
}

impl Fft2 {
    fn new(n: [usize; 2]) -> Self {
        let mut planner = FftPlanner::new();
        let plan = |p: &mut FftPlanner<f64>, m| (p.plan_fft_forward(m), p.plan_fft_inverse(m));
        let a = plan(&mut planner, n[0]);
        let b = plan(&mut planner, n[1]);
        Self { n, plans: [a, b] }
    }

    fn run(&self, data: &mut [Complex64], inverse: bool) {
        let [n1, n2] = self.n;
        let pick = |p: &FftPair| if inverse { Arc::clone(&p.1) } else { Arc::clone(&p.0) };
        let row = pick(&self.plans[1]);
        data.par_chunks_mut(n2).for_each(|r| row.process(r));
        let col = pick(&self.plans[0]);
        let mut buf = vec![Complex64::new(0.0, 0.0); n1];
        for j in 0..n2 {
            for i in 0..n1 {
                buf[i] = data[i * n2 + j];
            }
            col.process(&mut buf);
            for i in 0..n1 {
                data[i * n2 + j] = buf[i];
            }
        }
        if inverse {
            let s = 1.0 / (n1 * n2) as f64;
            data.iter_mut().for_each(|v| *v *= s);
        }
    }
}

/// A periodized field system with spectral applicators.
#[derive(Clone)]
pub struct DiscreteOperator {
    pub grid: TorusGrid,
    pub sys: VectorFieldSystem,
    pub periodization: [Periodization; 2],
    /// Hörmander order at the origin; `None` when the condition fails within the budget.
    pub r: Option<usize>,
    /// `ν` at the reference point after periodization.
    pub nu: Nu,
    /// `coeffs[j][l]`: samples of the coefficient of `Dₗ` in `Xⱼ`.
    coeffs: Vec<[Vec<f64>; 2]>,
    fft: Fft2,
}

impl std::fmt::Debug for DiscreteOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiscreteOperator")
            .field("grid", &self.grid)
            .field("system", &self.sys.label())
            .field("periodization", &self.periodization)
            .field("r", &self.r)
            .field("nu", &self.nu)
            .finish()
    }
}

/// Periodizes `sys` on `grid` and checks, at `(0; ξ₀)`, that `ν` and the
/// Hörmander order survive the substitution.
pub fn discretize(
    sys: &VectorFieldSystem,
    grid: TorusGrid,
    periodization: [Periodization; 2],
    xi0: [i64; 2],
) -> Result<DiscreteOperator> {
    if sys.dim() != 2 {
        return Err(EstimateError::Dimension(sys.dim()));
    }
    for (l, p) in periodization.iter().enumerate() {
        if *p == Periodization::Identity && (0..sys.len()).any(|j| depends_on(sys, j, l)) {
            return Err(EstimateError::NotPeriodic(l + 1));
        }
    }
    let subs: Vec<PolySymbol> = (0..2).map(|l| periodization[l].taylor(2, l)).collect();
    let periodic = sys.substitute_x(&subs)?;
    let point: Vec<BigRational> = vec![
        BigRational::zero(),
        BigRational::zero(),
        rational(xi0[0]),
        rational(xi0[1]),
    ];
    let before = compute_nu(sys, &point, RECHECK_BUDGET)?;
    let after = compute_nu(&periodic, &point, RECHECK_BUDGET)?;
    if before.nu != after.nu || before.hoermander_r != after.hoermander_r {
        return Err(EstimateError::VanishingOrderChanged {
            before: format!("ν={:?}, r={:?}", before.nu, before.hoermander_r),
            after: format!("ν={:?}, r={:?}", after.nu, after.hoermander_r),
        });
    }
    let r = check_hormander(sys, &point[..2], RECHECK_BUDGET)?.1;
    let [n1, n2] = grid.n;
    let coeffs = (0..sys.len())
        .map(|j| {
            let polys = sys.coefficients(j);
            let sample = |l: usize| -> Vec<f64> {
                (0..n1 * n2)
                    .map(|p| {
                        let (i, k) = (p / n2, p % n2);
                        let y1 = periodization[0].apply(grid.coord(0, i), grid.period[0]);
                        let y2 = periodization[1].apply(grid.coord(1, k), grid.period[1]);
                        polys[l].eval_f64(&[y1, y2, 0.0, 0.0])
                    })
                    .collect()
            };
            [sample(0), sample(1)]
        })
        .collect();
    Ok(DiscreteOperator {
        grid,
        sys: sys.clone(),
        periodization,
        r,
        nu: after.nu,
        coeffs,
        fft: Fft2::new(grid.n),
    })
}

fn depends_on(sys: &VectorFieldSystem, j: usize, l: usize) -> bool {
    sys.coefficients(j).iter().any(|c| !c.d_dx(l).is_zero())
}

impl DiscreteOperator {
    fn spectrum(&self, u: &[Complex64]) -> Vec<Complex64> {
        let mut v = u.to_vec();
        self.fft.run(&mut v, false);
        v
    }

    fn synth(&self, mut v: Vec<Complex64>) -> Vec<Complex64> {
        self.fft.run(&mut v, true);
        v
    }

    fn multiply(&self, u: &[Complex64], m: impl Fn(usize, usize) -> f64 + Sync) -> Vec<Complex64> {
        let n2 = self.grid.n[1];
        let mut v = self.spectrum(u);
        v.par_iter_mut().enumerate().for_each(|(p, z)| *z *= m(p / n2, p % n2));
        self.synth(v)
    }

    /// `Dₗu = −i∂ₗu`.
    pub fn d(&self, l: usize, u: &[Complex64]) -> Vec<Complex64> {
        let g = self.grid;
        self.multiply(u, |a, b| g.wavenumber(l, if l == 0 { a } else { b }))
    }

    /// `Xⱼu = Σₗ cⱼₗ(x)·Dₗu`.
    pub fn apply_field(&self, j: usize, u: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); u.len()];
        for l in 0..2 {
            let c = &self.coeffs[j][l];
            if c.iter().all(|&v| v == 0.0) {
                continue;
            }
            let du = self.d(l, u);
            out.iter_mut().zip(du).zip(c).for_each(|((o, d), &c)| *o += d * c);
        }
        out
    }

    /// Formal adjoint `Xⱼ*v = Σₗ Dₗ(cⱼₗ·v)`.
    pub fn apply_field_adjoint(&self, j: usize, v: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
        for l in 0..2 {
            let c = &self.coeffs[j][l];
            if c.iter().all(|&x| x == 0.0) {
                continue;
            }
            let cv: Vec<Complex64> = v.iter().zip(c).map(|(a, &c)| a * c).collect();
            out.iter_mut().zip(self.d(l, &cv)).for_each(|(o, d)| *o += d);
        }
        out
    }

    /// `P = Σⱼ Xⱼ*Xⱼ`, equal to `ΣXⱼ²` for divergence-free real fields.
    pub fn apply_p(&self, u: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); u.len()];
        for j in 0..self.sys.len() {
            let xu = self.apply_field(j, u);
            out.iter_mut().zip(self.apply_field_adjoint(j, &xu)).for_each(|(o, v)| *o += v);
        }
        out
    }

    /// `ΣXⱼ(Xⱼu)`, the literal sum of squares.
    pub fn apply_sum_of_squares(&self, u: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); u.len()];
        for j in 0..self.sys.len() {
            let xu = self.apply_field(j, u);
            out.iter_mut().zip(self.apply_field(j, &xu)).for_each(|(o, v)| *o += v);
        }
        out
    }

    /// `|D₂|^θ u`.
    pub fn apply_multiplier(&self, theta: f64, u: &[Complex64]) -> Vec<Complex64> {
        let g = self.grid;
        self.multiply(u, |_, b| {
            let k = g.abs_wavenumber(1, b);
            if k == 0.0 { 0.0 } else { k.powf(theta) }
        })
    }

    /// `Σ_k |k|²·|û_k|²`-weighted diagonal of `−Δ`, for comparison with `P`.
    pub fn apply_laplacian_multiplier(&self, u: &[Complex64]) -> Vec<Complex64> {
        let g = self.grid;
        self.multiply(u, |a, b| g.wavenumber(0, a).powi(2) + g.wavenumber(1, b).powi(2))
    }

    pub fn inner(&self, u: &[Complex64], v: &[Complex64]) -> Complex64 {
        u.iter().zip(v).map(|(a, b)| a * b.conj()).sum::<Complex64>() * self.grid.cell()
    }

    pub fn l2_norm(&self, u: &[Complex64]) -> f64 {
        self.inner(u, u).re.sqrt()
    }

    /// `‖u‖_s = (Σ (1 + |k|²)^s |û_k|²)^{1/2}`, scaled so `s = 0` is the `L²` norm.
    pub fn sobolev_norm(&self, u: &[Complex64], s: f64) -> f64 {
        let g = self.grid;
        let n2 = g.n[1];
        let v = self.spectrum(u);
        let total: f64 = v
            .iter()
            .enumerate()
            .map(|(p, z)| {
                let (a, b) = (p / n2, p % n2);
                let k2 = g.abs_wavenumber(0, a).powi(2) + g.abs_wavenumber(1, b).powi(2);
                (1.0 + k2).powf(s) * z.norm_sqr()
            })
            .sum();
        (total * g.cell() / g.len() as f64).sqrt()
    }
}

/// Profile of a tensor wave packet in the scaled variable `x₁μ^{1/r}`.
#[derive(Debug, Clone)]
pub enum Profile {
    Gaussian,
    Eigen(EigenPair),
}

/// Unit-norm test functions indexed by a frequency scale.
#[derive(Debug, Clone, Serialize)]
pub struct Battery {
    pub descriptor: String,
    pub frequencies: Vec<f64>,
    #[serde(skip)]
    pub elements: Vec<Vec<Complex64>>,
}

/// Packets `u = f(x₁μ^{1/r})·e^{iμx₂}` with `μ = 2πm/L₂`, normalized in `L²`.
pub fn packet_battery(grid: &TorusGrid, profile: &Profile, r: f64, modes: &[u32]) -> Result<Battery> {
    if modes.is_empty() {
        return Err(EstimateError::EmptyBattery);
    }
    if !(r > 0.0) {
        return Err(EstimateError::BadParameter(format!("scaling order r = {r}")));
    }
    let [n1, n2] = grid.n;
    let mut elements = Vec::with_capacity(modes.len());
    let mut freqs = Vec::with_capacity(modes.len());
    for &m in modes {
        if 2 * m as usize >= n2 {
            return Err(EstimateError::Nyquist {
                mu: 2.0 * PI * m as f64 / grid.period[1],
                limit: PI * n2 as f64 / grid.period[1],
            });
        }
        let mu = 2.0 * PI * m as f64 / grid.period[1];
        let scale = mu.powf(1.0 / r);
        let f = |y: f64| match profile {
            Profile::Gaussian => (-0.5 * y * y).exp(),
            Profile::Eigen(e) => e.eval(y),
        };
        let mut u: Vec<Complex64> = (0..n1 * n2)
            .map(|p| {
                let (i, k) = (p / n2, p % n2);
                let x2 = grid.coord(1, k);
                Complex64::from_polar(f(grid.coord(0, i) * scale), mu * x2)
            })
            .collect();
        let norm = (u.iter().map(|z| z.norm_sqr()).sum::<f64>() * grid.cell()).sqrt();
        if norm == 0.0 {
            return Err(EstimateError::BadParameter(format!("packet at μ = {mu} vanishes")));
        }
        u.iter_mut().for_each(|z| *z /= norm);
        elements.push(u);
        freqs.push(mu);
    }
    let name = match profile {
        Profile::Gaussian => "gaussian".to_string(),
        Profile::Eigen(e) => format!("eigen(k={}, index={})", e.k, e.index),
    };
    Ok(Battery {
        descriptor: format!("{name} packets, r={r}, modes={modes:?}"),
        frequencies: freqs,
        elements,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Bounded,
    Growing { rate: f64 },
}

impl Verdict {
    /// Fitted growth rate, zero for a bounded trend.
    pub fn growth_rate(&self) -> f64 {
        match self {
            Self::Bounded => 0.0,
            Self::Growing { rate } => *rate,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateRow {
    pub frequency: f64,
    /// `‖u‖²_s + Σ‖Xⱼu‖²`.
    pub lhs: f64,
    /// `⟨(P + Q)u, u⟩` (real part).
    pub form: f64,
    /// Imaginary part of the form, a symmetry diagnostic.
    pub form_imag: f64,
    /// `⟨Pu, u⟩` without the perturbation.
    pub p_form: f64,
    /// `|⟨(P + Q)u, u⟩| + ‖u‖²`.
    pub denominator: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub sobolev_exponent: f64,
    pub battery: String,
    pub theta: Option<f64>,
    pub coupling: f64,
    pub rows: Vec<EstimateRow>,
    /// Least-squares slope of `log(ratio)` against `log(frequency)`.
    pub slope: f64,
    pub verdict: Verdict,
}

impl EstimateReport {
    /// `(frequency, ratio)` pairs.
    pub fn ratios(&self) -> Vec<(f64, f64)> {
        self.rows.iter().map(|r| (r.frequency, r.ratio)).collect()
    }

    /// `max |⟨(P+Q)u,u⟩| / ⟨Pu,u⟩` over the upper half of the battery.
    pub fn relative_collapse(&self) -> f64 {
        let half = self.rows.len() / 2;
        self.rows[half..]
            .iter()
            .map(|r| r.form.abs() / r.p_form.max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["frequency", "lhs", "form", "p_form", "denominator", "ratio"])?;
        for r in &self.rows {
            out.write_record(&[
                format!("{:.17e}", r.frequency),
                format!("{:.17e}", r.lhs),
                format!("{:.17e}", r.form),
                format!("{:.17e}", r.p_form),
                format!("{:.17e}", r.denominator),
                format!("{:.17e}", r.ratio),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn check_battery(op: &DiscreteOperator, battery: &Battery) -> Result<()> {
    if battery.elements.is_empty() {
        return Err(EstimateError::EmptyBattery);
    }
    if battery.frequencies.len() != battery.elements.len() {
        return Err(EstimateError::BadParameter("battery frequencies and elements differ in length".into()));
    }
    for (index, u) in battery.elements.iter().enumerate() {
        if u.len() != op.grid.len() {
            return Err(EstimateError::SampleLength {
                index,
                expected: op.grid.len(),
                found: u.len(),
            });
        }
        let norm = op.l2_norm(u);
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(EstimateError::NotNormalized { index, norm });
        }
    }
    Ok(())
}

fn probe(op: &DiscreteOperator, s: f64, battery: &Battery, theta: Option<f64>, c: f64) -> Result<EstimateReport> {
    check_battery(op, battery)?;
    let rows: Vec<EstimateRow> = battery
        .elements
        .iter()
        .zip(&battery.frequencies)
        .map(|(u, &frequency)| {
            let pu = op.apply_p(u);
            let p_form = op.inner(&pu, u);
            let mut form = p_form;
            if let (Some(t), true) = (theta, c != 0.0) {
                form += op.inner(&op.apply_multiplier(t, u), u) * c;
            }
            let fields: f64 = (0..op.sys.len()).map(|j| op.l2_norm(&op.apply_field(j, u)).powi(2)).sum();
            let lhs = op.sobolev_norm(u, s).powi(2) + fields;
            let denominator = form.re.abs() + op.l2_norm(u).powi(2);
            EstimateRow {
                frequency,
                lhs,
                form: form.re,
                form_imag: form.im,
                p_form: p_form.re,
                denominator,
                ratio: lhs / denominator,
            }
        })
        .collect();
    let slope = crate::realization::log_slope(rows.iter().map(|r| (r.frequency, r.ratio)));
    let verdict = if slope < BOUNDED_SLOPE {
        Verdict::Bounded
    } else {
        Verdict::Growing { rate: slope }
    };
    Ok(EstimateReport {
        sobolev_exponent: s,
        battery: battery.descriptor.clone(),
        theta,
        coupling: c,
        rows,
        slope,
        verdict,
    })
}

/// Ratio probe of the unperturbed estimate with Sobolev exponent `s`.
pub fn subelliptic_ratio(op: &DiscreteOperator, s: f64, battery: &Battery) -> Result<EstimateReport> {
    probe(op, s, battery, None, 0.0)
}

/// Ratio probe with `P` replaced by `P + c|D₂|^θ`, at Sobolev exponent `1/r`.
///
/// At the critical order `θ = 2/r` an eigenvalue must be supplied; it is
/// recorded as evidence that `c` was chosen against the spectrum.
pub fn perturbed_survival(
    op: &DiscreteOperator,
    theta: f64,
    c: f64,
    battery: &Battery,
    eigenvalue: Option<f64>,
) -> Result<EstimateReport> {
    if !(theta >= 0.0) || !c.is_finite() {
        return Err(EstimateError::BadParameter(format!("θ = {theta}, c = {c}")));
    }
    let r = op.r.ok_or_else(|| EstimateError::BadParameter("Hörmander condition fails: no order r".into()))?;
    let critical = 2.0 / r as f64;
    if (theta - critical).abs() < 1e-12 && eigenvalue.is_none() {
        return Err(EstimateError::MissingEigenvalue { theta });
    }
    probe(op, 1.0 / r as f64, battery, Some(theta), c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taylor_polynomials() {
        let s = Periodization::Sin.taylor(1, 0);
        assert!((s.eval_f64(&[0.3, 0.0]) - 0.3f64.sin()).abs() < 1e-9);
        let c = Periodization::OneMinusCos.taylor(1, 0);
        assert!((c.eval_f64(&[0.3, 0.0]) - (1.0 - 0.3f64.cos())).abs() < 1e-9);
    }

    #[test]
    fn wavenumbers_are_signed() {
        let g = TorusGrid::new([8, 8], [2.0 * PI, 2.0 * PI]).unwrap();
        let k: Vec<f64> = (0..8).map(|m| g.wavenumber(0, m)).collect();
        assert_eq!(k, vec![0.0, 1.0, 2.0, 3.0, 0.0, -3.0, -2.0, -1.0]);
        assert_eq!(g.abs_wavenumber(0, 4), 4.0);
    }
}
