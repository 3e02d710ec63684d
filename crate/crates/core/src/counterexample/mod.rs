//! The explicit null solution `u = ∫₀^∞ e^{ix₂ρ} φ(x₁ρ^{1/k}) (1+ρ⁴)^{−1} dρ`
//! of `D₁² + x₁^{2(k−1)}D₂² + λ|D₂|^{2/k}` with `λ = −E`, its residual, and a
//! probe of the algebraic decay of its `x₂`-spectrum.
//!
//! The ρ-integral is discretized on a uniform lattice `ρ_j = jΔρ` with
//! Gregory end corrections. Every lattice term is itself an exact null
//! solution, and on an `x₂` grid of period `2π/Δρ` the samples are an exact
//! inverse DFT of the lattice coefficients, so `D₂` multipliers act exactly.

use std::sync::{Arc, OnceLock};

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;
use thiserror::Error;

use crate::fbi::{Axis, FbiError, SampledFunction};
use crate::spectral::EigenPair;

/// Number of lattice nodes at each end carrying Gregory corrections.
pub const GREGORY_ORDER: usize = 8;

/// Relative amplitude below which a probed slice counts as zero.
pub const SLICE_ZERO_TOL: f64 = 1e-12;

/// Relative spectral amplitude treated as round-off.
pub const NOISE_FLOOR: f64 = 1e-13;

/// Fitted slopes steeper than this are reported as smooth.
pub const SMOOTH_SLOPE: f64 = -10.0;

#[derive(Debug, Error)]
pub enum CounterexampleError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("eigenpair has k = {found}, spec expects k = {expected}")]
    WrongK { expected: u32, found: u32 },
    #[error("tail bound {bound:.3e} exceeds tolerance {tol:.1e}; raise rho_max")]
    ToleranceNotMet { bound: f64, tol: f64 },
    #[error("x2 grid too coarse: {n2} samples cannot hold {needed} signed frequencies (Nyquist)")]
    Nyquist { n2: usize, needed: usize },
    #[error("grid does not match the spec: {0}")]
    GridMismatch(String),
    #[error("slice is numerically zero (max {max:.3e}); switch derivative slot")]
    SliceZero { max: f64 },
    #[error("probe needs a grid line at x1 = 0")]
    NoOrigin,
    #[error("too few spectral samples above the noise floor to fit ({0})")]
    TooFewSamples(usize),
    #[error(transparent)]
    Fbi(#[from] FbiError),
}

pub type Result<T> = std::result::Result<T, CounterexampleError>;

/// Parameters of the lattice and the real `(x₁, x₂)` grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterexampleSpec {
    pub k: u32,
    pub eigen_index: usize,
    /// Upper end `R` of the ρ lattice.
    pub rho_max: f64,
    /// Lattice intervals `M`, so `Δρ = R/M`.
    pub rho_steps: usize,
    /// `x₁ ∈ [−X, X]`.
    pub x1_halfwidth: f64,
    /// Odd number of `x₁` samples, so that `x₁ = 0` is a grid line.
    pub n1: usize,
    /// Samples over one `x₂` period `2π/Δρ`; `None` picks the smallest power
    /// of two satisfying the Nyquist condition.
    pub n2: Option<usize>,
    /// Declared tolerance for the discarded tail `∫_R^∞ (1+ρ⁴)^{−1}`.
    pub tail_tol: f64,
}

impl Default for CounterexampleSpec {
    fn default() -> Self {
        Self {
            k: 2,
            eigen_index: 0,
            rho_max: 100.0,
            rho_steps: 2000,
            x1_halfwidth: 2.0,
            n1: 81,
            n2: None,
            tail_tol: 1e-6,
        }
    }
}

impl CounterexampleSpec {
    pub fn rho_step(&self) -> f64 {
        self.rho_max / self.rho_steps as f64
    }

    /// Analytic bound `1/(3R³)` on the truncated tail.
    pub fn tail_bound(&self) -> f64 {
        1.0 / (3.0 * self.rho_max.powi(3))
    }

    /// Smallest `n₂` for which signed frequencies `−n₂/2 < m < n₂/2` hold the
    /// whole lattice `0..=M`.
    pub fn min_n2(&self) -> usize {
        2 * self.rho_steps + 2
    }

    pub fn resolved_n2(&self) -> usize {
        self.n2.unwrap_or_else(|| self.min_n2().next_power_of_two())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CounterexampleError::InvalidSpec(m));
        if self.k < 2 {
            return bad(format!("k must be at least 2, got {}", self.k));
        }
        if !(self.rho_max.is_finite() && self.rho_max >= 50.0) {
            return bad(format!("rho_max must be at least 50, got {}", self.rho_max));
        }
        if self.rho_steps < 2 * GREGORY_ORDER {
            return bad(format!(
                "rho_steps must be at least {}, got {}",
                2 * GREGORY_ORDER,
                self.rho_steps
            ));
        }
        if self.n1 < 9 || self.n1 % 2 == 0 {
            return bad(format!("n1 must be odd and at least 9, got {}", self.n1));
        }
        if !(self.x1_halfwidth.is_finite() && self.x1_halfwidth > 0.0) {
            return bad(format!("x1_halfwidth must be positive, got {}", self.x1_halfwidth));
        }
        if !(self.tail_tol > 0.0) {
            return bad(format!("tail_tol must be positive, got {}", self.tail_tol));
        }
        if self.tail_bound() > self.tail_tol {
            return Err(CounterexampleError::ToleranceNotMet {
                bound: self.tail_bound(),
                tol: self.tail_tol,
            });
        }
        let n2 = self.resolved_n2();
        if n2 < self.min_n2() {
            return Err(CounterexampleError::Nyquist {
                n2,
                needed: self.min_n2(),
            });
        }
        Ok(())
    }

    pub fn x1_axis(&self) -> Axis {
        Axis::span(-self.x1_halfwidth, self.x1_halfwidth, self.n1).expect("validated")
    }

    /// One period `[−π/Δρ, π/Δρ)`.
    pub fn x2_axis(&self) -> Axis {
        let period = 2.0 * std::f64::consts::PI / self.rho_step();
        let n2 = self.resolved_n2();
        Axis::new(-0.5 * period, period / n2 as f64, n2).expect("validated")
    }

    /// Halves `Δρ` and the `x₁` spacing together.
    pub fn refined(&self) -> Self {
        Self {
            rho_steps: 2 * self.rho_steps,
            n1: 2 * self.n1 - 1,
            n2: self.n2.map(|n| 2 * n),
            ..self.clone()
        }
    }
}

/// Error budget of a built solution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuildReport {
    pub rho_step: f64,
    pub rho_steps: usize,
    pub n1: usize,
    pub n2: usize,
    pub energy: f64,
    pub tail_bound: f64,
    /// Bound on the contribution dropped where `x₁ρ^{1/k}` leaves the
    /// eigenfunction's sampled domain.
    pub extrapolation_bound: f64,
    pub extrapolated_terms: usize,
}

#[derive(Debug, Clone)]
pub struct Counterexample {
    pub spec: CounterexampleSpec,
    pub u: SampledFunction,
    pub report: BuildReport,
}

/// Corrections `c_0..c_{q−1}` to unit weights at each end. They cancel the
/// endpoint terms of the Euler–Maclaurin expansion through degree `q − 1`:
/// `Σ_j c_j j^m = −[m = 0]/2 + [m odd]·B_{m+1}/(m+1)`, solved exactly.
fn gregory_corrections() -> &'static [f64] {
    static CACHE: OnceLock<Vec<f64>> = OnceLock::new();
    CACHE.get_or_init(|| {
        let q = GREGORY_ORDER;
        let int = |v: i64| BigRational::from_integer(BigInt::from(v));
        let bern = bernoulli(q + 1);
        let mut a: Vec<Vec<BigRational>> = (0..q)
            .map(|m| {
                let mut row: Vec<BigRational> = (0..q)
                    .map(|j| {
                        let mut r = BigRational::one();
                        for _ in 0..m {
                            r *= int(j as i64);
                        }
                        r
                    })
                    .collect();
                let rhs = if m == 0 {
                    -BigRational::new(BigInt::from(1), BigInt::from(2))
                } else if m % 2 == 1 {
                    bern[m + 1].clone() / int(m as i64 + 1)
                } else {
                    BigRational::zero()
                };
                row.push(rhs);
                row
            })
            .collect();
        for col in 0..q {
            let p = (col..q).find(|&r| !a[r][col].is_zero()).expect("Vandermonde system");
            a.swap(col, p);
            let pivot = a[col][col].clone();
            for v in a[col].iter_mut() {
                *v = &*v / &pivot;
            }
            for r in 0..q {
                if r != col && !a[r][col].is_zero() {
                    let f = a[r][col].clone();
                    for c in col..=q {
                        let d = &f * &a[col][c];
                        a[r][c] -= d;
                    }
                }
            }
        }
        a.iter().map(|row| row[q].to_f64().expect("finite")).collect()
    })
}

/// Bernoulli numbers `B_0..=B_n` (with `B_1 = −1/2`).
fn bernoulli(n: usize) -> Vec<BigRational> {
    let mut b: Vec<BigRational> = vec![BigRational::one()];
    for m in 1..=n {
        let mut s = BigRational::zero();
        let mut binom = BigInt::from(1);
        for (k, bk) in b.iter().enumerate() {
            s += BigRational::from_integer(binom.clone()) * bk;
            binom = binom * BigInt::from(m + 1 - k) / BigInt::from(k + 1);
        }
        b.push(-s / BigRational::from_integer(BigInt::from(m + 1)));
    }
    b
}

/// Quadrature weights on `ρ_j = jΔρ`, `j = 0..=M`, exact for polynomials of
/// degree below [`GREGORY_ORDER`].
pub fn lattice_weights(steps: usize, step: f64) -> Vec<f64> {
    assert!(steps >= 2 * GREGORY_ORDER, "lattice too short for end corrections");
    let c = gregory_corrections();
    let mut w = vec![step; steps + 1];
    for (j, cj) in c.iter().enumerate() {
        w[j] += cj * step;
        w[steps - j] += cj * step;
    }
    w
}

/// Builds `u` on the spec's grid.
pub fn build_solution(spec: &CounterexampleSpec, eig: &EigenPair) -> Result<Counterexample> {
    spec.validate()?;
    if eig.k != spec.k {
        return Err(CounterexampleError::WrongK {
            expected: spec.k,
            found: eig.k,
        });
    }
    let (x1, x2) = (spec.x1_axis(), spec.x2_axis());
    let (m, dr) = (spec.rho_steps, spec.rho_step());
    let n2 = x2.count;
    let weights = lattice_weights(m, dr);
    let inv_k = 1.0 / spec.k as f64;
    let rho: Vec<f64> = (0..=m).map(|j| j as f64 * dr).collect();
    let scale: Vec<f64> = rho.iter().map(|r| r.powf(inv_k)).collect();
    // e^{i x₂₀ ρ_j} with x₂₀ = −π/Δρ is (−1)^j.
    let coef: Vec<f64> = rho
        .iter()
        .zip(&weights)
        .enumerate()
        .map(|(j, (r, w))| if j % 2 == 0 { 1.0 } else { -1.0 } * w / (1.0 + r.powi(4)))
        .collect();
    let domain = eig.axis().end().min(-eig.axis().origin);
    let edge = eig.edge_max(0.0);
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_inverse(n2);

    let rows: Vec<(Vec<Complex64>, f64, usize)> = (0..x1.count)
        .into_par_iter()
        .map(|i| {
            let x = x1.coord(i);
            let mut buf = vec![Complex64::new(0.0, 0.0); n2];
            let (mut dropped, mut count) = (0.0, 0);
            for j in 0..=m {
                let t = x * scale[j];
                if t.abs() >= domain {
                    dropped += coef[j].abs();
                    count += 1;
                    continue;
                }
                buf[j] = Complex64::new(coef[j] * eig.eval(t), 0.0);
            }
            fft.process(&mut buf);
            (buf, dropped * edge, count)
        })
        .collect();

    let mut values = Vec::with_capacity(x1.count * n2);
    let (mut extrapolation_bound, mut extrapolated_terms) = (0.0f64, 0);
    for (row, b, c) in rows {
        values.extend(row);
        extrapolation_bound = extrapolation_bound.max(b);
        extrapolated_terms += c;
    }
    let report = BuildReport {
        rho_step: dr,
        rho_steps: m,
        n1: x1.count,
        n2,
        energy: eig.energy,
        tail_bound: spec.tail_bound(),
        extrapolation_bound,
        extrapolated_terms,
    };
    let support = vec![(0, x1.count), (0, n2)];
    let u = SampledFunction::new(vec![x1, x2], values, support)?;
    Ok(Counterexample {
        spec: spec.clone(),
        u,
        report,
    })
}

/// Normalized residual of `(P+Q)u` with `λ = −E`.
pub fn residual_check(u: &SampledFunction, spec: &CounterexampleSpec, eig: &EigenPair) -> Result<f64> {
    residual_check_shifted(u, spec, eig, 0.0)
}

/// As [`residual_check`] with `λ = −E + shift`.
///
/// Returns `‖(P+Q)u‖ / (‖D₁²u‖ + ‖x₁^{2(k−1)}D₂²u‖ + ‖λ|D₂|^{2/k}u‖)` over
/// interior `x₁` rows; `D₁²` uses fourth-order differences and the `D₂`
/// multipliers act on signed DFT frequencies.
pub fn residual_check_shifted(
    u: &SampledFunction,
    spec: &CounterexampleSpec,
    eig: &EigenPair,
    shift: f64,
) -> Result<f64> {
    spec.validate()?;
    if u.dim() != 2 {
        return Err(CounterexampleError::GridMismatch("u must be two-dimensional".into()));
    }
    let (x1, x2) = (*u.axis(0), *u.axis(1));
    let expect = spec.x2_axis();
    let period = x2.spacing * x2.count as f64;
    let want = expect.spacing * expect.count as f64;
    if (period - want).abs() > 1e-9 * want {
        return Err(CounterexampleError::GridMismatch(format!(
            "x2 period {period} differs from 2π/Δρ = {want}"
        )));
    }
    if x2.count < spec.min_n2() {
        return Err(CounterexampleError::Nyquist {
            n2: x2.count,
            needed: spec.min_n2(),
        });
    }
    if x1.count < 5 {
        return Err(CounterexampleError::GridMismatch("need at least 5 x1 samples".into()));
    }
    let n2 = x2.count;
    let dr = spec.rho_step();
    let lambda = -eig.energy + shift;
    let frac = 2.0 / spec.k as f64;
    let p = 2 * (spec.k as i32 - 1);
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n2);
    let inv = planner.plan_fft_inverse(n2);
    let freq = |m: usize| -> f64 {
        let s = if m <= n2 / 2 { m as f64 } else { m as f64 - n2 as f64 };
        s * dr
    };
    let apply = |row: &[Complex64], mult: &dyn Fn(f64) -> f64| -> Vec<Complex64> {
        let mut buf = row.to_vec();
        fwd.process(&mut buf);
        for (m, v) in buf.iter_mut().enumerate() {
            *v *= mult(freq(m)) / n2 as f64;
        }
        inv.process(&mut buf);
        buf
    };
    let h2 = x1.spacing * x1.spacing;
    let vals = u.values();
    let row = |i: usize| &vals[i * n2..(i + 1) * n2];
    let sums: Vec<[f64; 4]> = (2..x1.count - 2)
        .into_par_iter()
        .map(|i| {
            let x = x1.coord(i);
            let d2 = apply(row(i), &|r| r * r);
            let frac_part = apply(row(i), &|r| r.abs().powf(frac));
            let mut acc = [0.0; 4];
            for m in 0..n2 {
                let lap = (-row(i - 2)[m] + 16.0 * row(i - 1)[m] - 30.0 * row(i)[m]
                    + 16.0 * row(i + 1)[m]
                    - row(i + 2)[m])
                    / (12.0 * h2);
                let a = -lap;
                let b = x.powi(p) * d2[m];
                let c = lambda * frac_part[m];
                acc[0] += (a + b + c).norm_sqr();
                acc[1] += a.norm_sqr();
                acc[2] += b.norm_sqr();
                acc[3] += c.norm_sqr();
            }
            acc
        })
        .collect();
    let tot = sums.iter().fold([0.0; 4], |mut t, s| {
        for (a, b) in t.iter_mut().zip(s) {
            *a += b;
        }
        t
    });
    let denom = tot[1].sqrt() + tot[2].sqrt() + tot[3].sqrt();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(tot[0].sqrt() / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SmoothnessVerdict {
    /// Algebraic decay: only finitely many `x₂` derivatives exist.
    Finite,
    /// Super-algebraic decay, or the spectrum reaches round-off.
    Smooth,
}

/// Tail-exponent fit of `|û(ω)|` against `ω` in log-log coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothnessReport {
    pub slot: u8,
    pub verdict: SmoothnessVerdict,
    /// Fitted slope; `None` when the verdict is smooth.
    pub exponent: Option<f64>,
    pub raw_slope: f64,
    pub fit_residual: f64,
    pub points_used: usize,
    pub omega_range: (f64, f64),
    pub slice_max: f64,
}

/// Lowest frequency entering the fit; `(1+ω⁴)^{−1}` is within 0.4% of `ω^{−4}`
/// from here on.
pub const PROBE_OMEGA_MIN: f64 = 4.0;

/// Fits the algebraic decay exponent of the `x₂` spectrum of `u(0,·)`
/// (`slot = 0`) or `∂_{x₁}u(0,·)` (`slot = 1`).
pub fn smoothness_probe(u: &SampledFunction, slot: u8) -> Result<SmoothnessReport> {
    if slot > 1 {
        return Err(CounterexampleError::InvalidSpec(format!("slot must be 0 or 1, got {slot}")));
    }
    if u.dim() != 2 {
        return Err(CounterexampleError::GridMismatch("u must be two-dimensional".into()));
    }
    let (x1, x2) = (*u.axis(0), *u.axis(1));
    let i0 = (0..x1.count)
        .find(|&i| x1.coord(i).abs() <= 1e-9 * x1.spacing.max(1.0))
        .ok_or(CounterexampleError::NoOrigin)?;
    let n2 = x2.count;
    let vals = u.values();
    let row = |i: usize| &vals[i * n2..(i + 1) * n2];
    let slice: Vec<Complex64> = if slot == 0 {
        row(i0).to_vec()
    } else {
        if i0 < 2 || i0 + 2 >= x1.count {
            return Err(CounterexampleError::GridMismatch(
                "x1 = 0 needs two neighbours on each side".into(),
            ));
        }
        (0..n2)
            .map(|m| {
                (row(i0 - 2)[m] - 8.0 * row(i0 - 1)[m] + 8.0 * row(i0 + 1)[m] - row(i0 + 2)[m])
                    / (12.0 * x1.spacing)
            })
            .collect()
    };
    let global = vals.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let slice_max = slice.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if global == 0.0 || slice_max <= SLICE_ZERO_TOL * global {
        return Err(CounterexampleError::SliceZero { max: slice_max });
    }
    let mut buf = slice;
    FftPlanner::new().plan_fft_forward(n2).process(&mut buf);
    let d_omega = 2.0 * std::f64::consts::PI / (n2 as f64 * x2.spacing);
    let half = n2 / 2;
    let amp: Vec<f64> = (0..half)
        .map(|m| {
            if m == 0 {
                buf[0].norm()
            } else {
                buf[m].norm() + buf[n2 - m].norm()
            }
        })
        .collect();
    let top = amp.iter().cloned().fold(0.0, f64::max);
    let floor = NOISE_FLOOR * top;
    let m_lo = (PROBE_OMEGA_MIN / d_omega).ceil() as usize;
    // Stop at the first sample under the floor, then back off to avoid the
    // corrected end of the lattice.
    let mut m_end = m_lo;
    while m_end < half && amp[m_end] > floor {
        m_end += 1;
    }
    let m_hi = m_lo + ((m_end.saturating_sub(m_lo)) * 9) / 10;
    let pts: Vec<(f64, f64)> = (m_lo..m_hi)
        .map(|m| ((m as f64 * d_omega).ln(), amp[m].ln()))
        .collect();
    let reached_floor = m_end < half;
    if pts.len() < 8 {
        if reached_floor {
            return Ok(SmoothnessReport {
                slot,
                verdict: SmoothnessVerdict::Smooth,
                exponent: None,
                raw_slope: f64::NEG_INFINITY,
                fit_residual: 0.0,
                points_used: pts.len(),
                omega_range: (m_lo as f64 * d_omega, m_end as f64 * d_omega),
                slice_max,
            });
        }
        return Err(CounterexampleError::TooFewSamples(pts.len()));
    }
    let (slope, intercept) = least_squares(&pts);
    let fit_residual = (pts
        .iter()
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum::<f64>()
        / pts.len() as f64)
        .sqrt();
    let smooth = slope < SMOOTH_SLOPE;
    Ok(SmoothnessReport {
        slot,
        verdict: if smooth { SmoothnessVerdict::Smooth } else { SmoothnessVerdict::Finite },
        exponent: (!smooth).then_some(slope),
        raw_slope: slope,
        fit_residual,
        points_used: pts.len(),
        omega_range: (m_lo as f64 * d_omega, (m_hi - 1) as f64 * d_omega),
        slice_max,
    })
}

fn least_squares(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / n, sy / n);
    let (sxy, sxx) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (y - my), b + (x - mx) * (x - mx)));
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// `∫₀^R (1+ρ⁴)^{−1} dρ` from the elementary antiderivative; tends to
/// `π/(2√2)` as `R → ∞`.
pub fn truncated_weight_integral(r: f64) -> f64 {
    let s2 = std::f64::consts::SQRT_2;
    let log = ((r * r + s2 * r + 1.0) / (r * r - s2 * r + 1.0)).ln();
    (log + 2.0 * (s2 * r + 1.0).atan() + 2.0 * (s2 * r - 1.0).atan()) / (4.0 * s2)
}
