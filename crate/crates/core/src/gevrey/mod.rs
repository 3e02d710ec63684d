//! Gevrey order estimates from the decay of `m(λ) = e^{−λΦ₀}|Tu(x, λ)|`.
//!
//! The decay model `m(λ) = C₁ e^{−λ^{1/s}/C₂}` is fitted as
//! `−log m = A λ^β + B` by variable projection: for each trial `β` the pair
//! `(A, B)` solves a linear least-squares problem, and `β` minimizes the
//! residual. A constant factor in `u` moves only `B`, so `ŝ = 1/β` does not
//! depend on it. The plain double-log slope is reported alongside.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::fbi::FBIField;

/// Magnitudes below this are censored before taking logarithms.
pub const CENSOR_FLOOR: f64 = 1e-280;
/// Minimum ladder length for a fit.
pub const MIN_LAMBDAS: usize = 6;
/// Exponents `β = 1/s` below this count as no decay.
pub const NO_DECAY_BETA: f64 = 0.05;
/// Total rise of `−log m` (nats) below which the data count as no decay.
pub const NO_DECAY_RISE: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GevreyError {
    #[error("need at least {MIN_LAMBDAS} lambda values, got {0}")]
    TooFewLambdas(usize),
    #[error("lambdas and magnitudes differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("magnitude at lambda={0} is not positive and finite")]
    NonPositive(f64),
    #[error("decay faster than measurable: s <= {s_bound:.3} (ladder-limited)")]
    FasterThanMeasurable { s_bound: f64 },
    #[error("gevrey order must be >= 1, got {0}")]
    BadOrder(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FitFlag {
    /// Fitted `ŝ < 1` was raised to 1.
    Clamped,
    /// `m` rose somewhere on the ladder; only the monotone tail was fitted.
    NonMonotone,
    /// Some magnitudes fell below [`CENSOR_FLOOR`] and were dropped.
    Censored,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    pub point: Vec<(f64, f64)>,
    /// `None` means no measurable decay.
    pub s_hat: Option<f64>,
    pub c1_hat: f64,
    pub c2_hat: f64,
    /// RMS misfit of `−log m` in nats.
    pub residual: f64,
    pub lambdas_used: Vec<f64>,
    /// Slope of `log(−log m)` against `log λ`, when defined.
    pub double_log_slope: Option<f64>,
    pub flags: Vec<FitFlag>,
}

impl DecayFit {
    pub fn has_decay(&self) -> bool {
        self.s_hat.is_some()
    }
}

/// Least squares `y ≈ A t + B`; returns `(A, B, rms)`.
fn linear_fit(t: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let mut stt = 0.0;
    let mut sty = 0.0;
    for (a, b) in t.iter().zip(y) {
        stt += (a - tm) * (a - tm);
        sty += (a - tm) * (b - ym);
    }
    let slope = if stt > 0.0 { sty / stt } else { 0.0 };
    let icpt = ym - slope * tm;
    let ss: f64 = t
        .iter()
        .zip(y)
        .map(|(a, b)| (b - slope * a - icpt).powi(2))
        .sum();
    (slope, icpt, (ss / n).sqrt())
}

/// Minimizes the projected residual over `log β ∈ [ln 0.01, ln 4]`.
fn project_beta(lambdas: &[f64], y: &[f64]) -> (f64, f64, f64, f64) {
    let eval = |lb: f64| {
        let beta = lb.exp();
        let t: Vec<f64> = lambdas.iter().map(|l| l.powf(beta)).collect();
        let (a, b, r) = linear_fit(&t, y);
        (r, beta, a, b)
    };
    let (lo, hi) = (0.01f64.ln(), 4f64.ln());
    let steps = 400;
    let mut best = (f64::INFINITY, 0.0, 0.0, 0.0, 0usize);
    for i in 0..=steps {
        let lb = lo + (hi - lo) * i as f64 / steps as f64;
        let (r, beta, a, b) = eval(lb);
        if r < best.0 {
            best = (r, beta, a, b, i);
        }
    }
    // Golden-section refinement on the bracketing cells.
    let cell = (hi - lo) / steps as f64;
    let mut a = lo + cell * best.4.saturating_sub(1) as f64;
    let mut b = (lo + cell * (best.4 + 1) as f64).min(hi);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = eval(c).0;
    let mut fd = eval(d).0;
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = eval(c).0;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = eval(d).0;
        }
    }
    let (r, beta, aa, bb) = eval(0.5 * (a + b));
    if r <= best.0 {
        (beta, aa, bb, r)
    } else {
        (best.1, best.2, best.3, best.0)
    }
}

/// Fits the decay model to one magnitude series.
pub fn fit_decay(lambdas: &[f64], m: &[f64]) -> Result<DecayFit, GevreyError> {
    fit_decay_above(lambdas, m, &vec![CENSOR_FLOOR; m.len()])
}

/// As [`fit_decay`], censoring `m[i]` below `floor[i]` (never below
/// [`CENSOR_FLOOR`]).
pub fn fit_decay_above(lambdas: &[f64], m: &[f64], floor: &[f64]) -> Result<DecayFit, GevreyError> {
    if lambdas.len() != m.len() {
        return Err(GevreyError::LengthMismatch(lambdas.len(), m.len()));
    }
    if lambdas.len() < MIN_LAMBDAS {
        return Err(GevreyError::TooFewLambdas(lambdas.len()));
    }
    for (&l, &v) in lambdas.iter().zip(m) {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(GevreyError::NonPositive(l));
        }
    }
    if floor.len() != m.len() {
        return Err(GevreyError::LengthMismatch(floor.len(), m.len()));
    }
    let n = lambdas.len();
    let floor: Vec<f64> = floor.iter().map(|f| f.max(CENSOR_FLOOR)).collect();
    let mut flags = Vec::new();
    let measurable: Vec<usize> = (0..n).filter(|&i| m[i] >= floor[i]).collect();
    if measurable.len() < n {
        flags.push(FitFlag::Censored);
    }
    if measurable.len() < 4 {
        // The first censored λ bounds λ^{1/s} ≥ −ln(floor) for C₁ = C₂ = 1.
        let (first, level) = (0..n)
            .find(|&i| m[i] < floor[i])
            .map_or((lambdas[n - 1], floor[n - 1]), |i| (lambdas[i], floor[i]));
        let s_bound = first.ln() / (-level.ln()).max(std::f64::consts::E).ln();
        return Err(GevreyError::FasterThanMeasurable {
            s_bound: s_bound.max(1.0),
        });
    }
    // Top half of the measurable ladder, but no fewer than MIN_LAMBDAS points.
    let k = measurable.len();
    let start = (k / 2).min(k.saturating_sub(MIN_LAMBDAS));
    let mut lam: Vec<f64> = measurable[start..].iter().map(|&i| lambdas[i]).collect();
    let mut mag: Vec<f64> = measurable[start..].iter().map(|&i| m[i]).collect();

    // Keep the longest non-increasing tail.
    let mut cut = lam.len() - 1;
    while cut > 0 && mag[cut - 1] >= mag[cut] * (1.0 - 1e-12) {
        cut -= 1;
    }
    if cut > 0 {
        flags.push(FitFlag::NonMonotone);
        if lam.len() - cut >= 4 {
            lam.drain(..cut);
            mag.drain(..cut);
        }
    }

    let y: Vec<f64> = mag.iter().map(|v| -v.ln()).collect();
    let double_log_slope = if y.iter().all(|&v| v > 0.0) {
        let lx: Vec<f64> = lam.iter().map(|l| l.ln()).collect();
        let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
        Some(linear_fit(&lx, &ly).0)
    } else {
        None
    };

    let rise = y[y.len() - 1] - y[0];
    let (beta, a, b, residual) = project_beta(&lam, &y);
    let point = Vec::new();
    if rise < NO_DECAY_RISE || beta < NO_DECAY_BETA || a <= 0.0 {
        let (_, b0, r0) = linear_fit(&vec![0.0; y.len()], &y);
        return Ok(DecayFit {
            point,
            s_hat: None,
            c1_hat: (-b0).exp(),
            c2_hat: f64::INFINITY,
            residual: r0,
            lambdas_used: lam,
            double_log_slope,
            flags,
        });
    }
    let mut s = 1.0 / beta;
    if s < 1.0 {
        s = 1.0;
        flags.push(FitFlag::Clamped);
    }
    Ok(DecayFit {
        point,
        s_hat: Some(s),
        c1_hat: (-b).exp(),
        c2_hat: 1.0 / a,
        residual,
        lambdas_used: lam,
        double_log_slope,
        flags,
    })
}

fn point_coords(x: &[Complex64]) -> Vec<(f64, f64)> {
    x.iter().map(|z| (z.re, z.im)).collect()
}

/// Magnitudes within this factor of a field's round-off level are censored.
pub const NOISE_MARGIN: f64 = 10.0;

/// Decay fit at grid point `p` of a transform field; magnitudes near the
/// field's round-off level are censored.
pub fn fit_gevrey_order(f: &FBIField, p: usize) -> Result<DecayFit, GevreyError> {
    let floor: Vec<f64> = f.noise_floor().iter().map(|v| NOISE_MARGIN * v).collect();
    let mut fit = fit_decay_above(f.lambdas(), &f.magnitudes(p), &floor)?;
    fit.point = point_coords(&f.grid().point(p));
    Ok(fit)
}

/// Fits at every grid point, in grid order.
pub fn fit_all(f: &FBIField) -> Vec<Result<DecayFit, GevreyError>> {
    (0..f.grid().len())
        .into_par_iter()
        .map(|p| fit_gevrey_order(f, p))
        .collect()
}

/// True when `m(λ) ≤ C₁ e^{−λ^{1/s}/c}` holds along the ladder with
/// `C₁ = e·m(λ₀)`: the envelope `log m + λ^{1/s}/c` may not climb more than
/// one nat above its starting value. Censored magnitudes pass.
pub fn decay_bound_holds(lambdas: &[f64], m: &[f64], s: f64, c: f64) -> bool {
    decay_bound_holds_above(lambdas, m, &vec![CENSOR_FLOOR; m.len()], s, c)
}

/// As [`decay_bound_holds`] with a per-λ censoring level.
pub fn decay_bound_holds_above(lambdas: &[f64], m: &[f64], floor: &[f64], s: f64, c: f64) -> bool {
    let beta = 1.0 / s;
    let g = |l: f64, v: f64| v.ln() + l.powf(beta) / c;
    let mut base = None;
    for ((&l, &v), &lo) in lambdas.iter().zip(m).zip(floor) {
        if v < lo.max(CENSOR_FLOOR) {
            continue;
        }
        let gv = g(l, v);
        match base {
            None => base = Some(gv),
            Some(b) if gv > b + 1.0 => return false,
            _ => {}
        }
    }
    true
}

/// Marks grid points where the decay bound of exponent `1/s` and constant
/// `threshold_c` holds across the whole ladder: evidence that the point is
/// outside the `s`-Gevrey wavefront set.
pub fn wf_mask(f: &FBIField, s: f64, threshold_c: f64) -> Result<Vec<bool>, GevreyError> {
    if !(s >= 1.0) {
        return Err(GevreyError::BadOrder(s));
    }
    let floor: Vec<f64> = f.noise_floor().iter().map(|v| NOISE_MARGIN * v).collect();
    Ok((0..f.grid().len())
        .into_par_iter()
        .map(|p| decay_bound_holds_above(f.lambdas(), &f.magnitudes(p), &floor, s, threshold_c))
        .collect())
}

/// Fraction of masked points among grid points within `radius` (max norm in
/// real coordinates) of `center`.
pub fn neighborhood_fraction(f: &FBIField, mask: &[bool], center: &[Complex64], radius: f64) -> f64 {
    let grid = f.grid();
    let mut hit = 0usize;
    let mut total = 0usize;
    for (p, &marked) in mask.iter().enumerate() {
        let x = grid.point(p);
        let near = x
            .iter()
            .zip(center)
            .all(|(a, b)| (a.re - b.re).abs() <= radius && (a.im - b.im).abs() <= radius);
        if near {
            total += 1;
            hit += marked as usize;
        }
    }
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}

/// CSV table of fits: coordinates, `s_hat` (`none` for no decay), `c1`,
/// `c2`, `residual`, `flags` (`|`-separated).
pub fn write_fits_csv<W: Write>(fits: &[DecayFit], w: W) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let dim = fits.first().map_or(1, |f| f.point.len());
    let mut header = Vec::new();
    for d in 1..=dim {
        if dim == 1 {
            header.extend(["x_re".to_string(), "x_im".to_string()]);
        } else {
            header.extend([format!("x{d}_re"), format!("x{d}_im")]);
        }
    }
    header.extend(["s_hat", "c1", "c2", "residual", "flags"].map(String::from));
    out.write_record(&header)?;
    for f in fits {
        let mut row: Vec<String> = f
            .point
            .iter()
            .flat_map(|(a, b)| [a.to_string(), b.to_string()])
            .collect();
        row.push(f.s_hat.map_or("none".into(), |s| s.to_string()));
        row.push(f.c1_hat.to_string());
        row.push(f.c2_hat.to_string());
        row.push(f.residual.to_string());
        row.push(
            f.flags
                .iter()
                .map(|fl| format!("{fl:?}"))
                .collect::<Vec<_>>()
                .join("|"),
        );
        out.write_record(&row)?;
    }
    out.flush()
}

/// Plain PBM (`P1`) of a mask over the grid: width is the last grid axis,
/// rows run over the remaining axes in grid order. `1` marks a point.
pub fn write_mask_pbm<W: Write>(
    f: &FBIField,
    mask: &[bool],
    comment: &str,
    mut w: W,
) -> std::io::Result<()> {
    let shape = f.grid().shape();
    let width = *shape.last().unwrap_or(&1);
    let height = mask.len() / width.max(1);
    writeln!(w, "P1")?;
    for line in comment.lines() {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "# axes (re, im) per complex dimension, last axis across")?;
    writeln!(w, "{width} {height}")?;
    for row in mask.chunks(width.max(1)) {
        let s: Vec<&str> = row.iter().map(|&b| if b { "1" } else { "0" }).collect();
        writeln!(w, "{}", s.join(" "))?;
    }
    Ok(())
}
