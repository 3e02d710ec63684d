//! Eigenpairs of `−u″ + x^{2(k−1)}u = E u` on the line.
//!
//! The lowest eigenvalues of the second-order three-point discretization are
//! isolated by Sturm bisection and their vectors by inverse iteration. Each
//! pair is then polished by Rayleigh-quotient iteration on the fourth-order
//! five-point discretization. Residuals are measured with an independent
//! sixth-order seven-point stencil.

mod banded;

pub use banded::{BandLu, BandMatrix};

use std::io::Write;
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::fbi::{Axis, SampledFunction};

/// Largest admissible `|φ|` at the first interior grid point; the Dirichlet
/// truncation then moves `E` by far less than `1e−12`.
pub const EDGE_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("domain too small: {0}")]
    DomainTooSmall(String),
    #[error("eigenpair {index} unconverged: residual {residual:.3e} > {tol:.1e}")]
    Unconverged {
        index: usize,
        residual: f64,
        tol: f64,
    },
    #[error("eigenfunction is not unit-normalized (norm {0})")]
    NotNormalized(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Parity {
    Even,
    Odd,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralOptions {
    /// Total grid points including the two Dirichlet ends; must be odd.
    pub npoints: usize,
    /// Half-width `L` of `[−L, L]`; `None` picks the WKB-based default.
    pub halfwidth: Option<f64>,
    /// Largest admissible residual from [`eigen_residual`].
    pub tol: f64,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            npoints: 2001,
            halfwidth: None,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub k: u32,
    pub index: usize,
    pub energy: f64,
    pub parity: Parity,
    axis: Axis,
    values: Vec<f64>,
}

impl EigenPair {
    /// Builds a pair from raw samples; the values must be unit-normalized.
    pub fn from_samples(
        k: u32,
        index: usize,
        energy: f64,
        axis: Axis,
        values: Vec<f64>,
    ) -> Result<Self, SpectralError> {
        if values.len() != axis.count {
            return Err(SpectralError::InvalidInput("sample count mismatch".into()));
        }
        let p = Self {
            k,
            index,
            energy,
            parity: if index % 2 == 0 { Parity::Even } else { Parity::Odd },
            axis,
            values,
        };
        let norm = p.l2_norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(SpectralError::NotNormalized(norm));
        }
        Ok(p)
    }

    pub fn axis(&self) -> &Axis {
        &self.axis
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn potential_power(&self) -> i32 {
        2 * (self.k as i32 - 1)
    }

    pub fn l2_norm(&self) -> f64 {
        (self.axis.spacing * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    pub fn as_sampled(&self) -> SampledFunction {
        let support = (1, self.axis.count - 1);
        SampledFunction::new(
            vec![self.axis],
            self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            vec![support],
        )
        .expect("eigenfunction samples are finite")
    }

    fn center(&self) -> usize {
        (self.axis.count - 1) / 2
    }

    pub fn value_at_zero(&self) -> f64 {
        self.values[self.center()]
    }

    /// `φ′(0)` by the sixth-order central difference.
    pub fn derivative_at_zero(&self) -> f64 {
        let c = self.center();
        let v = &self.values;
        let h = self.axis.spacing;
        (45.0 * (v[c + 1] - v[c - 1]) - 9.0 * (v[c + 2] - v[c - 2]) + (v[c + 3] - v[c - 3]))
            / (60.0 * h)
    }

    /// Local quintic (six-point Lagrange) interpolation; zero outside the grid.
    pub fn eval(&self, x: f64) -> f64 {
        match self.locate(x) {
            Some((i, t)) => self.lagrange(i, t, false),
            None => 0.0,
        }
    }

    /// Derivative of the interpolant used by [`EigenPair::eval`].
    pub fn eval_deriv(&self, x: f64) -> f64 {
        match self.locate(x) {
            Some((i, t)) => self.lagrange(i, t, true) / self.axis.spacing,
            None => 0.0,
        }
    }

    /// Interpolates through nodes `i−2..=i+3` at offset `t ∈ [0, 1]` from `i`.
    fn lagrange(&self, i: usize, t: f64, derivative: bool) -> f64 {
        const NODES: [f64; 6] = [-2.0, -1.0, 0.0, 1.0, 2.0, 3.0];
        let mut acc = 0.0;
        for (a, &na) in NODES.iter().enumerate() {
            let denom: f64 = NODES
                .iter()
                .enumerate()
                .filter(|&(b, _)| b != a)
                .map(|(_, &nb)| na - nb)
                .product();
            let weight = if derivative {
                (0..6)
                    .filter(|&b| b != a)
                    .map(|skip| {
                        NODES
                            .iter()
                            .enumerate()
                            .filter(|&(b, _)| b != a && b != skip)
                            .map(|(_, &nb)| t - nb)
                            .product::<f64>()
                    })
                    .sum::<f64>()
            } else {
                NODES
                    .iter()
                    .enumerate()
                    .filter(|&(b, _)| b != a)
                    .map(|(_, &nb)| t - nb)
                    .product::<f64>()
            };
            acc += weight / denom * self.sample(i as isize + na as isize);
        }
        acc
    }

    fn sample(&self, i: isize) -> f64 {
        if i < 0 || i as usize >= self.values.len() {
            0.0
        } else {
            self.values[i as usize]
        }
    }

    fn locate(&self, x: f64) -> Option<(usize, f64)> {
        let s = (x - self.axis.origin) / self.axis.spacing;
        if !(s >= 0.0) || s > (self.axis.count - 1) as f64 {
            return None;
        }
        let i = (s.floor() as usize).min(self.axis.count - 2);
        Some((i, s - i as f64))
    }

    /// Largest `|φ|` on the outermost `margin` fraction of each side.
    pub fn edge_max(&self, margin: f64) -> f64 {
        let n = self.values.len();
        let m = ((n as f64 * margin).ceil() as usize).max(2);
        self.values[..m]
            .iter()
            .chain(&self.values[n - m..])
            .map(|v| v.abs())
            .fold(0.0, f64::max)
    }

    /// CSV with columns `x,phi`.
    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["x", "phi"])?;
        for (i, v) in self.values.iter().enumerate() {
            out.write_record([self.axis.coord(i).to_string(), v.to_string()])?;
        }
        out.flush()
    }

    pub fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "k": self.k,
            "index": self.index,
            "energy": self.energy,
            "parity": self.parity,
            "residual": eigen_residual(self).ok(),
            "halfwidth": -self.axis.origin,
            "npoints": self.axis.count,
        })
    }
}

/// `∫₀¹ √(1 − t^p) dt`, with `t = 1 − s²` removing the endpoint singularity.
fn wkb_integral(p: f64) -> f64 {
    let rule = GaussLegendre::new(NonZeroUsize::new(64).unwrap());
    rule.integrate(0.0, 1.0, |s| {
        let t: f64 = 1.0 - s * s;
        2.0 * s * (1.0 - t.powf(p)).max(0.0).sqrt()
    })
}

/// WKB estimate of `E_n` for the potential `x^p`.
pub fn wkb_energy(k: u32, n: usize) -> f64 {
    let p = 2.0 * (k as f64 - 1.0);
    let i = wkb_integral(p);
    (std::f64::consts::PI * (n as f64 + 0.5) / (2.0 * i)).powf(2.0 * p / (p + 2.0))
}

/// `(3·E_count)^{1/(2(k−1))} + 4` with `E_count` from WKB.
pub fn default_halfwidth(k: u32, count: usize) -> f64 {
    let p = 2.0 * (k as f64 - 1.0);
    (3.0 * wkb_energy(k, count)).powf(1.0 / p) + 4.0
}

/// Sturm count: eigenvalues of the symmetric tridiagonal `(d, e)` below `x`.
fn sturm_count(d: &[f64], e: f64, x: f64) -> usize {
    let mut count = 0;
    let mut q = d[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for &di in &d[1..] {
        let prev = if q == 0.0 { f64::EPSILON * e.abs() } else { q };
        q = di - x - e * e / prev;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn bisect_eigenvalue(d: &[f64], e: f64, j: usize, lo: f64, hi: f64) -> f64 {
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if sturm_count(d, e, m) > j {
            b = m;
        } else {
            a = m;
        }
    }
    0.5 * (a + b)
}

fn normalize(v: &mut [f64], h: f64) {
    let n = (h * v.iter().map(|x| x * x).sum::<f64>()).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn potential(x: f64, p: i32) -> f64 {
    x.powi(p)
}

/// Lowest `count` eigenpairs of `−d²/dx² + x^{2(k−1)}`.
pub fn anharmonic_eigs(
    k: u32,
    count: usize,
    opts: SpectralOptions,
) -> Result<Vec<EigenPair>, SpectralError> {
    if k < 2 {
        return Err(SpectralError::InvalidInput(format!("k must be ≥ 2, got {k}")));
    }
    if count == 0 {
        return Err(SpectralError::InvalidInput("count must be ≥ 1".into()));
    }
    if opts.npoints < 9 || opts.npoints % 2 == 0 {
        return Err(SpectralError::InvalidInput(format!(
            "npoints must be odd and ≥ 9 so that x = 0 is a grid point, got {}",
            opts.npoints
        )));
    }
    let p = 2 * (k as i32 - 1);
    let l = opts.halfwidth.unwrap_or_else(|| default_halfwidth(k, count));
    if !(l > 0.0) {
        return Err(SpectralError::InvalidInput(format!("halfwidth must be positive, got {l}")));
    }
    let axis = Axis::span(-l, l, opts.npoints).map_err(|e| SpectralError::InvalidInput(e.to_string()))?;
    let h = axis.spacing;
    let n = opts.npoints - 2;
    let xs: Vec<f64> = (0..n).map(|i| axis.coord(i + 1)).collect();
    let pot: Vec<f64> = xs.iter().map(|&x| potential(x, p)).collect();

    // Second-order tridiagonal operator.
    let d2: Vec<f64> = pot.iter().map(|v| 2.0 / (h * h) + v).collect();
    let e2 = -1.0 / (h * h);
    let tri = BandMatrix::symmetric(&[d2.clone(), vec![e2; n]]);
    // Fourth-order pentadiagonal operator.
    let c = 1.0 / (12.0 * h * h);
    let penta = BandMatrix::symmetric(&[
        pot.iter().map(|v| 30.0 * c + v).collect(),
        vec![-16.0 * c; n],
        vec![c; n],
    ]);

    let upper = d2.iter().fold(0.0f64, |m, v| m.max(v + 2.0 * e2.abs()));
    let mut pairs = Vec::with_capacity(count);
    for j in 0..count {
        let e0 = bisect_eigenvalue(&d2, e2, j, 0.0, upper);

        // Inverse iteration on the tridiagonal operator.
        let lu = tri.lu_shifted(e0 * (1.0 + 1e-12) + 1e-14);
        let mut v: Vec<f64> = xs.iter().map(|&x| (-(x * x) / 2.0).exp() * (1.0 + x).powi(j as i32)).collect();
        normalize(&mut v, h);
        for _ in 0..3 {
            v = lu.solve(&v);
            normalize(&mut v, h);
        }

        // Rayleigh-quotient iteration on the fourth-order operator.
        let mut sigma = dot(&v, &penta.matvec(&v)) / dot(&v, &v);
        for _ in 0..30 {
            let w = penta.lu_shifted(sigma).solve(&v);
            v = w;
            normalize(&mut v, h);
            let next = dot(&v, &penta.matvec(&v)) / dot(&v, &v);
            let done = (next - sigma).abs() <= 1e-15 * next.abs().max(1.0);
            sigma = next;
            if done {
                break;
            }
        }

        let mut values = Vec::with_capacity(opts.npoints);
        values.push(0.0);
        values.extend_from_slice(&v);
        values.push(0.0);
        let mut pair = EigenPair {
            k,
            index: j,
            energy: sigma,
            parity: if j % 2 == 0 { Parity::Even } else { Parity::Odd },
            axis,
            values,
        };
        let sign = match pair.parity {
            Parity::Even => pair.value_at_zero(),
            Parity::Odd => pair.derivative_at_zero(),
        };
        if sign < 0.0 {
            pair.values.iter_mut().for_each(|x| *x = -*x);
        }
        let norm = pair.l2_norm();
        pair.values.iter_mut().for_each(|x| *x /= norm);

        if potential(l, p) < 2.0 * pair.energy {
            return Err(SpectralError::DomainTooSmall(format!(
                "x^{p} at the ends is {:.3} < 2E_{j} = {:.3}",
                potential(l, p),
                2.0 * pair.energy
            )));
        }
        let edge = pair.values[1].abs().max(pair.values[opts.npoints - 2].abs());
        if edge > EDGE_TOL {
            return Err(SpectralError::DomainTooSmall(format!(
                "eigenfunction {j} is {edge:.2e} next to the boundary"
            )));
        }
        let residual = eigen_residual(&pair)?;
        if residual > opts.tol {
            return Err(SpectralError::Unconverged {
                index: j,
                residual,
                tol: opts.tol,
            });
        }
        pairs.push(pair);
    }
    Ok(pairs)
}

/// Grid `L²` norm of `−u″ + x^{2(k−1)}u − Eu` with the sixth-order
/// seven-point second-difference stencil.
pub fn eigen_residual(pair: &EigenPair) -> Result<f64, SpectralError> {
    let norm = pair.l2_norm();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(SpectralError::NotNormalized(norm));
    }
    const W: [f64; 4] = [-490.0, 270.0, -27.0, 2.0];
    let h = pair.axis.spacing;
    let p = pair.potential_power();
    let n = pair.values.len();
    let v = |i: isize| {
        if i < 0 || i as usize >= n {
            0.0
        } else {
            pair.values[i as usize]
        }
    };
    let mut ss = 0.0;
    for i in 1..n - 1 {
        let ii = i as isize;
        let mut lap = W[0] * v(ii);
        for (o, &w) in W.iter().enumerate().skip(1) {
            lap += w * (v(ii - o as isize) + v(ii + o as isize));
        }
        lap /= 180.0 * h * h;
        let x = pair.axis.coord(i);
        let r = -lap + (potential(x, p) - pair.energy) * pair.values[i];
        ss += r * r;
    }
    Ok((h * ss).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_spectrum() {
        let pairs = anharmonic_eigs(2, 6, SpectralOptions::default()).unwrap();
        for (n, p) in pairs.iter().enumerate() {
            assert!((p.energy - (2 * n + 1) as f64).abs() < 1e-6, "n={n} E={}", p.energy);
            assert!(eigen_residual(p).unwrap() < 1e-6);
        }
    }

    #[test]
    fn parity_and_signs() {
        let pairs = anharmonic_eigs(3, 4, SpectralOptions::default()).unwrap();
        for p in &pairs {
            match p.parity {
                Parity::Even => assert!(p.value_at_zero() > 0.1),
                Parity::Odd => {
                    assert!(p.value_at_zero().abs() < 1e-12);
                    assert!(p.derivative_at_zero() > 0.1);
                }
            }
        }
    }

    #[test]
    fn perturbed_energy_raises_residual() {
        let mut p = anharmonic_eigs(2, 1, SpectralOptions::default()).unwrap().remove(0);
        p.energy += 0.1;
        assert!(eigen_residual(&p).unwrap() >= 0.01);
    }

    #[test]
    fn rejects_bad_input() {
        let even = SpectralOptions {
            npoints: 100,
            ..Default::default()
        };
        assert!(matches!(anharmonic_eigs(2, 1, even), Err(SpectralError::InvalidInput(_))));
        let narrow = SpectralOptions {
            halfwidth: Some(1.5),
            ..Default::default()
        };
        assert!(matches!(
            anharmonic_eigs(2, 3, narrow),
            Err(SpectralError::DomainTooSmall(_))
        ));
        let axis = Axis::span(-1.0, 1.0, 5).unwrap();
        assert!(matches!(
            EigenPair::from_samples(2, 0, 1.0, axis, vec![0.0; 5]),
            Err(SpectralError::NotNormalized(_))
        ));
    }

    #[test]
    fn wkb_is_exact_for_harmonic() {
        for n in 0..5 {
            assert!((wkb_energy(2, n) - (2 * n + 1) as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn interpolation_reproduces_quintics() {
        let axis = Axis::span(-2.0, 2.0, 41).unwrap();
        let f = |x: f64| 0.3 * x * x * x - x + 0.5 + 0.01 * x.powi(5);
        let values: Vec<f64> = axis.coords().map(f).collect();
        let pair = EigenPair {
            k: 2,
            index: 0,
            energy: 1.0,
            parity: Parity::Even,
            axis,
            values,
        };
        for &x in &[-1.234, 0.05, 1.7] {
            assert!((pair.eval(x) - f(x)).abs() < 1e-12);
            assert!((pair.eval_deriv(x) - (0.9 * x * x - 1.0 + 0.05 * x.powi(4))).abs() < 1e-11);
        }
        assert_eq!(pair.eval(5.0), 0.0);
    }
}
