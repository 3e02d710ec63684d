use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use num_complex::Complex64;
use rayon::prelude::*;

use super::{check_ladder, ComplexGrid, FBIField, FbiError, SampledFunction};

/// Largest admissible `λ·h²` for sampled input; the trapezoid aliasing error
/// then stays below `e^{−2π²/(λh²)} ≈ 7e−18`.
pub const MAX_LAMBDA_H2: f64 = 0.5;
/// Largest admissible kernel phase increment `λ·|x″|·h` between samples.
pub const MAX_PHASE_STEP: f64 = 1.0;
/// Kernel values below `e^{−CUTOFF_EXPONENT}` are dropped (they underflow).
pub const CUTOFF_EXPONENT: f64 = 700.0;
/// Round-off in a sum is taken as this many ulps of `Σ|terms|`.
pub const ROUNDOFF_ULPS: f64 = 64.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformOptions {
    /// Gauss–Legendre nodes per panel for closure input.
    pub gl_order: usize,
    /// Panel width is `panel_scale / √λ`, shrunk further for oscillation.
    pub panel_scale: f64,
}

impl Default for TransformOptions {
    fn default() -> Self {
        Self {
            gl_order: 16,
            panel_scale: 1.0,
        }
    }
}

/// `e^{−λΦ₀(x)} e^{−λ(x−y)²/2}` for one complex coordinate.
#[inline]
fn reduced_kernel(x: Complex64, y: f64, lambda: f64) -> Complex64 {
    let d = x.re - y;
    Complex64::from_polar((-0.5 * lambda * d * d).exp(), -lambda * x.im * d)
}

fn window_radius(lambda: f64) -> f64 {
    (2.0 * CUTOFF_EXPONENT / lambda).sqrt()
}

fn check_sampled(u: &SampledFunction, grid: &ComplexGrid, lambda: f64) -> Result<(), FbiError> {
    for (axis, a) in u.axes().iter().enumerate() {
        let h = a.spacing;
        let v = lambda * h * h;
        if v > MAX_LAMBDA_H2 {
            return Err(FbiError::Unresolved {
                lambda,
                what: "lambda*h^2",
                value: v,
                limit: MAX_LAMBDA_H2,
            });
        }
        let (_, im) = grid.axes(axis);
        let v = lambda * im.origin.abs().max(im.end().abs()) * h;
        if v > MAX_PHASE_STEP {
            return Err(FbiError::Unresolved {
                lambda,
                what: "lambda*|Im x|*h",
                value: v,
                limit: MAX_PHASE_STEP,
            });
        }
    }
    Ok(())
}

fn check_support(u: &SampledFunction) -> Result<(), FbiError> {
    for (axis, (&(lo, hi), a)) in u.support().iter().zip(u.axes()).enumerate() {
        if lo < hi && (lo == 0 || hi == a.count) {
            return Err(FbiError::SupportTouchesBoundary { axis });
        }
    }
    Ok(())
}

/// One axis of the sampled sum: `(global index, weight × kernel)` restricted
/// to the support and the kernel window.
fn sampled_factors(
    u: &SampledFunction,
    d: usize,
    x: Complex64,
    lambda: f64,
) -> Vec<(usize, Complex64)> {
    let a = u.axis(d);
    let (slo, shi) = u.support()[d];
    let r = window_radius(lambda);
    let (wlo, whi) = a.index_range(x.re - r, x.re + r);
    (slo.max(wlo)..shi.min(whi))
        .map(|i| (i, a.spacing * reduced_kernel(x, a.coord(i), lambda)))
        .collect()
}

/// Fine (all samples) and coarse (even samples, doubled weight) sums, and
/// `Σ|terms|` of the fine sum.
fn sampled_sum(u: &SampledFunction, x: &[Complex64], lambda: f64) -> (Complex64, Complex64, f64) {
    let zero = Complex64::new(0.0, 0.0);
    let vals = u.values();
    match u.dim() {
        1 => {
            let mut fine = zero;
            let mut coarse = zero;
            let mut abs = 0.0;
            for (i, k) in sampled_factors(u, 0, x[0], lambda) {
                let t = k * vals[i];
                fine += t;
                abs += t.norm();
                if i % 2 == 0 {
                    coarse += 2.0 * t;
                }
            }
            (fine, coarse, abs)
        }
        _ => {
            let f0 = sampled_factors(u, 0, x[0], lambda);
            let f1 = sampled_factors(u, 1, x[1], lambda);
            let n1 = u.axis(1).count;
            let mut fine = zero;
            let mut coarse = zero;
            let mut abs = 0.0;
            for &(i, k0) in &f0 {
                let row = &vals[i * n1..(i + 1) * n1];
                let mut inner_f = zero;
                let mut inner_c = zero;
                let mut inner_a = 0.0;
                for &(j, k1) in &f1 {
                    let t = k1 * row[j];
                    inner_f += t;
                    inner_a += t.norm();
                    if j % 2 == 0 {
                        inner_c += 2.0 * t;
                    }
                }
                fine += k0 * inner_f;
                abs += k0.norm() * inner_a;
                if i % 2 == 0 {
                    coarse += 2.0 * k0 * inner_c;
                }
            }
            (fine, coarse, abs)
        }
    }
}

/// Reduced transform `e^{−λΦ₀(x)} Tu(x, λ)` of sampled data at one point.
pub fn transform_at(u: &SampledFunction, x: &[Complex64], lambda: f64) -> Result<Complex64, FbiError> {
    if x.len() != u.dim() {
        return Err(FbiError::DimensionMismatch {
            expected: u.dim(),
            found: x.len(),
        });
    }
    check_support(u)?;
    for (d, a) in u.axes().iter().enumerate() {
        let v = lambda * a.spacing * a.spacing;
        if v > MAX_LAMBDA_H2 {
            return Err(FbiError::Unresolved {
                lambda,
                what: "lambda*h^2",
                value: v,
                limit: MAX_LAMBDA_H2,
            });
        }
        let v = lambda * x[d].im.abs() * a.spacing;
        if v > MAX_PHASE_STEP {
            return Err(FbiError::Unresolved {
                lambda,
                what: "lambda*|Im x|*h",
                value: v,
                limit: MAX_PHASE_STEP,
            });
        }
    }
    Ok(sampled_sum(u, x, lambda).0)
}

/// FBI transform of sampled data by the composite trapezoid rule on the
/// sample grid. The error bound per λ is the largest gap between the full
/// sum and the every-other-sample sum; the noise floor per λ is the largest
/// round-off estimate.
pub fn fbi_transform(
    u: &SampledFunction,
    grid: &ComplexGrid,
    lambdas: &[f64],
) -> Result<FBIField, FbiError> {
    check_ladder(lambdas)?;
    if grid.dim() != u.dim() {
        return Err(FbiError::DimensionMismatch {
            expected: u.dim(),
            found: grid.dim(),
        });
    }
    check_support(u)?;
    for &l in lambdas {
        check_sampled(u, grid, l)?;
    }
    let nl = lambdas.len();
    let rows: Vec<Vec<(Complex64, f64, f64)>> = (0..grid.len())
        .into_par_iter()
        .map(|p| {
            let x = grid.point(p);
            lambdas
                .iter()
                .map(|&l| {
                    let (fine, coarse, abs) = sampled_sum(u, &x, l);
                    (fine, (fine - coarse).norm(), roundoff(abs))
                })
                .collect()
        })
        .collect();
    finish(grid, lambdas, nl, rows)
}

fn roundoff(abs_sum: f64) -> f64 {
    ROUNDOFF_ULPS * f64::EPSILON * abs_sum
}

fn finish(
    grid: &ComplexGrid,
    lambdas: &[f64],
    nl: usize,
    rows: Vec<Vec<(Complex64, f64, f64)>>,
) -> Result<FBIField, FbiError> {
    let mut reduced = Vec::with_capacity(grid.len() * nl);
    let mut err = vec![0.0f64; nl];
    let mut noise = vec![0.0f64; nl];
    for row in rows {
        for (l, (v, e, r)) in row.into_iter().enumerate() {
            reduced.push(v);
            err[l] = err[l].max(e + r);
            noise[l] = noise[l].max(r);
        }
    }
    Ok(FBIField::from_reduced(grid.clone(), lambdas.to_vec(), reduced, err)?.with_noise_floor(noise))
}

/// Panel nodes covering `[a, b]` with panels no wider than `width`.
fn panel_nodes(rule: &GaussLegendre, a: f64, b: f64, width: f64) -> Vec<(f64, f64)> {
    if b <= a {
        return Vec::new();
    }
    let panels = ((b - a) / width).ceil().max(1.0) as usize;
    let pw = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * rule.as_node_weight_pairs().len());
    for k in 0..panels {
        let lo = a + k as f64 * pw;
        for &(t, w) in rule.as_node_weight_pairs() {
            out.push((lo + 0.5 * pw * (t + 1.0), 0.5 * pw * w));
        }
    }
    out
}

fn gl_rule(order: usize) -> GaussLegendre {
    GaussLegendre::new(NonZeroUsize::new(order.max(2)).expect("order ≥ 2"))
}

/// FBI transform of an analytic closure `f(y)` supported in the box
/// `support` (one interval per dimension) by composite Gauss–Legendre panels
/// of width `panel_scale/√λ`, narrowed when `λ|x″|` makes the kernel
/// oscillate. The error bound compares against a rule of half the order.
pub fn fbi_transform_fn<F>(
    f: F,
    support: &[(f64, f64)],
    grid: &ComplexGrid,
    lambdas: &[f64],
    opts: TransformOptions,
) -> Result<FBIField, FbiError>
where
    F: Fn(&[f64]) -> Complex64 + Sync,
{
    check_ladder(lambdas)?;
    if support.len() != grid.dim() {
        return Err(FbiError::DimensionMismatch {
            expected: grid.dim(),
            found: support.len(),
        });
    }
    let fine_rule = gl_rule(opts.gl_order);
    let coarse_rule = gl_rule(opts.gl_order / 2);
    let nl = lambdas.len();
    let rows: Vec<Vec<(Complex64, f64, f64)>> = (0..grid.len())
        .into_par_iter()
        .map(|p| {
            let x = grid.point(p);
            lambdas
                .iter()
                .map(|&l| {
                    let (fine, abs) = closure_sum(&f, support, &x, l, &fine_rule, opts.panel_scale);
                    let (coarse, _) = closure_sum(&f, support, &x, l, &coarse_rule, opts.panel_scale);
                    (fine, (fine - coarse).norm(), roundoff(abs))
                })
                .collect()
        })
        .collect();
    finish(grid, lambdas, nl, rows)
}

fn closure_sum<F>(
    f: &F,
    support: &[(f64, f64)],
    x: &[Complex64],
    lambda: f64,
    rule: &GaussLegendre,
    panel_scale: f64,
) -> (Complex64, f64)
where
    F: Fn(&[f64]) -> Complex64,
{
    let r = window_radius(lambda);
    let factors: Vec<Vec<(f64, Complex64)>> = x
        .iter()
        .zip(support)
        .map(|(&xd, &(a, b))| {
            let width = (panel_scale / lambda.sqrt())
                .min(std::f64::consts::PI / (lambda * xd.im.abs()).max(1e-300));
            panel_nodes(rule, a.max(xd.re - r), b.min(xd.re + r), width)
                .into_iter()
                .map(|(y, w)| (y, w * reduced_kernel(xd, y, lambda)))
                .collect()
        })
        .collect();
    let mut acc = Complex64::new(0.0, 0.0);
    let mut abs = 0.0;
    match factors.len() {
        1 => {
            for &(y, k) in &factors[0] {
                let t = k * f(&[y]);
                acc += t;
                abs += t.norm();
            }
        }
        _ => {
            for &(y0, k0) in &factors[0] {
                let mut inner = Complex64::new(0.0, 0.0);
                let mut inner_a = 0.0;
                for &(y1, k1) in &factors[1] {
                    let t = k1 * f(&[y0, y1]);
                    inner += t;
                    inner_a += t.norm();
                }
                acc += k0 * inner;
                abs += k0.norm() * inner_a;
            }
        }
    }
    (acc, abs)
}

/// `e^{−λΦ₀(x)}|Tu(x, λ)|`, indexed `(point, λ)`.
pub fn normalized_magnitude(f: &FBIField) -> Vec<f64> {
    f.reduced_values().iter().map(|v| v.norm()).collect()
}

/// Trapezoid weights of `L(dx)` restricted to `mask`: along each real axis a
/// point carries half a cell toward every masked neighbour.
fn mask_weights(grid: &ComplexGrid, mask: &[bool]) -> Vec<f64> {
    let shape = grid.shape();
    let spacings: Vec<f64> = (0..grid.dim())
        .flat_map(|d| {
            let (re, im) = grid.axes(d);
            [re.spacing, im.spacing]
        })
        .collect();
    (0..grid.len())
        .map(|p| {
            if !mask[p] {
                return 0.0;
            }
            let idx = grid.unflatten(p);
            let mut w = 1.0;
            for a in 0..shape.len() {
                let mut side = 0.0;
                let mut probe = idx.clone();
                if idx[a] > 0 {
                    probe[a] = idx[a] - 1;
                    if mask[grid.flatten(&probe)] {
                        side += 0.5;
                    }
                }
                if idx[a] + 1 < shape[a] {
                    probe[a] = idx[a] + 1;
                    if mask[grid.flatten(&probe)] {
                        side += 0.5;
                    }
                }
                w *= side * spacings[a];
            }
            w
        })
        .collect()
}

fn check_mask(grid: &ComplexGrid, len: usize, mask: &[bool]) -> Result<(), FbiError> {
    if mask.len() != grid.len() || len != grid.len() {
        return Err(FbiError::DimensionMismatch {
            expected: grid.len(),
            found: mask.len().min(len),
        });
    }
    if !mask.iter().any(|&m| m) {
        return Err(FbiError::EmptyMask);
    }
    Ok(())
}

/// Measure of the masked region under the quadrature used by the Φ-norms.
pub fn mask_measure(grid: &ComplexGrid, mask: &[bool]) -> Result<f64, FbiError> {
    check_mask(grid, grid.len(), mask)?;
    Ok(mask_weights(grid, mask).iter().sum())
}

/// `∫_Ω e^{−2λΦ}|u|² L(dx)`.
pub fn phi_norm_sq(
    u: &[Complex64],
    grid: &ComplexGrid,
    phi: &[f64],
    lambda: f64,
    mask: &[bool],
) -> Result<f64, FbiError> {
    check_mask(grid, u.len(), mask)?;
    if phi.len() != grid.len() {
        return Err(FbiError::DimensionMismatch {
            expected: grid.len(),
            found: phi.len(),
        });
    }
    let w = mask_weights(grid, mask);
    Ok(u.iter()
        .zip(phi)
        .zip(&w)
        .filter(|(_, &w)| w > 0.0)
        .map(|((v, &f), &w)| {
            let a = v.norm();
            if a == 0.0 {
                0.0
            } else {
                w * (2.0 * (a.ln() - lambda * f)).exp()
            }
        })
        .sum())
}

/// `‖u‖_Φ`, the square root of [`phi_norm_sq`].
pub fn phi_norm(
    u: &[Complex64],
    grid: &ComplexGrid,
    phi: &[f64],
    lambda: f64,
    mask: &[bool],
) -> Result<f64, FbiError> {
    phi_norm_sq(u, grid, phi, lambda, mask).map(f64::sqrt)
}

/// `∫_Ω |v|² L(dx)` for samples already reduced by `e^{−λΦ}`.
pub fn reduced_phi_norm_sq(
    v: &[Complex64],
    grid: &ComplexGrid,
    mask: &[bool],
) -> Result<f64, FbiError> {
    check_mask(grid, v.len(), mask)?;
    let w = mask_weights(grid, mask);
    Ok(v.iter().zip(&w).map(|(a, &w)| w * a.norm_sqr()).sum())
}
