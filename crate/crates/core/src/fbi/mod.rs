//! Discrete FBI transform with the classical phase `φ₀(x, y) = (i/2)(x − y)²`.
//!
//! Values are stored in reduced form `e^{−λΦ₀(x)} Tu(x, λ)` with
//! `Φ₀(x) = |Im x|²/2`. The reduced kernel has modulus `e^{−λ|x′−y|²/2}`, so
//! nothing overflows even for `λ` in the thousands.

mod io;
mod transform;

pub use io::{
    read_sampled_binary, read_sampled_csv, write_field_csv, write_sampled_binary,
    write_sampled_csv,
};
pub use transform::{
    fbi_transform, fbi_transform_fn, mask_measure, normalized_magnitude, phi_norm, phi_norm_sq,
    reduced_phi_norm_sq, transform_at, TransformOptions, CUTOFF_EXPONENT, MAX_LAMBDA_H2,
    MAX_PHASE_STEP,
};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FbiError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("sample values must be finite")]
    NonFinite,
    #[error("support box exceeds the grid along axis {axis}")]
    SupportOutOfGrid { axis: usize },
    #[error("support touches the grid boundary along axis {axis}; pad the grid")]
    SupportTouchesBoundary { axis: usize },
    #[error("kernel unresolved at lambda={lambda}: {what} = {value:.3} exceeds {limit}")]
    Unresolved {
        lambda: f64,
        what: &'static str,
        value: f64,
        limit: f64,
    },
    #[error("invalid lambda ladder: {0}")]
    BadLadder(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("mask selects no grid points")]
    EmptyMask,
    #[error("malformed input: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Uniform real axis `origin + i·spacing`, `i < count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub origin: f64,
    pub spacing: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(origin: f64, spacing: f64, count: usize) -> Result<Self, FbiError> {
        if !(spacing > 0.0) || !origin.is_finite() || !spacing.is_finite() {
            return Err(FbiError::InvalidGrid(format!(
                "spacing must be positive and finite, got {spacing}"
            )));
        }
        if count < 2 {
            return Err(FbiError::InvalidGrid(format!("count must be ≥ 2, got {count}")));
        }
        Ok(Self {
            origin,
            spacing,
            count,
        })
    }

    /// `count` points spanning `[lo, hi]` inclusive.
    pub fn span(lo: f64, hi: f64, count: usize) -> Result<Self, FbiError> {
        if count < 2 || !(hi > lo) {
            return Err(FbiError::InvalidGrid(format!(
                "bad span [{lo}, {hi}] with {count} points"
            )));
        }
        Self::new(lo, (hi - lo) / (count - 1) as f64, count)
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.origin + i as f64 * self.spacing
    }

    pub fn end(&self) -> f64 {
        self.coord(self.count - 1)
    }

    pub fn coords(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(|i| self.coord(i))
    }

    /// Index range `[lo, hi)` of the points lying in `[a, b]`.
    pub fn index_range(&self, a: f64, b: f64) -> (usize, usize) {
        let eps = 1e-9 * self.spacing;
        let lo = ((a - self.origin - eps) / self.spacing).ceil().max(0.0) as usize;
        let hi = ((b - self.origin + eps) / self.spacing).floor() + 1.0;
        let hi = (hi.max(0.0) as usize).min(self.count);
        (lo.min(hi), hi)
    }
}

/// Complex samples on a uniform grid in one or two real variables, row-major
/// with the last axis fastest. Outside `support` the values are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    axes: Vec<Axis>,
    values: Vec<Complex64>,
    support: Vec<(usize, usize)>,
}

impl SampledFunction {
    pub fn new(
        axes: Vec<Axis>,
        values: Vec<Complex64>,
        support: Vec<(usize, usize)>,
    ) -> Result<Self, FbiError> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(FbiError::InvalidGrid(format!(
                "sampled functions have 1 or 2 axes, got {}",
                axes.len()
            )));
        }
        let n: usize = axes.iter().map(|a| a.count).product();
        if values.len() != n {
            return Err(FbiError::DimensionMismatch {
                expected: n,
                found: values.len(),
            });
        }
        if support.len() != axes.len() {
            return Err(FbiError::DimensionMismatch {
                expected: axes.len(),
                found: support.len(),
            });
        }
        for (axis, (&(lo, hi), a)) in support.iter().zip(&axes).enumerate() {
            if lo > hi || hi > a.count {
                return Err(FbiError::SupportOutOfGrid { axis });
            }
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(FbiError::NonFinite);
        }
        let mut s = Self {
            axes,
            values,
            support,
        };
        s.clear_outside_support();
        Ok(s)
    }

    /// Support is the bounding box of the nonzero samples.
    pub fn from_values(axes: Vec<Axis>, values: Vec<Complex64>) -> Result<Self, FbiError> {
        let dims = axes.len();
        let full = axes.iter().map(|a| (0, a.count)).collect();
        let mut s = Self::new(axes, values, full)?;
        let mut lo = vec![usize::MAX; dims];
        let mut hi = vec![0; dims];
        for (flat, v) in s.values.iter().enumerate() {
            if *v != Complex64::new(0.0, 0.0) {
                let idx = s.unflatten(flat);
                for d in 0..dims {
                    lo[d] = lo[d].min(idx[d]);
                    hi[d] = hi[d].max(idx[d] + 1);
                }
            }
        }
        s.support = (0..dims)
            .map(|d| if lo[d] == usize::MAX { (0, 0) } else { (lo[d], hi[d]) })
            .collect();
        Ok(s)
    }

    pub fn zeros(axes: Vec<Axis>) -> Result<Self, FbiError> {
        let n = axes.iter().map(|a| a.count).product();
        let support = axes.iter().map(|_| (0, 0)).collect();
        Self::new(axes, vec![Complex64::new(0.0, 0.0); n], support)
    }

    /// Samples `f` on the points of `axis` inside `[a, b]`.
    pub fn from_fn_1d(
        axis: Axis,
        (a, b): (f64, f64),
        f: impl Fn(f64) -> Complex64,
    ) -> Result<Self, FbiError> {
        let (lo, hi) = axis.index_range(a, b);
        let mut values = vec![Complex64::new(0.0, 0.0); axis.count];
        for (i, v) in values.iter_mut().enumerate().take(hi).skip(lo) {
            *v = f(axis.coord(i));
        }
        Self::new(vec![axis], values, vec![(lo, hi)])
    }

    /// Samples `f` on the points of the box `[a₁, b₁] × [a₂, b₂]`.
    pub fn from_fn_2d(
        axes: [Axis; 2],
        boxes: [(f64, f64); 2],
        f: impl Fn(f64, f64) -> Complex64,
    ) -> Result<Self, FbiError> {
        let r0 = axes[0].index_range(boxes[0].0, boxes[0].1);
        let r1 = axes[1].index_range(boxes[1].0, boxes[1].1);
        let mut values = vec![Complex64::new(0.0, 0.0); axes[0].count * axes[1].count];
        for i in r0.0..r0.1 {
            for j in r1.0..r1.1 {
                values[i * axes[1].count + j] = f(axes[0].coord(i), axes[1].coord(j));
            }
        }
        Self::new(axes.to_vec(), values, vec![r0, r1])
    }

    /// Unit-mass discrete delta at the grid point nearest `y0` (1-D).
    pub fn delta_1d(axis: Axis, y0: f64) -> Result<Self, FbiError> {
        let i = ((y0 - axis.origin) / axis.spacing).round();
        if i < 0.0 || i as usize >= axis.count {
            return Err(FbiError::SupportOutOfGrid { axis: 0 });
        }
        let i = i as usize;
        let mut values = vec![Complex64::new(0.0, 0.0); axis.count];
        values[i] = Complex64::new(1.0 / axis.spacing, 0.0);
        Self::new(vec![axis], values, vec![(i, i + 1)])
    }

    fn clear_outside_support(&mut self) {
        let zero = Complex64::new(0.0, 0.0);
        for flat in 0..self.values.len() {
            let idx = self.unflatten(flat);
            let inside = idx
                .iter()
                .zip(&self.support)
                .all(|(&i, &(lo, hi))| i >= lo && i < hi);
            if !inside {
                self.values[flat] = zero;
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, d: usize) -> &Axis {
        &self.axes[d]
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn support(&self) -> &[(usize, usize)] {
        &self.support
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.axes)
            .fold(0, |acc, (&i, a)| acc * a.count + i)
    }

    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.axes.len()];
        for d in (0..self.axes.len()).rev() {
            idx[d] = flat % self.axes[d].count;
            flat /= self.axes[d].count;
        }
        idx
    }

    pub fn coords_of(&self, flat: usize) -> Vec<f64> {
        self.unflatten(flat)
            .iter()
            .zip(&self.axes)
            .map(|(&i, a)| a.coord(i))
            .collect()
    }

    pub fn get(&self, idx: &[usize]) -> Complex64 {
        self.values[self.flatten(idx)]
    }

    /// Pointwise `a·self + b·other` on identical grids; the support is the
    /// union box.
    pub fn linear_combination(
        &self,
        a: Complex64,
        other: &Self,
        b: Complex64,
    ) -> Result<Self, FbiError> {
        if self.axes != other.axes {
            return Err(FbiError::InvalidGrid("grids differ".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(u, v)| a * u + b * v)
            .collect();
        let support = self
            .support
            .iter()
            .zip(&other.support)
            .map(|(&(l1, h1), &(l2, h2))| match (l1 < h1, l2 < h2) {
                (true, true) => (l1.min(l2), h1.max(h2)),
                (true, false) => (l1, h1),
                _ => (l2, h2),
            })
            .collect();
        Self::new(self.axes.clone(), values, support)
    }

    /// Shifts the samples by `steps` grid points per axis (zero fill).
    pub fn shift(&self, steps: &[isize]) -> Result<Self, FbiError> {
        let mut values = vec![Complex64::new(0.0, 0.0); self.values.len()];
        let mut support = Vec::with_capacity(self.dim());
        for (d, (&(lo, hi), &s)) in self.support.iter().zip(steps).enumerate() {
            let nlo = lo as isize + s;
            let nhi = hi as isize + s;
            if nlo < 0 || nhi > self.axes[d].count as isize {
                return Err(FbiError::SupportOutOfGrid { axis: d });
            }
            support.push((nlo as usize, nhi as usize));
        }
        for (flat, v) in self.values.iter().enumerate() {
            if *v == Complex64::new(0.0, 0.0) {
                continue;
            }
            let idx: Vec<usize> = self
                .unflatten(flat)
                .iter()
                .zip(steps)
                .map(|(&i, &s)| (i as isize + s) as usize)
                .collect();
            values[self.flatten(&idx)] = *v;
        }
        Self::new(self.axes.clone(), values, support)
    }
}

/// Product grid over `x ∈ ℂⁿ`, `n ∈ {1, 2}`: one real-part and one
/// imaginary-part axis per complex dimension. Points are ordered
/// `(re₁, im₁, re₂, im₂)` with the last index fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexGrid {
    dims: Vec<(Axis, Axis)>,
}

impl ComplexGrid {
    pub fn new(dims: Vec<(Axis, Axis)>) -> Result<Self, FbiError> {
        if dims.is_empty() || dims.len() > 2 {
            return Err(FbiError::InvalidGrid(format!(
                "complex grids have dimension 1 or 2, got {}",
                dims.len()
            )));
        }
        for (re, im) in &dims {
            Axis::new(re.origin, re.spacing, re.count)?;
            Axis::new(im.origin, im.spacing, im.count)?;
        }
        Ok(Self { dims })
    }

    pub fn one_dim(re: Axis, im: Axis) -> Result<Self, FbiError> {
        Self::new(vec![(re, im)])
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn axes(&self, d: usize) -> (Axis, Axis) {
        self.dims[d]
    }

    pub fn shape(&self) -> Vec<usize> {
        self.dims
            .iter()
            .flat_map(|(re, im)| [re.count, im.count])
            .collect()
    }

    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index into the flattened `(re₁, im₁, …)` shape.
    pub fn unflatten(&self, mut p: usize) -> Vec<usize> {
        let shape = self.shape();
        let mut idx = vec![0; shape.len()];
        for a in (0..shape.len()).rev() {
            idx[a] = p % shape[a];
            p /= shape[a];
        }
        idx
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(self.shape())
            .fold(0, |acc, (&i, n)| acc * n + i)
    }

    pub fn point(&self, p: usize) -> Vec<Complex64> {
        let idx = self.unflatten(p);
        self.dims
            .iter()
            .enumerate()
            .map(|(d, (re, im))| Complex64::new(re.coord(idx[2 * d]), im.coord(idx[2 * d + 1])))
            .collect()
    }

    /// `Φ₀(x) = Σ (Im xⱼ)²/2`.
    pub fn phi0(&self, p: usize) -> f64 {
        self.point(p).iter().map(|z| 0.5 * z.im * z.im).sum()
    }

    /// Cell area of the Lebesgue measure `L(dx)`.
    pub fn cell_measure(&self) -> f64 {
        self.dims
            .iter()
            .map(|(re, im)| re.spacing * im.spacing)
            .product()
    }

    /// Largest `|Im xⱼ|` over the grid.
    pub fn max_abs_im(&self) -> f64 {
        self.dims
            .iter()
            .map(|(_, im)| im.origin.abs().max(im.end().abs()))
            .fold(0.0, f64::max)
    }

    /// Grid points whose coordinates lie within `[lo, hi]` componentwise
    /// in every real coordinate `(re₁, im₁, …)`.
    pub fn box_mask(&self, lo: &[f64], hi: &[f64]) -> Vec<bool> {
        (0..self.len())
            .map(|p| {
                let coords: Vec<f64> = self.point(p).iter().flat_map(|z| [z.re, z.im]).collect();
                coords
                    .iter()
                    .zip(lo.iter().zip(hi))
                    .all(|(&c, (&a, &b))| c >= a - 1e-12 && c <= b + 1e-12)
            })
            .collect()
    }
}

/// Reduced transform values `e^{−λΦ₀(x)} Tu(x, λ)` indexed `(point, λ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FBIField {
    grid: ComplexGrid,
    lambdas: Vec<f64>,
    reduced: Vec<Complex64>,
    phi0: Vec<f64>,
    /// Estimated absolute quadrature error per λ (reduced units).
    error_bound: Vec<f64>,
    /// Round-off level per λ; magnitudes below it carry no information.
    noise_floor: Vec<f64>,
}

impl FBIField {
    pub fn from_reduced(
        grid: ComplexGrid,
        lambdas: Vec<f64>,
        reduced: Vec<Complex64>,
        error_bound: Vec<f64>,
    ) -> Result<Self, FbiError> {
        check_ladder(&lambdas)?;
        let expected = grid.len() * lambdas.len();
        if reduced.len() != expected {
            return Err(FbiError::DimensionMismatch {
                expected,
                found: reduced.len(),
            });
        }
        if error_bound.len() != lambdas.len() {
            return Err(FbiError::DimensionMismatch {
                expected: lambdas.len(),
                found: error_bound.len(),
            });
        }
        let phi0 = (0..grid.len()).map(|p| grid.phi0(p)).collect();
        let noise_floor = vec![0.0; lambdas.len()];
        Ok(Self {
            grid,
            lambdas,
            reduced,
            phi0,
            error_bound,
            noise_floor,
        })
    }

    /// Attaches a per-λ round-off level (zero by default).
    pub fn with_noise_floor(mut self, noise_floor: Vec<f64>) -> Self {
        assert_eq!(noise_floor.len(), self.lambdas.len(), "one level per lambda");
        self.noise_floor = noise_floor;
        self
    }

    pub fn noise_floor(&self) -> &[f64] {
        &self.noise_floor
    }

    pub fn grid(&self) -> &ComplexGrid {
        &self.grid
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn phi0(&self) -> &[f64] {
        &self.phi0
    }

    pub fn error_bound(&self) -> &[f64] {
        &self.error_bound
    }

    pub fn reduced(&self, p: usize, l: usize) -> Complex64 {
        self.reduced[p * self.lambdas.len() + l]
    }

    pub fn reduced_values(&self) -> &[Complex64] {
        &self.reduced
    }

    /// `Tu(x, λ)` itself; may overflow to infinity for large `λΦ₀`.
    pub fn value(&self, p: usize, l: usize) -> Complex64 {
        self.reduced(p, l) * (self.lambdas[l] * self.phi0[p]).exp()
    }

    /// `m(λ) = e^{−λΦ₀}|Tu|` along the ladder at point `p`.
    pub fn magnitudes(&self, p: usize) -> Vec<f64> {
        (0..self.lambdas.len())
            .map(|l| self.reduced(p, l).norm())
            .collect()
    }
}

pub(crate) fn check_ladder(lambdas: &[f64]) -> Result<(), FbiError> {
    if lambdas.is_empty() {
        return Err(FbiError::BadLadder("empty".into()));
    }
    if lambdas.iter().any(|&l| !(l >= 1.0) || !l.is_finite()) {
        return Err(FbiError::BadLadder("every lambda must be finite and ≥ 1".into()));
    }
    if lambdas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FbiError::BadLadder("lambdas must be strictly increasing".into()));
    }
    Ok(())
}

/// `count` geometrically spaced values from `lo` to `hi`.
pub fn geometric_ladder(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let r = (hi / lo).ln() / (count - 1) as f64;
    (0..count)
        .map(|i| if i + 1 == count { hi } else { lo * (r * i as f64).exp() })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_ranges() {
        let a = Axis::span(-1.0, 1.0, 21).unwrap();
        assert_eq!(a.index_range(-0.5, 0.5), (5, 16));
        assert_eq!(a.index_range(-5.0, 5.0), (0, 21));
        assert!(Axis::new(0.0, 0.0, 4).is_err());
        assert!(Axis::new(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn support_from_values() {
        let a = Axis::span(0.0, 1.0, 5).unwrap();
        let mut v = vec![Complex64::new(0.0, 0.0); 5];
        v[2] = Complex64::new(1.0, 0.0);
        v[3] = Complex64::new(0.0, 2.0);
        let s = SampledFunction::from_values(vec![a], v).unwrap();
        assert_eq!(s.support(), &[(2, 4)]);
    }

    #[test]
    fn complex_grid_layout() {
        let g = ComplexGrid::one_dim(
            Axis::span(-1.0, 1.0, 3).unwrap(),
            Axis::span(0.0, 2.0, 5).unwrap(),
        )
        .unwrap();
        assert_eq!(g.len(), 15);
        let p = g.flatten(&[2, 4]);
        assert_eq!(g.point(p), vec![Complex64::new(1.0, 2.0)]);
        assert_eq!(g.phi0(p), 2.0);
        assert_eq!(g.max_abs_im(), 2.0);
    }

    #[test]
    fn ladder_validation() {
        assert!(check_ladder(&[1.0, 2.0]).is_ok());
        assert!(check_ladder(&[2.0, 2.0]).is_err());
        assert!(check_ladder(&[0.5]).is_err());
        let l = geometric_ladder(4.0, 4096.0, 16);
        assert_eq!(l.len(), 16);
        assert_eq!(l[15], 4096.0);
        assert!((l[5] / l[4] - 2f64.powf(10.0 / 15.0)).abs() < 1e-12);
    }

    #[test]
    fn shift_moves_support() {
        let a = Axis::span(-2.0, 2.0, 41).unwrap();
        let u = SampledFunction::from_fn_1d(a, (-0.5, 0.5), |y| Complex64::new(y, 0.0)).unwrap();
        let v = u.shift(&[3]).unwrap();
        assert_eq!(v.support(), &[(18, 29)]);
        assert_eq!(v.values()[18 + 5], u.values()[15 + 5]);
    }
}
