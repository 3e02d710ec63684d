//! Exact polynomials in phase-space variables `(x, ξ)`.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use super::SymbolicError;

/// Exponent vector of length `2n`: the `x` exponents followed by the `ξ` exponents.
pub type Exponents = Vec<u32>;

/// A polynomial in `(x₁..xₙ, ξ₁..ξₙ)` with exact rational coefficients.
///
/// Terms are kept in a `BTreeMap` so iteration order (and therefore printing,
/// hashing of reports, and bracket enumeration) is deterministic. Zero
/// coefficients are never stored.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PolySymbol {
    dim: usize,
    terms: BTreeMap<Exponents, BigRational>,
}

pub fn rational(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// Parses `"3"`, `"-1/2"` or `"0.25"` into an exact rational.
pub fn parse_rational(s: &str) -> Result<BigRational, SymbolicError> {
    let s = s.trim();
    let bad = || SymbolicError::BadNumber(s.to_string());
    if let Some((num, den)) = s.split_once('/') {
        let n: BigInt = num.trim().parse().map_err(|_| bad())?;
        let d: BigInt = den.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let neg = int.starts_with('-');
        let digits = format!("{}{}", int.trim_start_matches(['-', '+']), frac);
        if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let n: BigInt = digits.parse().map_err(|_| bad())?;
        let d = num_traits::pow(BigInt::from(10), frac.len());
        let r = BigRational::new(n, d);
        return Ok(if neg { -r } else { r });
    }
    let n: BigInt = s.parse().map_err(|_| bad())?;
    Ok(BigRational::from_integer(n))
}

impl PolySymbol {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: BigRational) -> Self {
        let mut p = Self::zero(dim);
        p.add_term(vec![0; 2 * dim], c);
        p
    }

    /// The coordinate `x_l` (0-based index).
    pub fn x(dim: usize, l: usize) -> Self {
        assert!(l < dim, "x index out of range");
        let mut e = vec![0; 2 * dim];
        e[l] = 1;
        Self::monomial(dim, e, BigRational::one())
    }

    /// The dual coordinate `ξ_l` (0-based index).
    pub fn xi(dim: usize, l: usize) -> Self {
        assert!(l < dim, "ξ index out of range");
        let mut e = vec![0; 2 * dim];
        e[dim + l] = 1;
        Self::monomial(dim, e, BigRational::one())
    }

    pub fn monomial(dim: usize, exps: Exponents, c: BigRational) -> Self {
        assert_eq!(exps.len(), 2 * dim, "exponent vector must have length 2n");
        let mut p = Self::zero(dim);
        p.add_term(exps, c);
        p
    }

    pub fn from_terms<I>(dim: usize, terms: I) -> Self
    where
        I: IntoIterator<Item = (Exponents, BigRational)>,
    {
        let mut p = Self::zero(dim);
        for (e, c) in terms {
            assert_eq!(e.len(), 2 * dim, "exponent vector must have length 2n");
            p.add_term(e, c);
        }
        p
    }

    fn add_term(&mut self, exps: Exponents, c: BigRational) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(exps) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponents, &BigRational)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn check_same_dim(&self, other: &Self) -> Result<(), SymbolicError> {
        if self.dim != other.dim {
            return Err(SymbolicError::DimensionMismatch {
                left: self.dim,
                right: other.dim,
            });
        }
        Ok(())
    }

    /// Total degree in `ξ` of every monomial, as `(min, max)`; `None` for zero.
    pub fn xi_degree_range(&self) -> Option<(u32, u32)> {
        let mut it = self
            .terms
            .keys()
            .map(|e| e[self.dim..].iter().sum::<u32>());
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), d| (lo.min(d), hi.max(d))))
    }

    /// Total degree in `x` of every monomial, as `(min, max)`; `None` for zero.
    pub fn x_degree_range(&self) -> Option<(u32, u32)> {
        let mut it = self
            .terms
            .keys()
            .map(|e| e[..self.dim].iter().sum::<u32>());
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), d| (lo.min(d), hi.max(d))))
    }

    pub fn total_degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|e| e.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    /// True when every monomial has `ξ`-degree exactly one.
    pub fn is_linear_in_xi(&self) -> bool {
        matches!(self.xi_degree_range(), Some((1, 1)))
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        if c.is_zero() {
            return Self::zero(self.dim);
        }
        Self {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .map(|(e, v)| (e.clone(), v * c))
                .collect(),
        }
    }

    fn derivative(&self, slot: usize) -> Self {
        let mut out = Self::zero(self.dim);
        for (e, c) in &self.terms {
            let p = e[slot];
            if p == 0 {
                continue;
            }
            let mut e2 = e.clone();
            e2[slot] = p - 1;
            out.add_term(e2, c * rational(i64::from(p)));
        }
        out
    }

    /// `∂/∂x_l` (0-based).
    pub fn d_dx(&self, l: usize) -> Self {
        self.derivative(l)
    }

    /// `∂/∂ξ_l` (0-based).
    pub fn d_dxi(&self, l: usize) -> Self {
        self.derivative(self.dim + l)
    }

    /// Exact evaluation at a rational point `(x, ξ)` of length `2n`.
    pub fn eval(&self, point: &[BigRational]) -> BigRational {
        assert_eq!(point.len(), 2 * self.dim, "point must have length 2n");
        let mut acc = BigRational::zero();
        for (e, c) in &self.terms {
            let mut t = c.clone();
            for (v, &p) in point.iter().zip(e) {
                if p > 0 {
                    t *= num_traits::pow(v.clone(), p as usize);
                }
            }
            acc += t;
        }
        acc
    }

    /// Substitutes values for the `x` variables only, leaving a polynomial in `ξ`.
    pub fn eval_x(&self, x: &[BigRational]) -> Self {
        assert_eq!(x.len(), self.dim, "x must have length n");
        let mut out = Self::zero(self.dim);
        for (e, c) in &self.terms {
            let mut t = c.clone();
            for (v, &p) in x.iter().zip(&e[..self.dim]) {
                if p > 0 {
                    t *= num_traits::pow(v.clone(), p as usize);
                }
            }
            let mut e2 = e.clone();
            e2[..self.dim].iter_mut().for_each(|p| *p = 0);
            out.add_term(e2, t);
        }
        out
    }

    /// Coefficient of the monomial with the given exponents.
    pub fn coefficient(&self, exps: &[u32]) -> BigRational {
        self.terms.get(exps).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn eval_f64(&self, point: &[f64]) -> f64 {
        assert_eq!(point.len(), 2 * self.dim, "point must have length 2n");
        self.terms
            .iter()
            .map(|(e, c)| {
                let mut t = c.to_f64().unwrap_or(f64::NAN);
                for (v, &p) in point.iter().zip(e) {
                    t *= v.powi(p as i32);
                }
                t
            })
            .sum()
    }

    /// Holomorphic extension: evaluation at a complex point `(x, ξ)`.
    pub fn eval_complex(&self, point: &[Complex64]) -> Complex64 {
        assert_eq!(point.len(), 2 * self.dim, "point must have length 2n");
        self.terms
            .iter()
            .map(|(e, c)| {
                let mut t = Complex64::new(c.to_f64().unwrap_or(f64::NAN), 0.0);
                for (v, &p) in point.iter().zip(e) {
                    if p > 0 {
                        t *= v.powu(p);
                    }
                }
                t
            })
            .sum()
    }

    /// Substitutes a polynomial for each `x_l` (the `ξ` variables are kept).
    pub fn substitute_x(&self, subs: &[PolySymbol]) -> Self {
        assert_eq!(subs.len(), self.dim, "need one substitution per x variable");
        let mut out = Self::zero(self.dim);
        for (e, c) in &self.terms {
            let mut xi_part = vec![0; 2 * self.dim];
            xi_part[self.dim..].copy_from_slice(&e[self.dim..]);
            let mut t = Self::monomial(self.dim, xi_part, c.clone());
            for (l, &p) in e[..self.dim].iter().enumerate() {
                for _ in 0..p {
                    t = &t * &subs[l];
                }
            }
            out = &out + &t;
        }
        out
    }

    /// Divides by the leading coefficient so that scalar multiples compare equal.
    pub fn normalized(&self) -> Self {
        match self.terms.values().next() {
            Some(lead) => self.scale(&lead.recip()),
            None => self.clone(),
        }
    }

    fn var_name(&self, slot: usize) -> String {
        if slot < self.dim {
            format!("x{}", slot + 1)
        } else {
            format!("xi{}", slot - self.dim + 1)
        }
    }
}

impl fmt::Display for PolySymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (e, c)) in self.terms.iter().rev().enumerate() {
            let neg = c.is_negative();
            let mag = c.abs();
            if i == 0 {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if neg { "-" } else { "+" })?;
            }
            let vars: Vec<String> = e
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0)
                .map(|(s, &p)| {
                    if p == 1 {
                        self.var_name(s)
                    } else {
                        format!("{}^{}", self.var_name(s), p)
                    }
                })
                .collect();
            if vars.is_empty() {
                write!(f, "{mag}")?;
            } else if mag.is_one() {
                write!(f, "{}", vars.join("*"))?;
            } else {
                write!(f, "{}*{}", mag, vars.join("*"))?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for PolySymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PolySymbol[n={}]({})", self.dim, self)
    }
}

impl Add for &PolySymbol {
    type Output = PolySymbol;
    fn add(self, rhs: &PolySymbol) -> PolySymbol {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in polynomial sum");
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(e.clone(), c.clone());
        }
        out
    }
}

impl Sub for &PolySymbol {
    type Output = PolySymbol;
    fn sub(self, rhs: &PolySymbol) -> PolySymbol {
        self + &(-rhs)
    }
}

impl Neg for &PolySymbol {
    type Output = PolySymbol;
    fn neg(self) -> PolySymbol {
        PolySymbol {
            dim: self.dim,
            terms: self.terms.iter().map(|(e, c)| (e.clone(), -c)).collect(),
        }
    }
}

impl Mul for &PolySymbol {
    type Output = PolySymbol;
    fn mul(self, rhs: &PolySymbol) -> PolySymbol {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in polynomial product");
        let mut out = PolySymbol::zero(self.dim);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &rhs.terms {
                let e: Exponents = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca * cb);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cancellation_removes_terms() {
        let a = PolySymbol::x(2, 0);
        let z = &a - &a;
        assert!(z.is_zero());
        assert_eq!(z.num_terms(), 0);
    }

    #[test]
    fn parse_rationals() {
        assert_eq!(parse_rational("-1/2").unwrap(), BigRational::new((-1).into(), 2.into()));
        assert_eq!(parse_rational("0.25").unwrap(), BigRational::new(1.into(), 4.into()));
        assert_eq!(parse_rational("-0.5").unwrap(), BigRational::new((-1).into(), 2.into()));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
    }

    #[test]
    fn display_is_readable() {
        let p = &(&PolySymbol::x(2, 0) * &PolySymbol::xi(2, 1)).scale(&rational(2))
            - &PolySymbol::xi(2, 0);
        let s = p.to_string();
        assert!(s.contains("2*x1*xi2"), "{s}");
        assert!(s.contains("xi1"), "{s}");
    }

    #[test]
    fn exact_evaluation() {
        let half = BigRational::new(1.into(), 2.into());
        let p = &PolySymbol::x(1, 0) * &PolySymbol::x(1, 0);
        assert_eq!(p.eval(&[half.clone(), rational(3)]), BigRational::new(1.into(), 4.into()));
    }

    #[test]
    fn substitution_composes() {
        // x1^2 xi1 with x1 -> x1 - x1^3/6
        let x = PolySymbol::x(1, 0);
        let sub = &x - &(&(&x * &x) * &x).scale(&BigRational::new(1.into(), 6.into()));
        let p = &(&x * &x) * &PolySymbol::xi(1, 0);
        let q = p.substitute_x(&[sub]);
        assert_eq!(q.coefficient(&[2, 1]), rational(1));
        assert_eq!(q.coefficient(&[4, 1]), BigRational::new((-1).into(), 3.into()));
    }
}
