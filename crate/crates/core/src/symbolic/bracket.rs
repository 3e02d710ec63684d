use std::collections::HashSet;

use num_rational::BigRational;
use num_traits::Zero;
use serde::Serialize;

use super::{PolySymbol, SymbolicError, VectorFieldSystem};

/// Default bracket-length budget; desk-scale systems have `ν ≤ 6`.
pub const DEFAULT_MAX_LEN: usize = 8;

/// `{a, b} = Σℓ (∂a/∂ξℓ ∂b/∂xℓ − ∂b/∂ξℓ ∂a/∂xℓ)`.
pub fn poisson_bracket(a: &PolySymbol, b: &PolySymbol) -> Result<PolySymbol, SymbolicError> {
    a.check_same_dim(b)?;
    let mut out = PolySymbol::zero(a.dim());
    for l in 0..a.dim() {
        out = &out + &(&a.d_dxi(l) * &b.d_dx(l));
        out = &out - &(&b.d_dxi(l) * &a.d_dx(l));
    }
    Ok(out)
}

/// Left-nested bracket `{…{{X_{w₀}, X_{w₁}}, X_{w₂}}…, X_{w_m}}` (0-based indices).
pub fn evaluate_word(sys: &VectorFieldSystem, word: &[usize]) -> PolySymbol {
    let mut it = word.iter();
    let first = it.next().expect("bracket word must be non-empty");
    it.fold(sys.field(*first).clone(), |acc, &j| {
        poisson_bracket(&acc, sys.field(j)).expect("fields share a dimension")
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Nu {
    Finite(usize),
    /// No bracket of length `≤ budget` is nonzero at the point.
    Infinite { budget: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BracketReport {
    pub point: Vec<BigRational>,
    pub nu: Nu,
    /// Left-nested word realizing `ν`, as 0-based field indices.
    pub witness: Option<Vec<usize>>,
    pub witness_value: Option<BigRational>,
    pub hoermander_r: Option<usize>,
    pub characteristic: bool,
    pub field_names: Vec<String>,
}

impl BracketReport {
    /// Bracket notation for the witness, e.g. `[[X1,X2],X1]`.
    pub fn witness_notation(&self) -> Option<String> {
        let word = self.witness.as_ref()?;
        let mut s = self.field_names[word[0]].clone();
        for &j in &word[1..] {
            s = format!("[{s},{}]", self.field_names[j]);
        }
        Some(s)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "point": self.point.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
            "nu": match &self.nu {
                Nu::Finite(n) => serde_json::json!(n),
                Nu::Infinite { budget } => serde_json::json!(format!("infinite (budget {budget})")),
            },
            "witness": self.witness_notation(),
            "witness_value": self.witness_value.as_ref().map(|v| v.to_string()),
            "hoermander_r": match self.hoermander_r {
                Some(r) => serde_json::json!(r),
                None => serde_json::json!("fails"),
            },
            "characteristic": self.characteristic,
        })
    }
}

/// Breadth-first enumeration of left-nested bracket words.
///
/// Words whose bracket is identically zero are dropped, and a bracket equal
/// (up to a scalar) to one already produced is not extended again: its
/// extensions were produced earlier with the same or smaller length.
struct WordEnumerator<'a> {
    sys: &'a VectorFieldSystem,
    frontier: Vec<(Vec<usize>, PolySymbol)>,
    seen: HashSet<PolySymbol>,
    len: usize,
}

impl<'a> WordEnumerator<'a> {
    fn new(sys: &'a VectorFieldSystem) -> Self {
        Self {
            sys,
            frontier: Vec::new(),
            seen: HashSet::new(),
            len: 0,
        }
    }

    /// Produces all words of the next length.
    fn next_level(&mut self) -> &[(Vec<usize>, PolySymbol)] {
        let mut next = Vec::new();
        if self.len == 0 {
            for (j, f) in self.sys.fields().iter().enumerate() {
                if self.seen.insert(f.normalized()) {
                    next.push((vec![j], f.clone()));
                }
            }
        } else {
            for (word, poly) in &self.frontier {
                for (j, f) in self.sys.fields().iter().enumerate() {
                    let b = poisson_bracket(poly, f).expect("same dimension");
                    if b.is_zero() || !self.seen.insert(b.normalized()) {
                        continue;
                    }
                    let mut w = word.clone();
                    w.push(j);
                    next.push((w, b));
                }
            }
        }
        self.len += 1;
        self.frontier = next;
        &self.frontier
    }
}

fn check_point(sys: &VectorFieldSystem, point: &[BigRational]) -> Result<(), SymbolicError> {
    if point.len() != 2 * sys.dim() {
        return Err(SymbolicError::DimensionMismatch {
            left: 2 * sys.dim(),
            right: point.len(),
        });
    }
    Ok(())
}

/// Bracket order `ν` at `(x₀, ξ₀)`: the shortest bracket length that is
/// nonzero there. At non-characteristic points this is 1.
pub fn compute_nu(
    sys: &VectorFieldSystem,
    point: &[BigRational],
    max_len: usize,
) -> Result<BracketReport, SymbolicError> {
    if max_len == 0 {
        return Err(SymbolicError::ZeroBudget);
    }
    check_point(sys, point)?;
    let characteristic = sys.is_characteristic(point);
    let x0 = &point[..sys.dim()];
    let hoermander_r = check_hormander(sys, x0, max_len)?.1;

    let mut words = WordEnumerator::new(sys);
    let mut nu = Nu::Infinite { budget: max_len };
    let mut witness = None;
    let mut witness_value = None;
    for len in 1..=max_len {
        let level = words.next_level();
        if let Some((w, v)) = level
            .iter()
            .map(|(w, p)| (w, p.eval(point)))
            .find(|(_, v)| !v.is_zero())
        {
            nu = Nu::Finite(len);
            witness = Some(w.clone());
            witness_value = Some(v);
            break;
        }
        if level.is_empty() {
            break;
        }
    }
    Ok(BracketReport {
        point: point.to_vec(),
        nu,
        witness,
        witness_value,
        hoermander_r,
        characteristic,
        field_names: sys.names().to_vec(),
    })
}

/// Incremental row-echelon basis over ℚ.
#[derive(Default)]
struct Echelon {
    rows: Vec<(usize, Vec<BigRational>)>,
}

impl Echelon {
    /// Adds `v` and reports whether it increased the rank.
    fn insert(&mut self, mut v: Vec<BigRational>) -> bool {
        for (pivot, row) in &self.rows {
            if v[*pivot].is_zero() {
                continue;
            }
            let f = &v[*pivot] / &row[*pivot];
            for (a, b) in v.iter_mut().zip(row) {
                *a -= &f * b;
            }
        }
        match v.iter().position(|c| !c.is_zero()) {
            Some(p) => {
                self.rows.push((p, v));
                true
            }
            None => false,
        }
    }

    fn rank(&self) -> usize {
        self.rows.len()
    }
}

/// Lie-rank condition at `x0`: whether brackets of length `≤ max_len` span
/// `ℝⁿ`, and the smallest length `r` at which they do.
pub fn check_hormander(
    sys: &VectorFieldSystem,
    x0: &[BigRational],
    max_len: usize,
) -> Result<(bool, Option<usize>), SymbolicError> {
    if max_len == 0 {
        return Err(SymbolicError::ZeroBudget);
    }
    let n = sys.dim();
    if x0.len() != n {
        return Err(SymbolicError::DimensionMismatch {
            left: n,
            right: x0.len(),
        });
    }
    let mut basis = Echelon::default();
    let mut words = WordEnumerator::new(sys);
    for len in 1..=max_len {
        let level = words.next_level();
        if level.is_empty() {
            break;
        }
        for (_, poly) in level {
            let at = poly.eval_x(x0);
            let v: Vec<BigRational> = (0..n)
                .map(|l| {
                    let mut e = vec![0; 2 * n];
                    e[n + l] = 1;
                    at.coefficient(&e)
                })
                .collect();
            basis.insert(v);
            if basis.rank() == n {
                return Ok((true, Some(len)));
            }
        }
    }
    Ok((false, None))
}

/// Largest bracket order over a sample of characteristic points; `None` if
/// some point has no nonvanishing bracket within the budget.
pub fn max_nu_over(
    sys: &VectorFieldSystem,
    points: &[Vec<BigRational>],
    max_len: usize,
) -> Result<Option<usize>, SymbolicError> {
    let mut worst = 1;
    for p in points {
        match compute_nu(sys, p, max_len)?.nu {
            Nu::Finite(n) => worst = worst.max(n),
            Nu::Infinite { .. } => return Ok(None),
        }
    }
    Ok(Some(worst))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::{parse_vector_fields, rational};

    fn pt(v: &[i64]) -> Vec<BigRational> {
        v.iter().map(|&a| rational(a)).collect()
    }

    #[test]
    fn bracket_examples() {
        let xi1 = PolySymbol::xi(2, 0);
        let x1 = PolySymbol::x(2, 0);
        let xi2 = PolySymbol::xi(2, 1);
        // {ξ₁, x₁ξ₂} = ξ₂
        assert_eq!(poisson_bracket(&xi1, &(&x1 * &xi2)).unwrap(), xi2);
        assert!(poisson_bracket(&xi1, &xi1).unwrap().is_zero());
        // {ξ₁, x₁²ξ₂} = 2x₁ξ₂
        let b = poisson_bracket(&xi1, &(&(&x1 * &x1) * &xi2)).unwrap();
        assert_eq!(b, (&x1 * &xi2).scale(&rational(2)));
    }

    #[test]
    fn bracket_dimension_mismatch() {
        assert!(matches!(
            poisson_bracket(&PolySymbol::xi(1, 0), &PolySymbol::xi(2, 0)),
            Err(SymbolicError::DimensionMismatch { left: 1, right: 2 })
        ));
    }

    #[test]
    fn grushin_three() {
        let sys = VectorFieldSystem::grushin(3);
        let r = compute_nu(&sys, &pt(&[0, 0, 0, 1]), DEFAULT_MAX_LEN).unwrap();
        assert_eq!(r.nu, Nu::Finite(3));
        assert!(r.characteristic);
        let w = r.witness.clone().unwrap();
        assert_eq!(w.len(), 3);
        assert!(!evaluate_word(&sys, &w).eval(&r.point).is_zero());
        assert_eq!(r.witness_notation().unwrap(), "[[X1,X2],X1]");
    }

    #[test]
    fn heisenberg() {
        let sys = parse_vector_fields("X1 = d1; X2 = d2 + x1*d3").unwrap();
        let r = compute_nu(&sys, &pt(&[0, 0, 0, 0, 0, 1]), 8).unwrap();
        assert_eq!(r.nu, Nu::Finite(2));
        assert_eq!(r.hoermander_r, Some(2));
    }

    #[test]
    fn non_characteristic_point() {
        let sys = parse_vector_fields("X1 = d1; X2 = x1*d2").unwrap();
        let r = compute_nu(&sys, &pt(&[1, 0, 0, 1]), 8).unwrap();
        assert!(!r.characteristic);
        assert_eq!(r.nu, Nu::Finite(1));
        assert_eq!(r.witness, Some(vec![1]));
    }

    #[test]
    fn infinite_within_budget() {
        // ξ₁ alone never produces ξ₂.
        let sys = parse_vector_fields("dim = 2; X1 = d1").unwrap();
        let r = compute_nu(&sys, &pt(&[0, 0, 0, 1]), 5).unwrap();
        assert_eq!(r.nu, Nu::Infinite { budget: 5 });
        assert_eq!(r.witness, None);
        assert_eq!(r.hoermander_r, None);
        let j = r.to_json();
        assert_eq!(j["hoermander_r"], "fails");
    }

    #[test]
    fn budget_and_point_validation() {
        let sys = VectorFieldSystem::grushin(2);
        assert!(matches!(compute_nu(&sys, &pt(&[0, 0, 0, 1]), 0), Err(SymbolicError::ZeroBudget)));
        assert!(matches!(
            compute_nu(&sys, &pt(&[0, 1]), 3),
            Err(SymbolicError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn hormander_examples() {
        let g = VectorFieldSystem::grushin(2);
        assert_eq!(check_hormander(&g, &pt(&[0, 0]), 8).unwrap(), (true, Some(2)));
        let single = parse_vector_fields("dim = 2; X1 = d1").unwrap();
        assert_eq!(check_hormander(&single, &pt(&[0, 0]), 8).unwrap(), (false, None));
        let ell = parse_vector_fields("X1 = d1; X2 = d2").unwrap();
        assert_eq!(check_hormander(&ell, &pt(&[0, 0]), 8).unwrap(), (true, Some(1)));
    }

    #[test]
    fn sup_of_nu_over_samples() {
        let g = VectorFieldSystem::grushin(4);
        let pts = vec![pt(&[0, 0, 0, 1]), pt(&[0, 3, 0, -2]), pt(&[1, 0, 0, 1])];
        assert_eq!(max_nu_over(&g, &pts, 8).unwrap(), Some(4));
    }
}
