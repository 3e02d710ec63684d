//! Module membership `{h, Xⱼ} = Σℓ αⱼℓ Xℓ` with polynomial multipliers.

use std::collections::BTreeMap;

use num_rational::BigRational;
use num_traits::{One, Zero};

use super::{poisson_bracket, Exponents, PolySymbol, SymbolicError, VectorFieldSystem};

#[derive(Debug, Clone)]
pub struct Reproduction {
    pub holds: bool,
    /// `alpha[j][l]`, filled for every `j` whose bracket is in the module.
    pub alpha: Vec<Vec<PolySymbol>>,
    /// Irreducible remainder of `{h, Xⱼ}` modulo the span; zero when it holds.
    pub remainders: Vec<PolySymbol>,
}

type Sparse = BTreeMap<Exponents, BigRational>;

fn to_sparse(p: &PolySymbol) -> Sparse {
    p.terms().map(|(e, c)| (e.clone(), c.clone())).collect()
}

fn axpy(y: &mut Sparse, a: &BigRational, x: &Sparse) {
    for (e, c) in x {
        let slot = y.entry(e.clone()).or_insert_with(BigRational::zero);
        *slot += a * c;
        if slot.is_zero() {
            y.remove(e);
        }
    }
}

/// All exponent vectors in `vars` variables with total degree `≤ deg`.
fn monomials(vars: usize, deg: u32) -> Vec<Exponents> {
    fn rec(prefix: &mut Vec<u32>, vars: usize, left: u32, out: &mut Vec<Exponents>) {
        if prefix.len() == vars {
            out.push(prefix.clone());
            return;
        }
        for p in 0..=left {
            prefix.push(p);
            rec(prefix, vars, left - p, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(vars), vars, deg, &mut out);
    out
}

struct Row {
    pivot: Exponents,
    vec: Sparse,
    /// Combination of generator columns that produced this row.
    combo: BTreeMap<usize, BigRational>,
}

/// Solves, for every field `Xⱼ`, for polynomial multipliers `αⱼℓ` of total
/// degree `≤ degree_bound` such that `{h, Xⱼ} = Σℓ αⱼℓ Xℓ`.
pub fn check_bracket_reproduction(
    h: &PolySymbol,
    sys: &VectorFieldSystem,
    degree_bound: u32,
) -> Result<Reproduction, SymbolicError> {
    let n = sys.dim();
    if h.dim() != n {
        return Err(SymbolicError::DimensionMismatch {
            left: n,
            right: h.dim(),
        });
    }
    let mons = monomials(2 * n, degree_bound);
    // Column c = (monomial index, field index).
    let columns: Vec<(usize, usize)> = (0..mons.len())
        .flat_map(|m| (0..sys.len()).map(move |l| (m, l)))
        .collect();

    let mut rows: Vec<Row> = Vec::new();
    for (c, &(m, l)) in columns.iter().enumerate() {
        let gen = &PolySymbol::monomial(n, mons[m].clone(), BigRational::one()) * sys.field(l);
        let mut vec = to_sparse(&gen);
        let mut combo = BTreeMap::from([(c, BigRational::one())]);
        for row in &rows {
            if let Some(a) = vec.get(&row.pivot).cloned() {
                let f = -(a / &row.vec[&row.pivot]);
                axpy(&mut vec, &f, &row.vec);
                for (k, v) in &row.combo {
                    let slot = combo.entry(*k).or_insert_with(BigRational::zero);
                    *slot += &f * v;
                }
            }
        }
        if let Some(pivot) = vec.keys().next_back().cloned() {
            combo.retain(|_, v| !v.is_zero());
            rows.push(Row { pivot, vec, combo });
        }
    }

    let mut holds = true;
    let mut alpha = Vec::with_capacity(sys.len());
    let mut remainders = Vec::with_capacity(sys.len());
    for j in 0..sys.len() {
        let target = poisson_bracket(h, sys.field(j))?;
        let mut rem = to_sparse(&target);
        let mut coeff: BTreeMap<usize, BigRational> = BTreeMap::new();
        for row in &rows {
            if let Some(a) = rem.get(&row.pivot).cloned() {
                let f = a / &row.vec[&row.pivot];
                axpy(&mut rem, &(-f.clone()), &row.vec);
                for (k, v) in &row.combo {
                    let slot = coeff.entry(*k).or_insert_with(BigRational::zero);
                    *slot += &f * v;
                }
            }
        }
        let mut table = vec![PolySymbol::zero(n); sys.len()];
        if rem.is_empty() {
            for (c, v) in coeff {
                let (m, l) = columns[c];
                table[l] = &table[l] + &PolySymbol::monomial(n, mons[m].clone(), v);
            }
        } else {
            holds = false;
        }
        alpha.push(table);
        remainders.push(PolySymbol::from_terms(n, rem));
    }
    Ok(Reproduction {
        holds,
        alpha,
        remainders,
    })
}
