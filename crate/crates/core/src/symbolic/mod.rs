//! Exact symbol algebra for systems of real vector fields.
//!
//! A vector field `X = Σ cℓ(x) ∂/∂xℓ` is represented by its principal symbol
//! `X(x, ξ) = Σ cℓ(x) ξℓ`, a [`PolySymbol`] that is linear in `ξ`. Poisson
//! brackets of such symbols stay linear in `ξ`, so the bracket order at a
//! point of the cotangent bundle and the Lie-rank condition reduce to exact
//! rational arithmetic.

mod bracket;
mod parse;
mod poly;
mod reproduce;

pub use bracket::{
    check_hormander, compute_nu, evaluate_word, max_nu_over, poisson_bracket, BracketReport, Nu,
    DEFAULT_MAX_LEN,
};
pub use parse::{parse_symbol, parse_vector_fields};
pub use poly::{parse_rational, rational, Exponents, PolySymbol};
pub use reproduce::{check_bracket_reproduction, Reproduction};

use num_rational::BigRational;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SymbolicError {
    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("field '{field}' has a term that is not first order (line {line}, column {col})")]
    NonFirstOrder {
        line: usize,
        col: usize,
        field: String,
    },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("a vector-field system needs at least one field")]
    EmptySystem,
    #[error("field {index} is not linear in ξ")]
    NotVectorField { index: usize },
    #[error("invalid number '{0}'")]
    BadNumber(String),
    #[error("max_len must be at least 1")]
    ZeroBudget,
}

/// An ordered list of first-order fields `X₁..X_N` on `ℝⁿ`, which also stands
/// for the sum of squares `P = Σ Xⱼ²`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorFieldSystem {
    dim: usize,
    fields: Vec<PolySymbol>,
    names: Vec<String>,
    label: String,
}

impl VectorFieldSystem {
    pub fn new(fields: Vec<PolySymbol>, label: impl Into<String>) -> Result<Self, SymbolicError> {
        let names = (1..=fields.len()).map(|i| format!("X{i}")).collect();
        Self::with_names(fields, names, label.into())
    }

    pub fn with_names(
        fields: Vec<PolySymbol>,
        names: Vec<String>,
        label: String,
    ) -> Result<Self, SymbolicError> {
        let first = fields.first().ok_or(SymbolicError::EmptySystem)?;
        let dim = first.dim();
        for (i, f) in fields.iter().enumerate() {
            first.check_same_dim(f)?;
            if !f.is_linear_in_xi() {
                return Err(SymbolicError::NotVectorField { index: i });
            }
        }
        assert_eq!(names.len(), fields.len());
        Ok(Self {
            dim,
            fields,
            names,
            label,
        })
    }

    /// `{ξ₁, x₁^{k−1} ξ₂}` on `ℝ²`.
    pub fn grushin(k: u32) -> Self {
        assert!(k >= 1);
        let x1 = PolySymbol::x(2, 0);
        let mut coeff = PolySymbol::constant(2, rational(1));
        for _ in 1..k {
            coeff = &coeff * &x1;
        }
        let x2 = &coeff * &PolySymbol::xi(2, 1);
        Self::new(vec![PolySymbol::xi(2, 0), x2], format!("grushin k={k}"))
            .expect("grushin fields are first order")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn field(&self, j: usize) -> &PolySymbol {
        &self.fields[j]
    }

    pub fn fields(&self) -> &[PolySymbol] {
        &self.fields
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Coefficient functions `cⱼℓ(x)` of field `j`, one polynomial per `ℓ`,
    /// each with no `ξ` dependence.
    pub fn coefficients(&self, j: usize) -> Vec<PolySymbol> {
        (0..self.dim).map(|l| self.fields[j].d_dxi(l)).collect()
    }

    /// Applies `x ↦ subs(x)` to every coefficient.
    pub fn substitute_x(&self, subs: &[PolySymbol]) -> Result<Self, SymbolicError> {
        let fields = self.fields.iter().map(|f| f.substitute_x(subs)).collect();
        Self::with_names(fields, self.names.clone(), self.label.clone())
    }

    /// True when every field symbol vanishes at `(x, ξ)`.
    pub fn is_characteristic(&self, point: &[BigRational]) -> bool {
        self.fields
            .iter()
            .all(|f| num_traits::Zero::is_zero(&f.eval(point)))
    }
}
