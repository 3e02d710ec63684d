//! Parser for vector-field definitions such as `X1 = d1; X2 = x1^2*d2`.
//!
//! The grammar is documented in `docs/field-grammar.md`. Each `dℓ` stands for
//! `∂/∂xℓ` and becomes the symbol `ξℓ`; every summand of a definition must be
//! first order, i.e. contain exactly one `d` factor once expanded.

use num_rational::BigRational;
use num_traits::{One, Zero};

use super::poly::{parse_rational, PolySymbol};
use super::{SymbolicError, VectorFieldSystem};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(String),
    Eq,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Sep,
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, SymbolicError> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let single = |t: Tok| Token {
            tok: t,
            line: tl,
            col: tc,
        };
        match c {
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                    col += 1;
                }
                continue;
            }
            '\n' => {
                out.push(single(Tok::Sep));
                i += 1;
                line += 1;
                col = 1;
                continue;
            }
            c if c.is_whitespace() => {}
            ';' => out.push(single(Tok::Sep)),
            '=' => out.push(single(Tok::Eq)),
            '+' => out.push(single(Tok::Plus)),
            '-' => out.push(single(Tok::Minus)),
            '*' => out.push(single(Tok::Star)),
            '/' => out.push(single(Tok::Slash)),
            '^' => out.push(single(Tok::Caret)),
            '(' => out.push(single(Tok::LParen)),
            ')' => out.push(single(Tok::RParen)),
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                col += i - start;
                out.push(Token {
                    tok: Tok::Num(s),
                    line: tl,
                    col: tc,
                });
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                col += i - start;
                out.push(Token {
                    tok: Tok::Ident(s),
                    line: tl,
                    col: tc,
                });
                continue;
            }
            other => {
                return Err(SymbolicError::Syntax {
                    line,
                    col,
                    msg: format!("unexpected character '{other}'"),
                })
            }
        }
        i += 1;
        col += 1;
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

/// Variable reference in the raw parse, before the dimension is known.
#[derive(Debug, Clone, Copy)]
enum Var {
    X(usize),
    D(usize),
}

fn classify(ident: &str) -> Option<Var> {
    if let Some(rest) = ident.strip_prefix("xi") {
        if !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit()) {
            let idx: usize = rest.parse().ok()?;
            return (idx > 0).then_some(Var::D(idx));
        }
    }
    let (head, rest) = ident.split_at(1);
    if rest.is_empty() || !rest.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let idx: usize = rest.parse().ok()?;
    match head {
        "x" => Some(Var::X(idx)),
        "d" => Some(Var::D(idx)),
        _ => None,
    }
}

/// Polynomial kept as a list of (x exponents, d exponents, coefficient) until
/// the dimension is fixed.
#[derive(Debug, Clone, Default)]
struct RawPoly {
    terms: Vec<(Vec<u32>, Vec<u32>, BigRational)>,
}

impl RawPoly {
    fn constant(c: BigRational) -> Self {
        Self {
            terms: vec![(vec![], vec![], c)],
        }
    }

    fn var(v: Var) -> Self {
        let mut xs = Vec::new();
        let mut ds = Vec::new();
        match v {
            Var::X(i) => {
                xs.resize(i, 0);
                xs[i - 1] = 1;
            }
            Var::D(i) => {
                ds.resize(i, 0);
                ds[i - 1] = 1;
            }
        }
        Self {
            terms: vec![(xs, ds, BigRational::one())],
        }
    }

    fn add(mut self, other: RawPoly, sign: i64) -> Self {
        for (x, d, c) in other.terms {
            self.terms.push((x, d, c * BigRational::from_integer(sign.into())));
        }
        self
    }

    fn mul(&self, other: &RawPoly) -> Self {
        let add_exp = |a: &[u32], b: &[u32]| -> Vec<u32> {
            let n = a.len().max(b.len());
            (0..n)
                .map(|i| a.get(i).copied().unwrap_or(0) + b.get(i).copied().unwrap_or(0))
                .collect()
        };
        let mut terms = Vec::new();
        for (xa, da, ca) in &self.terms {
            for (xb, db, cb) in &other.terms {
                terms.push((add_exp(xa, xb), add_exp(da, db), ca * cb));
            }
        }
        Self { terms }
    }

    fn max_index(&self) -> usize {
        self.terms
            .iter()
            .map(|(x, d, _)| x.len().max(d.len()))
            .max()
            .unwrap_or(0)
    }

    fn d_degrees(&self) -> impl Iterator<Item = u32> + '_ {
        self.terms
            .iter()
            .filter(|(_, _, c)| !c.is_zero())
            .map(|(_, d, _)| d.iter().sum())
    }

    fn into_poly(self, dim: usize) -> PolySymbol {
        PolySymbol::from_terms(
            dim,
            self.terms.into_iter().map(|(x, d, c)| {
                let mut e = vec![0u32; 2 * dim];
                e[..x.len()].copy_from_slice(&x);
                e[dim..dim + d.len()].copy_from_slice(&d);
                (e, c)
            }),
        )
    }
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, tok: &Token, msg: impl Into<String>) -> Result<T, SymbolicError> {
        Err(SymbolicError::Syntax {
            line: tok.line,
            col: tok.col,
            msg: msg.into(),
        })
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<Token, SymbolicError> {
        let t = self.bump();
        if t.tok != want {
            return self.err(&t, format!("expected {what}"));
        }
        Ok(t)
    }

    fn skip_separators(&mut self) {
        while self.peek().tok == Tok::Sep {
            self.bump();
        }
    }

    fn integer(&mut self) -> Result<u32, SymbolicError> {
        let t = self.bump();
        match &t.tok {
            Tok::Num(s) if s.chars().all(|c| c.is_ascii_digit()) => {
                s.parse().or_else(|_| self.err(&t, "integer too large"))
            }
            _ => self.err(&t, "expected a non-negative integer"),
        }
    }

    fn number(&mut self) -> Result<BigRational, SymbolicError> {
        let t = self.bump();
        match &t.tok {
            Tok::Num(s) => parse_rational(s).or_else(|_| self.err(&t, format!("bad number '{s}'"))),
            _ => self.err(&t, "expected a number"),
        }
    }

    // factor := number | var ['^' int] | '(' expr ')' ['^' int]
    fn factor(&mut self) -> Result<RawPoly, SymbolicError> {
        let t = self.peek().clone();
        let base = match &t.tok {
            Tok::Num(_) => RawPoly::constant(self.number()?),
            Tok::Ident(name) => {
                self.bump();
                let v = classify(name).map_or_else(
                    || self.err(&t, format!("unknown variable '{name}' (use x<i> or d<i>)")),
                    Ok,
                )?;
                let idx = match v {
                    Var::X(i) | Var::D(i) => i,
                };
                if idx == 0 {
                    return self.err(&t, "variable indices start at 1");
                }
                RawPoly::var(v)
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                inner
            }
            _ => return self.err(&t, "expected a number, variable or '('"),
        };
        if self.peek().tok == Tok::Caret {
            self.bump();
            let p = self.integer()?;
            let mut acc = RawPoly::constant(BigRational::one());
            for _ in 0..p {
                acc = acc.mul(&base);
            }
            return Ok(acc);
        }
        Ok(base)
    }

    // term := factor { '*' factor | '/' number }
    fn term(&mut self) -> Result<RawPoly, SymbolicError> {
        let mut acc = self.factor()?;
        loop {
            match self.peek().tok {
                Tok::Star => {
                    self.bump();
                    let f = self.factor()?;
                    acc = acc.mul(&f);
                }
                Tok::Slash => {
                    self.bump();
                    let t = self.peek().clone();
                    let d = self.number()?;
                    if d.is_zero() {
                        return self.err(&t, "division by zero");
                    }
                    acc = acc.mul(&RawPoly::constant(d.recip()));
                }
                _ => return Ok(acc),
            }
        }
    }

    // expr := ['+'|'-'] term { ('+'|'-') term }
    fn expr(&mut self) -> Result<RawPoly, SymbolicError> {
        self.summands().map(|terms| {
            terms
                .into_iter()
                .fold(RawPoly::default(), |acc, (_, sign, t)| acc.add(t, sign))
        })
    }

    fn summands(&mut self) -> Result<Vec<(Token, i64, RawPoly)>, SymbolicError> {
        let mut out = Vec::new();
        let mut sign = 1;
        match self.peek().tok {
            Tok::Plus => {
                self.bump();
            }
            Tok::Minus => {
                self.bump();
                sign = -1;
            }
            _ => {}
        }
        loop {
            let at = self.peek().clone();
            let t = self.term()?;
            out.push((at, sign, t));
            match self.peek().tok {
                Tok::Plus => sign = 1,
                Tok::Minus => sign = -1,
                _ => return Ok(out),
            }
            self.bump();
        }
    }
}

/// Parses a list of field definitions into a [`VectorFieldSystem`].
///
/// An optional leading `dim = n` declaration fixes the dimension; otherwise it
/// is the largest variable index that appears.
pub fn parse_vector_fields(source: &str) -> Result<VectorFieldSystem, SymbolicError> {
    let mut p = Parser {
        toks: lex(source)?,
        pos: 0,
    };
    let mut declared_dim: Option<(usize, Token)> = None;
    let mut defs: Vec<(String, Token, RawPoly)> = Vec::new();

    p.skip_separators();
    while p.peek().tok != Tok::Eof {
        let name_tok = p.bump();
        let name = match &name_tok.tok {
            Tok::Ident(s) => s.clone(),
            _ => return p.err(&name_tok, "expected a field name"),
        };
        p.expect(Tok::Eq, "'='")?;
        if name == "dim" {
            if declared_dim.is_some() || !defs.is_empty() {
                return p.err(&name_tok, "'dim' must be declared once, before any field");
            }
            let n = p.integer()? as usize;
            if n == 0 {
                return p.err(&name_tok, "dimension must be positive");
            }
            declared_dim = Some((n, name_tok));
        } else {
            if classify(&name).is_some() {
                return p.err(&name_tok, format!("'{name}' is a variable, not a field name"));
            }
            if defs.iter().any(|(n, _, _)| *n == name) {
                return p.err(&name_tok, format!("field '{name}' defined twice"));
            }
            let summands = p.summands()?;
            let mut acc = RawPoly::default();
            for (at, sign, t) in summands {
                if t.d_degrees().any(|d| d != 1) {
                    return Err(SymbolicError::NonFirstOrder {
                        line: at.line,
                        col: at.col,
                        field: name.clone(),
                    });
                }
                acc = acc.add(t, sign);
            }
            defs.push((name, name_tok, acc));
        }
        match p.peek().tok {
            Tok::Sep => p.skip_separators(),
            Tok::Eof => {}
            _ => {
                let t = p.peek().clone();
                return p.err(&t, "expected ';' or end of line");
            }
        }
    }

    if defs.is_empty() {
        return Err(SymbolicError::EmptySystem);
    }
    let used = defs.iter().map(|(_, _, r)| r.max_index()).max().unwrap_or(0);
    let dim = match declared_dim {
        Some((n, _)) if used > n => {
            return Err(SymbolicError::DimensionMismatch {
                left: n,
                right: used,
            })
        }
        Some((n, _)) => n,
        None => used.max(1),
    };
    let mut names = Vec::with_capacity(defs.len());
    let mut fields = Vec::with_capacity(defs.len());
    for (name, tok, raw) in defs {
        let poly = raw.into_poly(dim);
        if poly.is_zero() {
            return Err(SymbolicError::NonFirstOrder {
                line: tok.line,
                col: tok.col,
                field: name,
            });
        }
        names.push(name);
        fields.push(poly);
    }
    VectorFieldSystem::with_names(fields, names, source.trim().to_string())
}

/// Parses one polynomial symbol in `xℓ` and `ξℓ` (written `xiℓ` or `dℓ`),
/// e.g. `xi2^2 + x1*xi1`. The dimension defaults to the largest index used.
pub fn parse_symbol(source: &str, dim: Option<usize>) -> Result<PolySymbol, SymbolicError> {
    let mut p = Parser {
        toks: lex(source)?,
        pos: 0,
    };
    p.skip_separators();
    let raw = p.expr()?;
    p.skip_separators();
    if p.peek().tok != Tok::Eof {
        let t = p.peek().clone();
        return p.err(&t, "unexpected input after the expression");
    }
    let used = raw.max_index();
    let dim = match dim {
        Some(n) if used > n => {
            return Err(SymbolicError::DimensionMismatch {
                left: n,
                right: used,
            })
        }
        Some(n) => n,
        None => used.max(1),
    };
    Ok(raw.into_poly(dim))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::poly::rational;

    #[test]
    fn grushin_system() {
        let sys = parse_vector_fields("X1 = d1; X2 = x1*d2").unwrap();
        assert_eq!(sys.dim(), 2);
        assert_eq!(sys.len(), 2);
        assert_eq!(sys.field(0), &PolySymbol::xi(2, 0));
        assert_eq!(sys.field(1), &(&PolySymbol::x(2, 0) * &PolySymbol::xi(2, 1)));
    }

    #[test]
    fn squared_coefficient() {
        let sys = parse_vector_fields("X1 = d1; X2 = x1^2*d2").unwrap();
        let x = PolySymbol::x(2, 0);
        assert_eq!(sys.field(1), &(&(&x * &x) * &PolySymbol::xi(2, 1)));
    }

    #[test]
    fn second_order_rejected() {
        match parse_vector_fields("X1 = d1*d1") {
            Err(SymbolicError::NonFirstOrder { line, col, field }) => {
                assert_eq!((line, col), (1, 6));
                assert_eq!(field, "X1");
            }
            other => panic!("expected non-first-order error, got {other:?}"),
        }
    }

    #[test]
    fn zeroth_order_summand_rejected() {
        assert!(matches!(
            parse_vector_fields("X1 = d1 + x1"),
            Err(SymbolicError::NonFirstOrder { col: 11, .. })
        ));
    }

    #[test]
    fn syntax_error_position() {
        match parse_vector_fields("X1 = d1\nX2 = x1 * * d2") {
            Err(SymbolicError::Syntax { line, col, .. }) => assert_eq!((line, col), (2, 11)),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn declared_dimension_checked() {
        assert!(matches!(
            parse_vector_fields("dim = 1; X1 = d1; X2 = x1*d2"),
            Err(SymbolicError::DimensionMismatch { left: 1, right: 2 })
        ));
        let sys = parse_vector_fields("dim = 3\nX = d1 + x1*d2").unwrap();
        assert_eq!(sys.dim(), 3);
    }

    #[test]
    fn parentheses_comments_and_rationals() {
        let sys = parse_vector_fields("# Heisenberg\nX1 = d1\nX2 = d2 + (x1/2 + 1/2)*d3\n").unwrap();
        assert_eq!(sys.dim(), 3);
        let f = sys.field(1);
        assert_eq!(f.coefficient(&[1, 0, 0, 0, 0, 1]), BigRational::new(1.into(), 2.into()));
        assert_eq!(f.coefficient(&[0, 0, 0, 0, 0, 1]), BigRational::new(1.into(), 2.into()));
        assert_eq!(f.coefficient(&[0, 0, 0, 0, 1, 0]), rational(1));
    }

    #[test]
    fn unknown_variable() {
        assert!(matches!(
            parse_vector_fields("X1 = y1*d1"),
            Err(SymbolicError::Syntax { .. })
        ));
        assert!(matches!(
            parse_vector_fields("X1 = x0*d1"),
            Err(SymbolicError::Syntax { .. })
        ));
    }

    #[test]
    fn cancelling_field_is_rejected() {
        assert!(parse_vector_fields("X1 = d1 - d1").is_err());
    }

    #[test]
    fn symbol_expressions() {
        let h = parse_symbol("xi2^2 + x1*d1 - 1/2", None).unwrap();
        assert_eq!(h.dim(), 2);
        assert_eq!(h.eval(&[rational(2), rational(0), rational(3), rational(5)]), rational(25) + rational(6) - crate::symbolic::poly::parse_rational("1/2").unwrap());
        assert!(parse_symbol("xi1 +", None).is_err());
        assert!(parse_symbol("x3", Some(2)).is_err());
        assert_eq!(parse_symbol("0", Some(1)).unwrap().is_zero(), true);
    }
}
