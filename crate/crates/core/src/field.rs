//! Evaluable scalar fields and the exact expression fields used for the test
//! corpus and the command-line field specs.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::calculus::{normalize_terms, radial_laplacian_sum, RadialTerm};
use crate::error::{Error, Result};
use crate::geometry::norm;
use crate::poly::Polynomial;

/// Dimension, polyharmonic order, domain radius and whether the field is
/// singular (punctured) at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldMeta {
    pub n: usize,
    pub m: usize,
    pub domain_radius: f64,
    pub punctured: bool,
}

impl FieldMeta {
    pub fn smooth(n: usize, m: usize, domain_radius: f64) -> Self {
        FieldMeta {
            n,
            m,
            domain_radius,
            punctured: false,
        }
    }

    pub fn punctured(n: usize, m: usize, domain_radius: f64) -> Self {
        FieldMeta {
            n,
            m,
            domain_radius,
            punctured: true,
        }
    }
}

/// A real-valued function on a ball (optionally punctured at 0) in R^n.
pub trait ScalarField: Send + Sync {
    fn meta(&self) -> FieldMeta;

    fn eval(&self, x: &[f64]) -> f64;
}

impl<T: ScalarField + ?Sized> ScalarField for Arc<T> {
    fn meta(&self) -> FieldMeta {
        (**self).meta()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        (**self).eval(x)
    }
}

impl<T: ScalarField + ?Sized> ScalarField for &T {
    fn meta(&self) -> FieldMeta {
        (**self).meta()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        (**self).eval(x)
    }
}

type FieldFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// Closure-backed field.
pub struct FnField {
    meta: FieldMeta,
    f: Box<FieldFn>,
}

impl FnField {
    pub fn new(meta: FieldMeta, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        FnField {
            meta,
            f: Box::new(f),
        }
    }
}

impl ScalarField for FnField {
    fn meta(&self) -> FieldMeta {
        self.meta
    }

    fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

impl fmt::Debug for FnField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnField").field("meta", &self.meta).finish()
    }
}

/// `factor * inner`.
pub struct ScaledField<F> {
    inner: F,
    factor: f64,
}

impl<F: ScalarField> ScaledField<F> {
    pub fn new(inner: F, factor: f64) -> Self {
        ScaledField { inner, factor }
    }
}

impl<F: ScalarField> ScalarField for ScaledField<F> {
    fn meta(&self) -> FieldMeta {
        self.inner.meta()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.factor * self.inner.eval(x)
    }
}

/// Sum of monomials `c x^alpha` and radial terms `c r^a log(1/r)^b`, with an
/// exact Laplacian.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldExpr {
    n: usize,
    poly: Polynomial,
    radial: Vec<RadialTerm>,
}

impl FieldExpr {
    pub fn zero(n: usize) -> Self {
        FieldExpr {
            n,
            poly: Polynomial::zero(n),
            radial: Vec::new(),
        }
    }

    pub fn from_polynomial(poly: Polynomial) -> Self {
        FieldExpr {
            n: poly.dim(),
            poly,
            radial: Vec::new(),
        }
    }

    pub fn from_radial(n: usize, terms: Vec<RadialTerm>) -> Self {
        FieldExpr {
            n,
            poly: Polynomial::zero(n),
            radial: normalize_terms(terms),
        }
    }

    pub fn monomial(n: usize, coefficient: f64, exponents: Vec<u32>) -> Result<Self> {
        if exponents.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: exponents.len(),
            });
        }
        Ok(FieldExpr::from_polynomial(Polynomial::monomial(
            n,
            coefficient,
            exponents,
        )))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn radial_terms(&self) -> &[RadialTerm] {
        &self.radial
    }

    pub fn polynomial_part(&self) -> &Polynomial {
        &self.poly
    }

    pub fn is_zero(&self) -> bool {
        self.poly.is_zero() && self.radial.is_empty()
    }

    /// No singular radial terms: the expression is a polynomial.
    pub fn is_smooth(&self) -> bool {
        self.radial.iter().all(RadialTerm::is_smooth)
    }

    pub fn add(mut self, other: &FieldExpr) -> Self {
        assert_eq!(self.n, other.n, "adding expressions of different dimension");
        self.poly = self.poly.add(&other.poly);
        self.radial = normalize_terms(self.radial.iter().chain(&other.radial).copied());
        self
    }

    pub fn scale(mut self, factor: f64) -> Self {
        if factor == 0.0 {
            return FieldExpr::zero(self.n);
        }
        self.poly = self.poly.scale(factor);
        for t in &mut self.radial {
            t.coefficient *= factor;
        }
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut s = self.poly.eval(x);
        if !self.radial.is_empty() {
            let r = norm(x);
            for t in &self.radial {
                s += t.eval(r);
            }
        }
        s
    }

    /// Exact Laplacian.
    pub fn laplacian(&self) -> FieldExpr {
        FieldExpr {
            n: self.n,
            poly: self.poly.laplacian(),
            radial: radial_laplacian_sum(&self.radial, self.n),
        }
    }

    pub fn iterated_laplacian(&self, k: usize) -> FieldExpr {
        (0..k).fold(self.clone(), |e, _| e.laplacian())
    }

    pub fn into_field(self, m: usize, domain_radius: f64) -> ExprField {
        ExprField {
            punctured: !self.is_smooth(),
            expr: self,
            m,
            domain_radius,
        }
    }

    /// Parse a field spec such as `x1^3 - 3*x1*x2^2`, `r^-1`, `2*r^2*log`.
    ///
    /// Grammar: terms joined by `+`/`-`; a term is a `*`-product of numbers,
    /// coordinates `xI[^K]` (1-based I, integer K >= 0), `r[^A]` (real A) and
    /// at most one `log` meaning `log(1/r)`. Coordinates and radial factors
    /// cannot be mixed within one term.
    pub fn parse(spec: &str, n: usize) -> Result<FieldExpr> {
        Parser::new(spec, n).parse()
    }
}

impl fmt::Display for FieldExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = Vec::new();
        let mut terms: Vec<(&[u32], f64)> = self.poly.terms().collect();
        terms.reverse();
        for (e, c) in terms {
            let mut factors: Vec<String> = Vec::new();
            for (i, &k) in e.iter().enumerate() {
                match k {
                    0 => {}
                    1 => factors.push(format!("x{}", i + 1)),
                    _ => factors.push(format!("x{}^{}", i + 1, k)),
                }
            }
            parts.push(render_term(c, &factors));
        }
        for t in &self.radial {
            let mut factors = Vec::new();
            if t.power != 0.0 {
                factors.push(if t.power == 1.0 {
                    "r".to_string()
                } else {
                    format!("r^{}", t.power)
                });
            }
            if t.log_exponent == 1 {
                factors.push("log".to_string());
            }
            parts.push(render_term(t.coefficient, &factors));
        }
        if parts.is_empty() {
            return write!(f, "0");
        }
        let mut out = parts[0].clone();
        for p in &parts[1..] {
            if let Some(rest) = p.strip_prefix('-') {
                out.push_str(" - ");
                out.push_str(rest);
            } else {
                out.push_str(" + ");
                out.push_str(p);
            }
        }
        write!(f, "{out}")
    }
}

fn render_term(c: f64, factors: &[String]) -> String {
    if factors.is_empty() {
        return format!("{c}");
    }
    let body = factors.join("*");
    if c == 1.0 {
        body
    } else if c == -1.0 {
        format!("-{body}")
    } else {
        format!("{c}*{body}")
    }
}

/// An expression bound to an order m and a domain radius.
#[derive(Debug, Clone)]
pub struct ExprField {
    expr: FieldExpr,
    m: usize,
    domain_radius: f64,
    punctured: bool,
}

impl ExprField {
    pub fn expr(&self) -> &FieldExpr {
        &self.expr
    }

    /// Exact `D^k` of the field, with the same metadata.
    pub fn iterated_laplacian(&self, k: usize) -> ExprField {
        ExprField {
            expr: self.expr.iterated_laplacian(k),
            ..self.clone()
        }
    }

    pub fn scaled(&self, factor: f64) -> ExprField {
        ExprField {
            expr: self.expr.clone().scale(factor),
            ..self.clone()
        }
    }
}

impl ScalarField for ExprField {
    fn meta(&self) -> FieldMeta {
        FieldMeta {
            n: self.expr.n,
            m: self.m,
            domain_radius: self.domain_radius,
            punctured: self.punctured,
        }
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.expr.eval(x)
    }
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    n: usize,
}

enum Factor {
    Number(f64),
    Coord(usize, u32),
    Radius(f64),
    Log,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str, n: usize) -> Self {
        Parser {
            src,
            bytes: src.as_bytes(),
            pos: 0,
            n,
        }
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            pos: self.pos,
            msg: msg.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn parse(mut self) -> Result<FieldExpr> {
        let mut expr = FieldExpr::zero(self.n);
        if self.peek().is_none() {
            return self.err("empty field spec");
        }
        let mut sign = 1.0;
        match self.peek() {
            Some(b'+') => self.pos += 1,
            Some(b'-') => {
                sign = -1.0;
                self.pos += 1;
            }
            _ => {}
        }
        loop {
            let term = self.term()?;
            expr = expr.add(&term.scale(sign));
            match self.peek() {
                None => break,
                Some(b'+') => {
                    sign = 1.0;
                    self.pos += 1;
                }
                Some(b'-') => {
                    sign = -1.0;
                    self.pos += 1;
                }
                Some(c) => return self.err(format!("unexpected character '{}'", c as char)),
            }
        }
        Ok(expr)
    }

    fn term(&mut self) -> Result<FieldExpr> {
        let mut coef = 1.0;
        let mut exps = vec![0u32; self.n];
        let mut has_coord = false;
        let mut power: Option<f64> = None;
        let mut log = false;
        loop {
            let start = self.pos;
            match self.factor()? {
                Factor::Number(v) => coef *= v,
                Factor::Coord(i, k) => {
                    has_coord = true;
                    exps[i] += k;
                }
                Factor::Radius(a) => power = Some(power.unwrap_or(0.0) + a),
                Factor::Log => {
                    if log {
                        self.pos = start;
                        return self.err("at most one log factor per term");
                    }
                    log = true;
                }
            }
            if self.peek() == Some(b'*') {
                self.pos += 1;
            } else {
                break;
            }
        }
        let radial = power.is_some() || log;
        if has_coord && radial {
            return self.err("a term cannot mix coordinates with r or log");
        }
        if radial {
            let t = RadialTerm {
                coefficient: coef,
                power: power.unwrap_or(0.0),
                log_exponent: u8::from(log),
            };
            Ok(FieldExpr::from_radial(self.n, vec![t]))
        } else {
            FieldExpr::monomial(self.n, coef, exps)
        }
    }

    fn factor(&mut self) -> Result<Factor> {
        match self.peek() {
            Some(b'x') => {
                self.pos += 1;
                let start = self.pos;
                while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
                let idx: usize = match self.src[start..self.pos].parse() {
                    Ok(i) => i,
                    Err(_) => return self.err("expected coordinate index after 'x'"),
                };
                if idx == 0 || idx > self.n {
                    return self.err(format!("coordinate x{idx} out of range for n={}", self.n));
                }
                let k = if self.peek() == Some(b'^') {
                    self.pos += 1;
                    let v = self.number()?;
                    if v < 0.0 || v.fract() != 0.0 || v > 64.0 {
                        return self.err("coordinate exponents must be integers in 0..=64");
                    }
                    v as u32
                } else {
                    1
                };
                Ok(Factor::Coord(idx - 1, k))
            }
            Some(b'r') => {
                self.pos += 1;
                if self.peek() == Some(b'^') {
                    self.pos += 1;
                    Ok(Factor::Radius(self.number()?))
                } else {
                    Ok(Factor::Radius(1.0))
                }
            }
            Some(b'l') => {
                if self.src[self.pos..].starts_with("log") {
                    self.pos += 3;
                    Ok(Factor::Log)
                } else {
                    self.err("unknown identifier")
                }
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => Ok(Factor::Number(self.number()?)),
            Some(c) => self.err(format!("unexpected character '{}'", c as char)),
            None => self.err("unexpected end of spec"),
        }
    }

    /// Signed decimal number with optional exponent.
    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        let b = self.bytes;
        if self.pos < b.len() && (b[self.pos] == b'-' || b[self.pos] == b'+') {
            self.pos += 1;
        }
        while self.pos < b.len() && (b[self.pos].is_ascii_digit() || b[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < b.len() && (b[self.pos] == b'e' || b[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < b.len() && (b[self.pos] == b'-' || b[self.pos] == b'+') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < b.len() && b[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == digits {
                self.pos = save;
            }
        }
        match self.src[start..self.pos].parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => {
                self.pos = start;
                self.err("expected a number")
            }
        }
    }
}
