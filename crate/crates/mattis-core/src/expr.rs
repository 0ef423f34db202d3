//! Expression grammar for the Mattis functional G(m).
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' '-'? integer)?
//! atom  := number | 'm' index | func '(' expr ')' | 'norm' '(' 'm' ')' | '(' expr ')'
//! func  := 'abs' | 'sqrt'
//! ```
//! Variables are 1-based: `m1` is the first magnetization coordinate.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use libm::{fabs, sqrt};

use crate::error::{Error, Result};
use crate::numeric::powi;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// Zero-based coordinate.
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Abs(Box<Expr>),
    Sqrt(Box<Expr>),
    /// Euclidean norm of the whole magnetization vector.
    Norm,
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let mut p = Parser {
            s: src.as_bytes(),
            pos: 0,
        };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.s.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(e)
    }

    /// `x·m` as an expression.
    pub fn linear(coeffs: &[f64]) -> Expr {
        let mut e = Expr::Num(0.0);
        for (i, &c) in coeffs.iter().enumerate() {
            if c != 0.0 {
                e = Expr::Add(
                    Box::new(e),
                    Box::new(Expr::Mul(Box::new(Expr::Num(c)), Box::new(Expr::Var(i)))),
                );
            }
        }
        e
    }

    pub fn plus(self, other: Expr) -> Expr {
        Expr::Add(Box::new(self), Box::new(other))
    }

    pub fn eval(&self, m: &[f64]) -> f64 {
        match self {
            Expr::Num(c) => *c,
            Expr::Var(i) => m.get(*i).copied().unwrap_or(f64::NAN),
            Expr::Neg(a) => -a.eval(m),
            Expr::Add(a, b) => a.eval(m) + b.eval(m),
            Expr::Sub(a, b) => a.eval(m) - b.eval(m),
            Expr::Mul(a, b) => a.eval(m) * b.eval(m),
            Expr::Div(a, b) => a.eval(m) / b.eval(m),
            Expr::Pow(a, k) => {
                let v = a.eval(m);
                if *k >= 0 {
                    powi(v, *k as u32)
                } else {
                    1.0 / powi(v, k.unsigned_abs())
                }
            }
            Expr::Abs(a) => fabs(a.eval(m)),
            Expr::Sqrt(a) => sqrt(a.eval(m)),
            Expr::Norm => sqrt(m.iter().map(|v| v * v).sum()),
        }
    }

    /// Largest referenced coordinate plus one; `norm(m)` fits any dimension.
    pub fn min_dim(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Norm => 0,
            Expr::Var(i) => i + 1,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Abs(a) | Expr::Sqrt(a) => a.min_dim(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.min_dim().max(b.min_dim())
            }
        }
    }

    /// `(c, x)` with `G(m) = c + x·m` when the expression is affine.
    pub fn affine(&self, dim: usize) -> Option<(f64, Vec<f64>)> {
        match self {
            Expr::Num(c) => Some((*c, vec![0.0; dim])),
            Expr::Var(i) => {
                let mut v = vec![0.0; dim];
                *v.get_mut(*i)? = 1.0;
                Some((0.0, v))
            }
            Expr::Neg(a) => a.affine(dim).map(|(c, v)| (-c, v.iter().map(|x| -x).collect())),
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                let s = if matches!(self, Expr::Sub(..)) { -1.0 } else { 1.0 };
                let (ca, va) = a.affine(dim)?;
                let (cb, vb) = b.affine(dim)?;
                Some((ca + s * cb, va.iter().zip(&vb).map(|(x, y)| x + s * y).collect()))
            }
            Expr::Mul(a, b) => {
                let (ca, va) = a.affine(dim)?;
                let (cb, vb) = b.affine(dim)?;
                if va.iter().all(|&x| x == 0.0) {
                    Some((ca * cb, vb.iter().map(|x| ca * x).collect()))
                } else if vb.iter().all(|&x| x == 0.0) {
                    Some((ca * cb, va.iter().map(|x| cb * x).collect()))
                } else {
                    None
                }
            }
            Expr::Div(a, b) => {
                let (ca, va) = a.affine(dim)?;
                let (cb, vb) = b.affine(dim)?;
                if vb.iter().all(|&x| x == 0.0) {
                    Some((ca / cb, va.iter().map(|x| x / cb).collect()))
                } else {
                    None
                }
            }
            Expr::Pow(a, k) => {
                let (c, v) = a.affine(dim)?;
                if v.iter().all(|&x| x == 0.0) {
                    Some((Expr::Pow(Box::new(Expr::Num(c)), *k).eval(&[]), v))
                } else if *k == 1 {
                    Some((c, v))
                } else {
                    None
                }
            }
            Expr::Abs(a) | Expr::Sqrt(a) => {
                let (c, v) = a.affine(dim)?;
                if v.iter().all(|&x| x == 0.0) {
                    let val = if matches!(self, Expr::Abs(_)) { fabs(c) } else { sqrt(c) };
                    Some((val, v))
                } else {
                    None
                }
            }
            Expr::Norm => None,
        }
    }
}

fn fmt_num(f: &mut fmt::Formatter<'_>, c: f64) -> fmt::Result {
    if c < 0.0 {
        write!(f, "({c:?})")
    } else {
        write!(f, "{c:?}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(c) => fmt_num(f, *c),
            Expr::Var(i) => write!(f, "m{}", i + 1),
            Expr::Neg(a) => write!(f, "-({a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "{a}*{b}"),
            Expr::Div(a, b) => write!(f, "{a}/({b})"),
            Expr::Pow(a, k) => write!(f, "({a})^{k}"),
            Expr::Abs(a) => write!(f, "abs({a})"),
            Expr::Sqrt(a) => write!(f, "sqrt({a})"),
            Expr::Norm => write!(f, "norm(m)"),
        }
    }
}

/// A parsed G together with its source text (kept for output headers).
#[derive(Debug, Clone, PartialEq)]
pub struct GFunction {
    source: String,
    expr: Expr,
}

impl GFunction {
    pub fn parse(src: &str) -> Result<Self> {
        Ok(GFunction {
            source: src.trim().to_string(),
            expr: Expr::parse(src)?,
        })
    }

    pub fn from_expr(expr: Expr) -> Self {
        GFunction {
            source: expr.to_string(),
            expr,
        }
    }

    pub fn zero() -> Self {
        GFunction::from_expr(Expr::Num(0.0))
    }

    pub fn linear(x: &[f64]) -> Self {
        GFunction::from_expr(Expr::linear(x))
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn eval(&self, m: &[f64]) -> f64 {
        self.expr.eval(m)
    }

    /// Checks that every referenced coordinate exists.
    pub fn check_dim(&self, dim: usize) -> Result<()> {
        if self.expr.min_dim() > dim {
            return Err(Error::validation(format!(
                "G references m{} but the magnetization has {dim} coordinates",
                self.expr.min_dim()
            )));
        }
        Ok(())
    }

    pub fn affine(&self, dim: usize) -> Option<(f64, Vec<f64>)> {
        self.expr.affine(dim)
    }

    /// `G + y·m`.
    pub fn tilted(&self, y: &[f64]) -> Self {
        GFunction {
            source: format!("{} + tilt{:?}", self.source, y),
            expr: self.expr.clone().plus(Expr::linear(y)),
        }
    }

    /// `G + c`.
    pub fn shifted(&self, c: f64) -> Self {
        GFunction {
            source: format!("{} + {c:?}", self.source),
            expr: self.expr.clone().plus(Expr::Num(c)),
        }
    }

    pub fn plus_expr(&self, e: Expr, label: &str) -> Self {
        GFunction {
            source: format!("{} + {label}", self.source),
            expr: self.expr.clone().plus(e),
        }
    }
}

impl serde::Serialize for GFunction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> serde::Deserialize<'de> for GFunction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let s = <String as serde::Deserialize>::deserialize(d)?;
        GFunction::parse(&s).map_err(serde::de::Error::custom)
    }
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> Error {
        Error::Config(format!("G expression: {msg} at byte {}", self.pos))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(&format!("expected '{}'", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut e = self.term()?;
        loop {
            if self.eat(b'+') {
                e = Expr::Add(Box::new(e), Box::new(self.term()?));
            } else if self.eat(b'-') {
                e = Expr::Sub(Box::new(e), Box::new(self.term()?));
            } else {
                return Ok(e);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut e = self.unary()?;
        loop {
            if self.eat(b'*') {
                e = Expr::Mul(Box::new(e), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                e = Expr::Div(Box::new(e), Box::new(self.unary()?));
            } else {
                return Ok(e);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat(b'+') {
            return self.unary();
        }
        let base = self.atom()?;
        if self.eat(b'^') {
            let neg = self.eat(b'-');
            self.skip_ws();
            let start = self.pos;
            while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            let digits = core::str::from_utf8(&self.s[start..self.pos]).unwrap_or("");
            let k: i32 = digits.parse().map_err(|_| self.error("expected integer exponent"))?;
            return Ok(Expr::Pow(Box::new(base), if neg { -k } else { k }));
        }
        Ok(base)
    }

    fn ident(&mut self) -> &str {
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_alphabetic() {
            self.pos += 1;
        }
        core::str::from_utf8(&self.s[start..self.pos]).unwrap_or("")
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let start = self.pos;
                while self.pos < self.s.len() {
                    let c = self.s[self.pos];
                    let exp_sign = (c == b'-' || c == b'+')
                        && self.pos > start
                        && matches!(self.s[self.pos - 1], b'e' | b'E');
                    if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' || exp_sign {
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
                let text = core::str::from_utf8(&self.s[start..self.pos]).unwrap_or("");
                text.parse::<f64>()
                    .map(Expr::Num)
                    .map_err(|_| self.error("malformed number"))
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let save = self.pos;
                let name = self.ident().to_string();
                match name.as_str() {
                    "m" => {
                        let start = self.pos;
                        while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
                            self.pos += 1;
                        }
                        let idx: usize = core::str::from_utf8(&self.s[start..self.pos])
                            .unwrap_or("")
                            .parse()
                            .map_err(|_| self.error("expected coordinate index after 'm'"))?;
                        if idx == 0 {
                            return Err(self.error("coordinates are 1-based"));
                        }
                        Ok(Expr::Var(idx - 1))
                    }
                    "abs" | "sqrt" => {
                        self.expect(b'(')?;
                        let e = self.expr()?;
                        self.expect(b')')?;
                        Ok(if name == "abs" {
                            Expr::Abs(Box::new(e))
                        } else {
                            Expr::Sqrt(Box::new(e))
                        })
                    }
                    "norm" => {
                        self.expect(b'(')?;
                        self.skip_ws();
                        if self.ident() != "m" {
                            return Err(self.error("norm takes the vector m"));
                        }
                        self.expect(b')')?;
                        Ok(Expr::Norm)
                    }
                    _ => {
                        self.pos = save;
                        Err(self.error(&format!("unknown identifier '{name}'")))
                    }
                }
            }
            _ => Err(self.error("expected a term")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_evaluates() {
        let g = GFunction::parse("m1 + m2").unwrap();
        assert_eq!(g.eval(&[0.25, 0.5]), 0.75);
        let g = GFunction::parse("0.5*(m1 - m2)^2 - abs(m1) + norm(m) / 2 + 1e-1").unwrap();
        let m = [0.3, -0.4];
        let want = 0.5 * 0.49 - 0.3 + 0.25 + 0.1;
        assert!((g.eval(&m) - want).abs() < 1e-15);
        assert_eq!(GFunction::parse("-m1^2").unwrap().eval(&[2.0]), -4.0);
    }

    #[test]
    fn affine_detection() {
        let g = GFunction::parse("2*m1 - m2/4 + 3").unwrap();
        assert_eq!(g.affine(2), Some((3.0, vec![2.0, -0.25])));
        assert_eq!(GFunction::parse("m1*m2").unwrap().affine(2), None);
        assert_eq!(GFunction::parse("abs(m1)").unwrap().affine(2), None);
    }

    #[test]
    fn rejects_garbage() {
        for s in ["m0", "m1 +", "foo(m1)", "m1 m2", "norm(m1)", "(m1"] {
            assert!(GFunction::parse(s).is_err(), "{s}");
        }
        assert!(GFunction::parse("m3").unwrap().check_dim(2).is_err());
    }
}
