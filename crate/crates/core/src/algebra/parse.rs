//! Expression grammar used by scenario files.
//!
//! ```text
//! expr  := term (("+" | "-") term)*
//! term  := unary (("*" | "/") unary)*
//! unary := "-" unary | power
//! power := atom ("^" integer)?
//! atom  := number | name | ("cos" | "sin") "(" expr ")" | "(" expr ")"
//! ```

use std::collections::{BTreeSet, HashMap};
use std::f64::consts::PI;
use std::fmt;

use thiserror::Error;

use super::expr::{expand_affine_trig, MtpExpr, TrigFn};
use super::{AlgebraError, SymbolTable};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}, column {col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

impl ParseError {
    pub fn new(line: usize, col: usize, msg: impl Into<String>) -> Self {
        ParseError { line, col, msg: msg.into() }
    }

    /// Moves a single-line error to `line`, shifting columns by `col_offset`.
    pub fn relocate(mut self, line: usize, col_offset: usize) -> Self {
        self.line = line;
        self.col += col_offset;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Cos,
    Sin,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Cos => "cos",
            Func::Sin => "sin",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Bin(op, Box::new(a), Box::new(b))
    }

    /// Every name that is not `pi`.
    pub fn variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) if v == "pi" => {}
            Expr::Var(v) => {
                out.insert(v.clone());
            }
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.collect_vars(out),
            Expr::Bin(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Num(x) if x.is_sign_negative() => 3,
            Expr::Pow(..) => 4,
            _ => 5,
        }
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &Expr, paren: bool) -> fmt::Result {
    if paren {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(x) => write!(f, "{x}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(a) => {
                write!(f, "-")?;
                write_child(f, a, a.precedence() < 3)
            }
            Expr::Bin(op, a, b) => {
                let p = self.precedence();
                write_child(f, a, a.precedence() < p)?;
                let sym = match op {
                    BinOp::Add => " + ",
                    BinOp::Sub => " - ",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                };
                write!(f, "{sym}")?;
                write_child(f, b, b.precedence() <= p)
            }
            Expr::Pow(a, n) => {
                write_child(f, a, a.precedence() < 5)?;
                write!(f, "^{n}")
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

struct Lexer<'a> {
    src: &'a str,
    toks: Vec<(Tok, usize)>,
}

impl<'a> Lexer<'a> {
    fn run(src: &'a str) -> Result<Vec<(Tok, usize)>, ParseError> {
        let mut lx = Lexer { src, toks: Vec::new() };
        let bytes = src.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i] as char;
            let col = i + 1;
            if c.is_ascii_whitespace() {
                i += 1;
            } else if c.is_ascii_digit() || c == '.' {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &lx.src[start..i];
                let v: f64 = text.parse().map_err(|_| ParseError::new(1, col, format!("bad number `{text}`")))?;
                lx.toks.push((Tok::Num(v), col));
            } else if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                lx.toks.push((Tok::Ident(lx.src[start..i].to_string()), col));
            } else if "+-*/^()".contains(c) {
                lx.toks.push((Tok::Op(c), col));
                i += 1;
            } else {
                let ch = src[i..].chars().next().unwrap_or(c);
                return Err(ParseError::new(1, col, format!("unexpected character `{ch}`")));
            }
        }
        Ok(lx.toks)
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end_col: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |(_, c)| *c)
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError::new(1, self.col(), msg)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Op(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                BinOp::Add
            } else if self.eat('-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            lhs = Expr::bin(op, lhs, self.term()?);
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat('*') {
                BinOp::Mul
            } else if self.eat('/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            lhs = Expr::bin(op, lhs, self.unary()?);
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        let base = self.atom()?;
        if self.eat('^') {
            return match self.peek() {
                Some(&Tok::Num(v)) if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 => {
                    self.pos += 1;
                    Ok(Expr::Pow(Box::new(base), v as u32))
                }
                _ => Err(self.err("exponent must be a non-negative integer literal")),
            };
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let Some(tok) = self.peek().cloned() else {
            return Err(self.err("unexpected end of expression"));
        };
        match tok {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Tok::Ident(name) => {
                let col = self.col();
                self.pos += 1;
                if self.eat('(') {
                    let func = match name.as_str() {
                        "cos" => Func::Cos,
                        "sin" => Func::Sin,
                        _ => return Err(ParseError::new(1, col, format!("unknown function `{name}`"))),
                    };
                    let arg = self.expr()?;
                    if !self.eat(')') {
                        return Err(self.err("expected `)`"));
                    }
                    Ok(Expr::Call(func, Box::new(arg)))
                } else if name == "cos" || name == "sin" {
                    Err(ParseError::new(1, col, format!("`{name}` needs a parenthesised argument")))
                } else {
                    Ok(Expr::Var(name))
                }
            }
            Tok::Op('(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return Err(self.err("expected `)`"));
                }
                Ok(e)
            }
            Tok::Op(c) => Err(self.err(format!("unexpected `{c}`"))),
        }
    }
}

pub fn parse_expr(src: &str) -> Result<Expr, ParseError> {
    let toks = Lexer::run(src)?;
    let mut p = Parser { toks, pos: 0, end_col: src.len() + 1 };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(e)
}

/// Lowers a parsed expression into canonical form. Names found in `constants`
/// are replaced by their values.
pub fn lower(e: &Expr, table: &SymbolTable, constants: &HashMap<String, f64>) -> Result<MtpExpr, AlgebraError> {
    Ok(match e {
        Expr::Num(x) => MtpExpr::constant(*x),
        Expr::Var(v) if v == "pi" => MtpExpr::constant(PI),
        Expr::Var(v) => match constants.get(v) {
            Some(c) => MtpExpr::constant(*c),
            None => MtpExpr::symbol(table.lookup(v).ok_or_else(|| AlgebraError::UnknownSymbol(v.clone()))?),
        },
        Expr::Neg(a) => lower(a, table, constants)?.neg(),
        Expr::Bin(op, a, b) => {
            let (x, y) = (lower(a, table, constants)?, lower(b, table, constants)?);
            match op {
                BinOp::Add => x.add(&y),
                BinOp::Sub => x.sub(&y),
                BinOp::Mul => x.mul(&y)?,
                BinOp::Div => {
                    if !y.is_constant() || y.is_zero() {
                        return Err(AlgebraError::DivisionByNonConstant(b.to_string()));
                    }
                    x.scale(1.0 / y.constant_term())
                }
            }
        }
        Expr::Pow(a, n) => lower(a, table, constants)?.pow(*n)?,
        Expr::Call(func, a) => {
            let arg = lower(a, table, constants)?;
            let Some((linear, c0)) = arg.as_affine() else {
                return Err(AlgebraError::NonAffineTrigArgument { func: func.name(), arg: a.to_string() });
            };
            let f = match func {
                Func::Cos => TrigFn::Cos,
                Func::Sin => TrigFn::Sin,
            };
            expand_affine_trig(f, &linear, c0)
        }
    })
}

/// Numeric evaluation; `lookup` resolves every name other than `pi`.
pub fn eval_numeric(e: &Expr, lookup: &impl Fn(&str) -> Option<f64>) -> Result<f64, AlgebraError> {
    Ok(match e {
        Expr::Num(x) => *x,
        Expr::Var(v) if v == "pi" => PI,
        Expr::Var(v) => lookup(v).ok_or_else(|| AlgebraError::UnboundSymbol(v.clone()))?,
        Expr::Neg(a) => -eval_numeric(a, lookup)?,
        Expr::Bin(op, a, b) => {
            let (x, y) = (eval_numeric(a, lookup)?, eval_numeric(b, lookup)?);
            match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => x / y,
            }
        }
        Expr::Pow(a, n) => eval_numeric(a, lookup)?.powi(*n as i32),
        Expr::Call(Func::Cos, a) => eval_numeric(a, lookup)?.cos(),
        Expr::Call(Func::Sin, a) => eval_numeric(a, lookup)?.sin(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::SymbolKind;
    use proptest::prelude::*;

    #[test]
    fn precedence_and_associativity() {
        let e = parse_expr("a - b - c*d^2/e").unwrap();
        assert_eq!(e.to_string(), "a - b - c*d^2/e");
        let e = parse_expr("a - (b - c)").unwrap();
        assert_eq!(e.to_string(), "a - (b - c)");
        let e = parse_expr("-x^2").unwrap();
        assert_eq!(e, Expr::Neg(Box::new(Expr::Pow(Box::new(Expr::Var("x".into())), 2))));
        assert_eq!(parse_expr("(-x)^2").unwrap().to_string(), "(-x)^2");
    }

    #[test]
    fn numbers() {
        assert_eq!(parse_expr("1.5e-3").unwrap(), Expr::Num(1.5e-3));
        assert_eq!(parse_expr(".25").unwrap(), Expr::Num(0.25));
        assert_eq!(parse_expr("2E3").unwrap(), Expr::Num(2000.0));
    }

    #[test]
    fn errors_carry_columns() {
        let e = parse_expr("x + * y").unwrap_err();
        assert_eq!(e.col, 5);
        assert!(parse_expr("exp(x)").unwrap_err().msg.contains("unknown function"));
        assert!(parse_expr("x^1.5").is_err());
        assert!(parse_expr("(x").is_err());
        assert!(parse_expr("x $ y").is_err());
        assert_eq!(parse_expr("x y").unwrap_err().col, 3);
    }

    #[test]
    fn lowering_expands_trig() {
        let mut t = SymbolTable::new();
        let x = t.declare("x", SymbolKind::State).unwrap();
        let th = t.declare("th", SymbolKind::State).unwrap();
        let consts = HashMap::from([("dt".to_string(), 0.1)]);
        let e = lower(&parse_expr("x + dt*2*cos(th + pi/4)").unwrap(), &t, &consts).unwrap();
        let mut vals = vec![0.0; 2];
        vals[x.0 as usize] = 0.5;
        vals[th.0 as usize] = 1.2;
        let want = 0.5 + 0.2 * (1.2f64 + PI / 4.0).cos();
        assert!((e.eval(&vals) - want).abs() < 1e-14);
        let bad = lower(&parse_expr("cos(x*th)").unwrap(), &t, &consts);
        assert!(matches!(bad, Err(AlgebraError::NonAffineTrigArgument { func: "cos", .. })));
        let bad = lower(&parse_expr("x/th").unwrap(), &t, &consts);
        assert!(matches!(bad, Err(AlgebraError::DivisionByNonConstant(_))));
        let bad = lower(&parse_expr("q").unwrap(), &t, &consts);
        assert!(matches!(bad, Err(AlgebraError::UnknownSymbol(_))));
    }

    #[test]
    fn numeric_evaluation() {
        let e = parse_expr("2*pi/7.5*(k - 5)").unwrap();
        let v = eval_numeric(&e, &|n: &str| (n == "k").then_some(6.0)).unwrap();
        assert!((v - 2.0 * PI / 7.5).abs() < 1e-15);
        assert_eq!(e.variables().into_iter().collect::<Vec<_>>(), vec!["k".to_string()]);
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0u32..1000).prop_map(|n| Expr::Num(n as f64 / 8.0)),
            prop::sample::select(vec!["x", "y", "th", "pi"]).prop_map(|s| Expr::Var(s.to_string())),
        ];
        leaf.prop_recursive(5, 40, 3, |inner| {
            prop_oneof![
                inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                (inner.clone(), 0u32..5).prop_map(|(e, n)| Expr::Pow(Box::new(e), n)),
                inner.clone().prop_map(|e| Expr::Call(Func::Cos, Box::new(e))),
                inner.clone().prop_map(|e| Expr::Call(Func::Sin, Box::new(e))),
                (
                    prop::sample::select(vec![BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div]),
                    inner.clone(),
                    inner
                )
                    .prop_map(|(op, a, b)| Expr::bin(op, a, b)),
            ]
        })
    }

    proptest! {
        #[test]
        fn display_round_trips(e in arb_expr()) {
            let text = e.to_string();
            prop_assert_eq!(parse_expr(&text).unwrap(), e, "{}", text);
        }
    }
}
