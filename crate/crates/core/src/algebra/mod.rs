//! Mixed trigonometric polynomials over named symbols.
//!
//! An [`MtpExpr`] is a canonical sum of terms `c * Π_s s^p cos^b(a s + φ) sin^c(a s + φ)`
//! with at most one trigonometric argument per symbol in each term. The
//! scenario grammar is parsed into an [`Expr`] tree and lowered into this
//! form, expanding every `cos`/`sin` of an affine argument by angle addition.

mod eval;
mod exp_poly;
mod expect;
mod expr;
mod parse;
mod trig;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::DistributionError;

pub use eval::{CompiledSystem, Scratch};
pub use exp_poly::{base_scales, ExpPoly};
pub use expect::Bindings;
pub use expr::{expand_affine_trig, Factor, Monomial, MtpExpr, TrigAtom, TrigFn, DEFAULT_TERM_BUDGET};
pub use parse::{eval_numeric, lower, parse_expr, BinOp, Expr, Func, ParseError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SymbolId(pub u16);

impl fmt::Display for SymbolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SymbolKind {
    State,
    Disturbance,
    Control,
    Constant,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Symbol {
    pub name: String,
    pub kind: SymbolKind,
}

#[derive(Clone, Debug, Default)]
pub struct SymbolTable {
    symbols: Vec<Symbol>,
    index: HashMap<String, SymbolId>,
}

impl SymbolTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn declare(&mut self, name: &str, kind: SymbolKind) -> Result<SymbolId, AlgebraError> {
        if self.index.contains_key(name) {
            return Err(AlgebraError::DuplicateSymbol(name.to_string()));
        }
        if name == "pi" || name == "cos" || name == "sin" {
            return Err(AlgebraError::ReservedName(name.to_string()));
        }
        let id = SymbolId(u16::try_from(self.symbols.len()).map_err(|_| AlgebraError::TooManySymbols)?);
        self.symbols.push(Symbol { name: name.to_string(), kind });
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn lookup(&self, name: &str) -> Option<SymbolId> {
        self.index.get(name).copied()
    }

    pub fn get(&self, id: SymbolId) -> &Symbol {
        &self.symbols[id.0 as usize]
    }

    pub fn name(&self, id: SymbolId) -> &str {
        &self.symbols[id.0 as usize].name
    }

    pub fn kind(&self, id: SymbolId) -> SymbolKind {
        self.symbols[id.0 as usize].kind
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (SymbolId, &Symbol)> {
        self.symbols.iter().enumerate().map(|(i, s)| (SymbolId(i as u16), s))
    }

    pub fn of_kind(&self, kind: SymbolKind) -> Vec<SymbolId> {
        self.iter().filter(|(_, s)| s.kind == kind).map(|(id, _)| id).collect()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgebraError {
    #[error("expression exceeds the term budget of {budget} terms")]
    TermBudgetExceeded { budget: usize },
    #[error("symbol {sym} carries trigonometric arguments with incompatible scales {a} and {b}")]
    IncompatibleAtoms { sym: SymbolId, a: f64, b: f64 },
    #[error("unbound symbol `{0}`")]
    UnboundSymbol(String),
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("symbol `{0}` is declared twice")]
    DuplicateSymbol(String),
    #[error("`{0}` is a reserved name")]
    ReservedName(String),
    #[error("too many symbols")]
    TooManySymbols,
    #[error("argument of {func} is not affine in the symbols: {arg}")]
    NonAffineTrigArgument { func: &'static str, arg: String },
    #[error("division by a non-constant expression: {0}")]
    DivisionByNonConstant(String),
    #[error("expression is not a numeric constant: {0}")]
    NotConstant(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
}
