//! Scalar expressions over chart coordinates: parsing, exact partial
//! derivatives, conservative simplification and evaluation.

mod ast;
mod diff;
mod eval;
mod parse;

pub use ast::{add, call, div, mul, neg, pow, sub, Expr, Func};
pub use diff::differentiate;
pub use eval::{bind, evaluate};
pub use parse::{parse, SymbolTable};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown symbol '{0}'")]
    UnknownSymbol(String),
    #[error("function '{function}' takes {expected} argument(s), got {found}")]
    Arity { function: String, expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound symbol '{0}'")]
    Unbound(String),
    #[error("domain error ({operation}) in '{subexpression}'")]
    Domain { operation: &'static str, subexpression: String },
}

impl Expr {
    pub fn eval(&self, point: &[f64]) -> Result<f64, EvalError> {
        eval::eval_with(self, point, &|_| None)
    }

    pub fn diff(&self, coord: usize) -> Expr {
        differentiate(self, coord)
    }
}
