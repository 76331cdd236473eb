use std::collections::BTreeMap;

use super::ast::{Expr, Func};
use super::EvalError;

fn domain(op: &'static str, e: &Expr) -> EvalError {
    EvalError::Domain { operation: op, subexpression: e.to_string() }
}

/// Evaluate at a point. `params` may be empty when the tree is already bound.
pub fn evaluate(e: &Expr, point: &[f64], params: &BTreeMap<String, f64>) -> Result<f64, EvalError> {
    eval_with(e, point, &|name| params.get(name).copied())
}

pub(crate) fn eval_with(e: &Expr, point: &[f64], lookup: &dyn Fn(&str) -> Option<f64>) -> Result<f64, EvalError> {
    Ok(match e {
        Expr::Num(v) => *v,
        Expr::Coord(i, name) => *point.get(*i).ok_or_else(|| EvalError::Unbound(name.to_string()))?,
        Expr::Param(name) => lookup(name).ok_or_else(|| EvalError::Unbound(name.to_string()))?,
        Expr::Neg(a) => -eval_with(a, point, lookup)?,
        Expr::Add(a, b) => eval_with(a, point, lookup)? + eval_with(b, point, lookup)?,
        Expr::Sub(a, b) => eval_with(a, point, lookup)? - eval_with(b, point, lookup)?,
        Expr::Mul(a, b) => eval_with(a, point, lookup)? * eval_with(b, point, lookup)?,
        Expr::Div(a, b) => {
            let den = eval_with(b, point, lookup)?;
            if den == 0.0 {
                return Err(domain("division by zero", e));
            }
            eval_with(a, point, lookup)? / den
        }
        Expr::Pow(a, c) => {
            let base = eval_with(a, point, lookup)?;
            let ex = eval_with(c, point, lookup)?;
            if ex.fract() == 0.0 && ex.abs() < 1024.0 {
                if base == 0.0 && ex < 0.0 {
                    return Err(domain("zero to a negative power", e));
                }
                base.powi(ex as i32)
            } else {
                if base < 0.0 {
                    return Err(domain("negative base with fractional exponent", e));
                }
                if base == 0.0 && ex < 0.0 {
                    return Err(domain("zero to a negative power", e));
                }
                base.powf(ex)
            }
        }
        Expr::Call(f, a) => {
            let x = eval_with(a, point, lookup)?;
            match f {
                Func::Sin => x.sin(),
                Func::Cos => x.cos(),
                Func::Exp => x.exp(),
                Func::Log => {
                    if x <= 0.0 {
                        return Err(domain("log of nonpositive value", e));
                    }
                    x.ln()
                }
                Func::Sqrt => {
                    if x < 0.0 {
                        return Err(domain("sqrt of negative value", e));
                    }
                    x.sqrt()
                }
            }
        }
    })
}

/// Replace every parameter by its value.
pub fn bind(e: &Expr, params: &BTreeMap<String, f64>) -> Result<Expr, EvalError> {
    use super::ast::{add, call, div, mul, neg, pow, sub};
    Ok(match e {
        Expr::Num(_) | Expr::Coord(..) => e.clone(),
        Expr::Param(name) => Expr::Num(*params.get(&**name).ok_or_else(|| EvalError::Unbound(name.to_string()))?),
        Expr::Neg(a) => neg(bind(a, params)?),
        Expr::Add(a, b) => add(bind(a, params)?, bind(b, params)?),
        Expr::Sub(a, b) => sub(bind(a, params)?, bind(b, params)?),
        Expr::Mul(a, b) => mul(bind(a, params)?, bind(b, params)?),
        Expr::Div(a, b) => div(bind(a, params)?, bind(b, params)?),
        Expr::Pow(a, b) => pow(bind(a, params)?, bind(b, params)?),
        Expr::Call(f, a) => call(*f, bind(a, params)?),
    })
}
