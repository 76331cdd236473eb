use super::ast::{add, call, div, mul, neg, pow, sub, Expr, Func};

/// Exact partial derivative with respect to the coordinate at `coord`.
/// Parameters are constants.
pub fn differentiate(e: &Expr, coord: usize) -> Expr {
    match e {
        Expr::Num(_) | Expr::Param(_) => Expr::Num(0.0),
        Expr::Coord(i, _) => Expr::Num(if *i == coord { 1.0 } else { 0.0 }),
        Expr::Neg(a) => neg(differentiate(a, coord)),
        Expr::Add(a, b) => add(differentiate(a, coord), differentiate(b, coord)),
        Expr::Sub(a, b) => sub(differentiate(a, coord), differentiate(b, coord)),
        Expr::Mul(a, b) => {
            let da = differentiate(a, coord);
            let db = differentiate(b, coord);
            add(mul(da, (**b).clone()), mul((**a).clone(), db))
        }
        Expr::Div(a, b) => {
            let da = differentiate(a, coord);
            let db = differentiate(b, coord);
            if db.is_zero() {
                return div(da, (**b).clone());
            }
            let num = sub(mul(da, (**b).clone()), mul((**a).clone(), db));
            div(num, pow((**b).clone(), Expr::Num(2.0)))
        }
        Expr::Pow(a, c) => {
            let da = differentiate(a, coord);
            if da.is_zero() {
                return Expr::Num(0.0);
            }
            let cm1 = sub((**c).clone(), Expr::Num(1.0));
            mul(mul((**c).clone(), pow((**a).clone(), cm1)), da)
        }
        Expr::Call(f, a) => {
            let da = differentiate(a, coord);
            if da.is_zero() {
                return Expr::Num(0.0);
            }
            let u = (**a).clone();
            let outer = match f {
                Func::Sin => call(Func::Cos, u),
                Func::Cos => neg(call(Func::Sin, u)),
                Func::Exp => call(Func::Exp, u),
                Func::Log => div(Expr::Num(1.0), u),
                Func::Sqrt => div(Expr::Num(0.5), call(Func::Sqrt, u)),
            };
            mul(outer, da)
        }
    }
}
