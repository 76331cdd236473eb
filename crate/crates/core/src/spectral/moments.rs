use serde::{Deserialize, Serialize};

use super::SpectralError;
use crate::exprlang::{parse, Expr, SymbolTable};

/// Positive testing function f(u), u >= 0, given as an expression in `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestingFunction {
    pub source: String,
    expr: Expr,
}

impl TestingFunction {
    pub fn parse(source: &str) -> Result<Self, SpectralError> {
        let table = SymbolTable::new(vec!["u".into()], vec![]);
        let expr = parse(source, &table).map_err(|e| SpectralError::Function(format!("{source}: {e}")))?;
        let tf = TestingFunction { source: source.to_string(), expr };
        tf.check_positive()?;
        Ok(tf)
    }

    /// Named built-ins: `exp` (e^{-u}), `gauss` (e^{-u^2}), `rational` (1/(1+u)^4);
    /// anything else is parsed as an expression.
    pub fn named(name: &str) -> Result<Self, SpectralError> {
        match name {
            "exp" => Self::parse("exp(-u)"),
            "gauss" => Self::parse("exp(-u^2)"),
            "rational" => Self::parse("1/(1 + u)^4"),
            other => Self::parse(other),
        }
    }

    pub fn eval(&self, u: f64) -> Result<f64, SpectralError> {
        self.expr.eval(&[u]).map_err(|e| SpectralError::Function(format!("{} at u = {u}: {e}", self.source)))
    }

    /// k-th derivative at u.
    pub fn derivative(&self, k: usize, u: f64) -> Result<f64, SpectralError> {
        let mut e = self.expr.clone();
        for _ in 0..k {
            e = e.diff(0);
        }
        e.eval(&[u]).map_err(|e| SpectralError::Function(format!("{}: derivative {k} at u = {u}: {e}", self.source)))
    }

    fn check_positive(&self) -> Result<(), SpectralError> {
        for j in 0..=2000 {
            let u = 0.05 * j as f64;
            let v = self.eval(u)?;
            if !(v >= 0.0) {
                return Err(SpectralError::Function(format!("{} is not positive at u = {u} (value {v})", self.source)));
            }
        }
        Ok(())
    }
}

/// Moments f_(0) = int f u du, f_(2) = int f du and f_(2k+4) = (-1)^k f^(k)(0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub f0: f64,
    pub f2: f64,
    /// f_(4), f_(6), ...
    pub higher: Vec<f64>,
    /// Size of the last dyadic panel of the f_(0) and f_(2) integrals.
    pub tails: [f64; 2],
}

impl Moments {
    /// f_(j) for even j.
    pub fn get(&self, j: usize) -> Option<f64> {
        match j {
            0 => Some(self.f0),
            2 => Some(self.f2),
            j if j >= 4 && j % 2 == 0 => self.higher.get((j - 4) / 2).copied(),
            _ => None,
        }
    }
}

pub fn moments(tf: &TestingFunction, kmax: usize) -> Result<Moments, SpectralError> {
    let eval = |u: f64| tf.eval(u).unwrap_or(f64::NAN);
    let (f0, t0) = half_line(&|u| eval(u) * u, 0.0).map_err(|e| label(e, "f_(0)", tf))?;
    let (f2, t2) = half_line(&eval, 0.0).map_err(|e| label(e, "f_(2)", tf))?;
    let mut higher = Vec::with_capacity(kmax + 1);
    for k in 0..=kmax {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        higher.push(sign * tf.derivative(k, 0.0)?);
    }
    Ok(Moments { f0, f2, higher, tails: [t0, t2] })
}

fn label(e: SpectralError, what: &str, tf: &TestingFunction) -> SpectralError {
    match e {
        SpectralError::Divergent(m) => SpectralError::Divergent(format!("{what} of {}: {m}", tf.source)),
        other => other,
    }
}

/// Integral of g over [a, inf) as a sum of dyadic panels, each by adaptive
/// double-exponential quadrature. Returns the value and the size of the last
/// panel added.
pub(crate) fn half_line(g: &dyn Fn(f64) -> f64, a: f64) -> Result<(f64, f64), SpectralError> {
    let mut lo = a;
    let mut width = 1.0;
    let mut sum = 0.0f64;
    let mut quiet = 0;
    let mut growing = 0;
    let mut prev = f64::INFINITY;
    for k in 0..400 {
        let hi = lo + width;
        let rough = quadrature::integrate(g, lo, hi, 1e-6).integral;
        let target = 1e-14 * sum.abs().max(rough.abs()).max(1e-290);
        let out = quadrature::integrate(g, lo, hi, target);
        let panel = out.integral;
        let nan_free = (0..=8).all(|j| g(lo + width * j as f64 / 8.0).is_finite());
        if !panel.is_finite() || !nan_free {
            return Err(SpectralError::Divergent(format!("integrand not finite on [{lo}, {hi}]")));
        }
        sum += panel;
        if panel.abs() <= 1e-16 * sum.abs() || (panel == 0.0 && sum == 0.0) {
            quiet += 1;
            if quiet >= 2 {
                return Ok((sum, panel.abs()));
            }
        } else {
            quiet = 0;
        }
        growing = if k > 8 && panel.abs() >= prev { growing + 1 } else { 0 };
        if growing >= 8 {
            return Err(SpectralError::Divergent(format!("panel integrals keep growing past u = {hi:e}")));
        }
        prev = panel.abs();
        lo = hi;
        width *= 2.0;
    }
    Err(SpectralError::Divergent(format!("no convergence by u = {lo:e}")))
}
