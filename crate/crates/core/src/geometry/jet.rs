//! Forward-mode jets at a point.
//!
//! `Dual` carries a value and its coordinate gradient. `Jet` carries a value
//! and its first partials as duals, so products and compositions of jets keep
//! exact second derivatives.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Largest supported total dimension n+m.
pub const MAXD: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: [f64; MAXD],
}

impl Default for Dual {
    fn default() -> Self {
        Dual::constant(0.0)
    }
}

impl Dual {
    pub const fn constant(v: f64) -> Self {
        Dual { v, d: [0.0; MAXD] }
    }

    pub fn new(v: f64, d: [f64; MAXD]) -> Self {
        Dual { v, d }
    }

    pub fn scale(self, s: f64) -> Dual {
        let mut d = self.d;
        for x in d.iter_mut() {
            *x *= s;
        }
        Dual { v: self.v * s, d }
    }

    fn chain(self, v: f64, slope: f64) -> Dual {
        let mut d = self.d;
        for x in d.iter_mut() {
            *x *= slope;
        }
        Dual { v, d }
    }

    pub fn exp(self) -> Dual {
        let e = self.v.exp();
        self.chain(e, e)
    }

    pub fn ln(self) -> Dual {
        self.chain(self.v.ln(), 1.0 / self.v)
    }

    pub fn sqrt(self) -> Dual {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s)
    }

    pub fn recip(self) -> Dual {
        let r = 1.0 / self.v;
        self.chain(r, -r * r)
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(mut self, o: Dual) -> Dual {
        self.v += o.v;
        for k in 0..MAXD {
            self.d[k] += o.d[k];
        }
        self
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(mut self, o: Dual) -> Dual {
        self.v -= o.v;
        for k in 0..MAXD {
            self.d[k] -= o.d[k];
        }
        self
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        let mut d = [0.0; MAXD];
        for k in 0..MAXD {
            d[k] = self.d[k] * o.v + self.v * o.d[k];
        }
        Dual { v: self.v * o.v, d }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        self * o.recip()
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        self.scale(-1.0)
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    fn mul(self, s: f64) -> Dual {
        self.scale(s)
    }
}

impl std::ops::AddAssign for Dual {
    fn add_assign(&mut self, o: Dual) {
        *self = *self + o;
    }
}

impl std::ops::SubAssign for Dual {
    fn sub_assign(&mut self, o: Dual) {
        *self = *self - o;
    }
}

impl std::iter::Sum for Dual {
    fn sum<I: Iterator<Item = Dual>>(iter: I) -> Dual {
        iter.fold(Dual::constant(0.0), |a, b| a + b)
    }
}

/// Value, gradient and Hessian of a scalar at a point, in a form that
/// supports arithmetic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub v: Dual,
    pub d: [Dual; MAXD],
}

impl Default for Jet {
    fn default() -> Self {
        Jet::constant(0.0)
    }
}

impl Jet {
    pub const fn constant(v: f64) -> Self {
        Jet { v: Dual::constant(v), d: [Dual::constant(0.0); MAXD] }
    }

    /// Build from raw value, gradient and (symmetric) Hessian.
    pub fn from_raw(value: f64, grad: &[f64], hess: &[f64], dim: usize) -> Self {
        let mut g = [0.0; MAXD];
        g[..dim].copy_from_slice(&grad[..dim]);
        let mut d = [Dual::constant(0.0); MAXD];
        for a in 0..dim {
            let mut row = [0.0; MAXD];
            row[..dim].copy_from_slice(&hess[a * dim..a * dim + dim]);
            d[a] = Dual::new(grad[a], row);
        }
        Jet { v: Dual::new(value, g), d }
    }

    pub fn value(&self) -> f64 {
        self.v.v
    }

    pub fn grad(&self, a: usize) -> f64 {
        self.v.d[a]
    }

    pub fn hess(&self, a: usize, b: usize) -> f64 {
        self.d[a].d[b]
    }

    pub fn scale(self, s: f64) -> Jet {
        let mut d = self.d;
        for x in d.iter_mut() {
            *x = x.scale(s);
        }
        Jet { v: self.v.scale(s), d }
    }

    fn chain(self, f: Dual, fprime: Dual) -> Jet {
        let mut d = self.d;
        for x in d.iter_mut() {
            *x = *x * fprime;
        }
        Jet { v: f, d }
    }

    pub fn exp(self) -> Jet {
        let e = self.v.exp();
        self.chain(e, e)
    }

    pub fn sqrt(self) -> Jet {
        let s = self.v.sqrt();
        self.chain(s, s.recip().scale(0.5))
    }

    pub fn recip(self) -> Jet {
        let r = self.v.recip();
        self.chain(r, -(r * r))
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(mut self, o: Jet) -> Jet {
        self.v = self.v + o.v;
        for k in 0..MAXD {
            self.d[k] = self.d[k] + o.d[k];
        }
        self
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(mut self, o: Jet) -> Jet {
        self.v = self.v - o.v;
        for k in 0..MAXD {
            self.d[k] = self.d[k] - o.d[k];
        }
        self
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let mut d = [Dual::constant(0.0); MAXD];
        for k in 0..MAXD {
            d[k] = self.d[k] * o.v + self.v * o.d[k];
        }
        Jet { v: self.v * o.v, d }
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

/// Inverse of a small dense matrix of duals (row-major), Gauss-Jordan with
/// partial pivoting on the values.
pub fn invert_dual(a: &[Dual], n: usize) -> Option<Vec<Dual>> {
    let mut m = a.to_vec();
    let mut inv = vec![Dual::constant(0.0); n * n];
    for i in 0..n {
        inv[i * n + i] = Dual::constant(1.0);
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&r, &s| m[r * n + col].v.abs().total_cmp(&m[s * n + col].v.abs()))?;
        if m[piv * n + col].v.abs() < 1e-300 {
            return None;
        }
        if piv != col {
            for k in 0..n {
                m.swap(piv * n + k, col * n + k);
                inv.swap(piv * n + k, col * n + k);
            }
        }
        let p = m[col * n + col].recip();
        for k in 0..n {
            m[col * n + k] = m[col * n + k] * p;
            inv[col * n + k] = inv[col * n + k] * p;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = m[r * n + col];
            if f.v == 0.0 && f.d.iter().all(|x| *x == 0.0) {
                continue;
            }
            for k in 0..n {
                m[r * n + k] = m[r * n + k] - f * m[col * n + k];
                inv[r * n + k] = inv[r * n + k] - f * inv[col * n + k];
            }
        }
    }
    Some(inv)
}

/// Determinant of a small matrix of jets by cofactor expansion (n ≤ 4 in
/// practice).
pub fn det_jet(a: &[Jet], n: usize) -> Jet {
    match n {
        0 => Jet::constant(1.0),
        1 => a[0],
        2 => a[0] * a[3] - a[1] * a[2],
        _ => {
            let mut total = Jet::constant(0.0);
            for c in 0..n {
                let mut minor = Vec::with_capacity((n - 1) * (n - 1));
                for r in 1..n {
                    for k in 0..n {
                        if k != c {
                            minor.push(a[r * n + k]);
                        }
                    }
                }
                let term = a[c] * det_jet(&minor, n - 1);
                total = if c % 2 == 0 { total + term } else { total - term };
            }
            total
        }
    }
}
