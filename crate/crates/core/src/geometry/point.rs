use super::jet::{det_jet, Dual, Jet, MAXD};
use super::GeometryError;

/// Jets of the d-metric blocks and the N-connection at one point.
#[derive(Debug, Clone)]
pub struct PointInput {
    pub n: usize,
    pub m: usize,
    /// g_ij, row-major n×n.
    pub g: Vec<Jet>,
    /// h_ab, row-major m×m (local v-indices 0..m).
    pub h: Vec<Jet>,
    /// N_i^a, row-major n×m.
    pub nc: Vec<Jet>,
}

impl PointInput {
    pub fn dim(&self) -> usize {
        self.n + self.m
    }

    pub fn g(&self, i: usize, j: usize) -> &Jet {
        &self.g[i * self.n + j]
    }

    pub fn h(&self, a: usize, b: usize) -> &Jet {
        &self.h[a * self.m + b]
    }

    /// N_i^a with a a local v-index.
    pub fn nc(&self, i: usize, a: usize) -> &Jet {
        &self.nc[i * self.m + a]
    }

    /// e_alpha applied to a field given by its jet, as a dual (value plus
    /// coordinate gradient of e_alpha f).
    pub fn frame_jet(&self, f: &Jet, alpha: usize) -> Dual {
        if alpha >= self.n {
            return f.d[alpha];
        }
        let mut out = f.d[alpha];
        for a in 0..self.m {
            out -= self.nc(alpha, a).v * f.d[self.n + a];
        }
        out
    }

    /// e_alpha applied to a dual quantity (value only).
    pub fn frame_dual(&self, x: &Dual, alpha: usize) -> f64 {
        if alpha >= self.n {
            return x.d[alpha];
        }
        let mut out = x.d[alpha];
        for a in 0..self.m {
            out -= self.nc(alpha, a).value() * x.d[self.n + a];
        }
        out
    }

    /// Anholonomy coefficients W^gamma_{alpha beta} with
    /// [e_alpha, e_beta] = W^gamma_{alpha beta} e_gamma, dim^3 values indexed
    /// [gamma][alpha][beta].
    pub fn anholonomy(&self) -> Vec<f64> {
        let d = self.dim();
        let (n, m) = (self.n, self.m);
        let mut w = vec![0.0; d * d * d];
        let at = |g: usize, a: usize, b: usize| (g * d + a) * d + b;
        for i in 0..n {
            for j in 0..n {
                for a in 0..m {
                    w[at(n + a, i, j)] = self.omega(i, j, a);
                }
            }
            for b in 0..m {
                for c in 0..m {
                    // [e_i, e_b] = (d_b N_i^c) e_c
                    let x = self.nc(i, c).grad(n + b);
                    w[at(n + c, i, n + b)] = x;
                    w[at(n + c, n + b, i)] = -x;
                }
            }
        }
        w
    }

    /// Omega_ij^a (a local v-index).
    pub fn omega(&self, i: usize, j: usize, a: usize) -> f64 {
        let n = self.n;
        let mut v = self.nc(i, a).grad(j) - self.nc(j, a).grad(i);
        for b in 0..self.m {
            v += self.nc(i, b).value() * self.nc(j, a).grad(n + b) - self.nc(j, b).value() * self.nc(i, a).grad(n + b);
        }
        v
    }

    /// Full coordinate-basis metric of the off-diagonal ansatz, as jets.
    pub fn assembled(&self) -> Vec<Jet> {
        let (n, m) = (self.n, self.m);
        let d = n + m;
        let mut out = vec![Jet::constant(0.0); d * d];
        // N_j^e h_ae
        let mut nh = vec![Jet::constant(0.0); n * m];
        for j in 0..n {
            for a in 0..m {
                let mut s = Jet::constant(0.0);
                for e in 0..m {
                    s = s + *self.nc(j, e) * *self.h(a, e);
                }
                nh[j * m + a] = s;
            }
        }
        for i in 0..n {
            for j in 0..n {
                let mut s = *self.g(i, j);
                for a in 0..m {
                    s = s + *self.nc(i, a) * nh[j * m + a];
                }
                out[i * d + j] = s;
            }
            for a in 0..m {
                out[i * d + n + a] = nh[i * m + a];
                out[(n + a) * d + i] = nh[i * m + a];
            }
        }
        for a in 0..m {
            for b in 0..m {
                out[(n + a) * d + n + b] = *self.h(a, b);
            }
        }
        out
    }

    /// Volume element sqrt(det g) sqrt(det h) as a jet.
    pub fn volume_jet(&self) -> Result<Jet, GeometryError> {
        let dg = det_jet(&self.g, self.n);
        let dh = det_jet(&self.h, self.m);
        if dg.value() <= 0.0 || dh.value() <= 0.0 {
            return Err(GeometryError::Signature(format!(
                "det g = {:.3e}, det h = {:.3e}",
                dg.value(),
                dh.value()
            )));
        }
        Ok(dg.sqrt() * dh.sqrt())
    }

    /// Positive-definiteness of both blocks (Cholesky on values).
    pub fn positive_definite(&self, tol: f64) -> bool {
        let gv: Vec<f64> = self.g.iter().map(|j| j.value()).collect();
        let hv: Vec<f64> = self.h.iter().map(|j| j.value()).collect();
        cholesky_ok(&gv, self.n, tol) && cholesky_ok(&hv, self.m, tol)
    }

    pub fn check_dim(&self) -> Result<(), GeometryError> {
        if self.dim() > MAXD {
            return Err(GeometryError::Chart(format!("n+m = {} exceeds {}", self.dim(), MAXD)));
        }
        Ok(())
    }
}

pub(crate) fn cholesky_ok(a: &[f64], n: usize, tol: f64) -> bool {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > tol) {
                    return false;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    true
}
