//! Pointwise N-adapted calculus. Connection coefficients are carried as
//! duals so their frame derivatives are exact; everything downstream of
//! them (torsion, curvature, distortion) is plain values.
//!
//! Storage conventions (all 0-based, h-indices 0..n, v-indices n..n+m):
//! - `gamma[(c*d + b)*d + a]` is the c-component of the covariant derivative
//!   of e_b along e_a, so L^i_jk = gamma(i,j,k), C^i_jc = gamma(i,j,n+c), ...
//! - `riemann[((c*d + b)*d + nu)*d + mu]` is the c-component of
//!   R(e_mu, e_nu) e_b, so R^i_hjk = riemann(i,h,j,k).

use crate::geometry::jet::{invert_dual, Dual};
use crate::geometry::{GeometryError, PointInput};

pub(crate) fn i3(d: usize, c: usize, b: usize, a: usize) -> usize {
    (c * d + b) * d + a
}

pub(crate) fn i4(d: usize, c: usize, b: usize, nu: usize, mu: usize) -> usize {
    ((c * d + b) * d + nu) * d + mu
}

/// Metric blocks, their inverses and frame derivatives at a point.
pub struct LocalFrame<'a> {
    pub p: &'a PointInput,
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub g: Vec<Dual>,
    pub gi: Vec<Dual>,
    pub h: Vec<Dual>,
    pub hi: Vec<Dual>,
    /// e_alpha g_ij at [(alpha*n + i)*n + j].
    pub eg: Vec<Dual>,
    /// e_alpha h_ab at [(alpha*m + a)*m + b].
    pub eh: Vec<Dual>,
    /// d_b N_i^a at [(b*n + i)*m + a] (b local v-index).
    pub dvn: Vec<Dual>,
}

impl<'a> LocalFrame<'a> {
    pub fn new(p: &'a PointInput) -> Result<Self, GeometryError> {
        p.check_dim()?;
        let (n, m) = (p.n, p.m);
        let d = n + m;
        let g: Vec<Dual> = p.g.iter().map(|j| j.v).collect();
        let h: Vec<Dual> = p.h.iter().map(|j| j.v).collect();
        let gi = invert_dual(&g, n).ok_or_else(|| GeometryError::Degenerate("g block not invertible".into()))?;
        let hi = invert_dual(&h, m).ok_or_else(|| GeometryError::Degenerate("h block not invertible".into()))?;
        let mut eg = Vec::with_capacity(d * n * n);
        for al in 0..d {
            for x in &p.g {
                eg.push(p.frame_jet(x, al));
            }
        }
        let mut eh = Vec::with_capacity(d * m * m);
        for al in 0..d {
            for x in &p.h {
                eh.push(p.frame_jet(x, al));
            }
        }
        let mut dvn = Vec::with_capacity(m * n * m);
        for b in 0..m {
            for x in &p.nc {
                dvn.push(x.d[n + b]);
            }
        }
        Ok(LocalFrame { p, n, m, d, g, gi, h, hi, eg, eh, dvn })
    }

    fn eg(&self, al: usize, i: usize, j: usize) -> Dual {
        self.eg[(al * self.n + i) * self.n + j]
    }

    fn eh(&self, al: usize, a: usize, b: usize) -> Dual {
        self.eh[(al * self.m + a) * self.m + b]
    }

    /// d_b N_i^a, local v-indices.
    pub fn dvn(&self, b: usize, i: usize, a: usize) -> Dual {
        self.dvn[(b * self.n + i) * self.m + a]
    }

    /// Frame metric value G_{alpha beta} (block diagonal).
    pub fn frame_metric(&self) -> Vec<f64> {
        let (n, d) = (self.n, self.d);
        let mut out = vec![0.0; d * d];
        for i in 0..n {
            for j in 0..n {
                out[i * d + j] = self.g[i * n + j].v;
            }
        }
        for a in 0..self.m {
            for b in 0..self.m {
                out[(n + a) * d + n + b] = self.h[a * self.m + b].v;
            }
        }
        out
    }

    pub fn frame_metric_inverse(&self) -> Vec<f64> {
        let (n, d) = (self.n, self.d);
        let mut out = vec![0.0; d * d];
        for i in 0..n {
            for j in 0..n {
                out[i * d + j] = self.gi[i * n + j].v;
            }
        }
        for a in 0..self.m {
            for b in 0..self.m {
                out[(n + a) * d + n + b] = self.hi[a * self.m + b].v;
            }
        }
        out
    }

    /// Canonical d-connection, full frame array (zero off the four blocks).
    pub fn canonical(&self) -> Vec<Dual> {
        let (n, m, d) = (self.n, self.m, self.d);
        let mut gam = vec![Dual::constant(0.0); d * d * d];
        let half = 0.5;
        // L^i_jk = 1/2 g^ir (e_k g_jr + e_j g_kr - e_r g_jk)
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let mut s = Dual::constant(0.0);
                    for r in 0..n {
                        let br = self.eg(k, j, r) + self.eg(j, k, r) - self.eg(r, j, k);
                        s += self.gi[i * n + r] * br;
                    }
                    gam[i3(d, i, j, k)] = s.scale(half);
                }
            }
        }
        // L^a_bk = d_b N_k^a + 1/2 h^ac (e_k h_bc - h_dc d_b N_k^d - h_db d_c N_k^d)
        for a in 0..m {
            for b in 0..m {
                for k in 0..n {
                    let mut s = Dual::constant(0.0);
                    for c in 0..m {
                        let mut br = self.eh(k, b, c);
                        for e in 0..m {
                            br -= self.h[e * m + c] * self.dvn(b, k, e);
                            br -= self.h[e * m + b] * self.dvn(c, k, e);
                        }
                        s += self.hi[a * m + c] * br;
                    }
                    gam[i3(d, n + a, n + b, k)] = self.dvn(b, k, a) + s.scale(half);
                }
            }
        }
        // C^i_jc = 1/2 g^ik e_c g_jk
        for i in 0..n {
            for j in 0..n {
                for c in 0..m {
                    let mut s = Dual::constant(0.0);
                    for k in 0..n {
                        s += self.gi[i * n + k] * self.eg(n + c, j, k);
                    }
                    gam[i3(d, i, j, n + c)] = s.scale(half);
                }
            }
        }
        // C^a_bc = 1/2 h^ae (e_c h_be + e_b h_ce - e_e h_bc)
        for a in 0..m {
            for b in 0..m {
                for c in 0..m {
                    let mut s = Dual::constant(0.0);
                    for e in 0..m {
                        let br = self.eh(n + c, b, e) + self.eh(n + b, c, e) - self.eh(n + e, b, c);
                        s += self.hi[a * m + e] * br;
                    }
                    gam[i3(d, n + a, n + b, n + c)] = s.scale(half);
                }
            }
        }
        gam
    }

    /// Levi-Civita connection: coordinate Christoffel symbols of the
    /// assembled metric, transformed to the N-adapted frame.
    pub fn levi_civita(&self) -> Result<Vec<Dual>, GeometryError> {
        let (n, m, d) = (self.n, self.m, self.d);
        let p = self.p;
        let big = p.assembled();
        let gv: Vec<Dual> = big.iter().map(|j| j.v).collect();
        let ginv = invert_dual(&gv, d).ok_or_else(|| GeometryError::Degenerate("assembled metric not invertible".into()))?;
        // coordinate Christoffels, lowered first: [s][nu][la]
        let mut low = vec![Dual::constant(0.0); d * d * d];
        for s in 0..d {
            for nu in 0..d {
                for la in nu..d {
                    let v = (big[s * d + la].d[nu] + big[s * d + nu].d[la] - big[nu * d + la].d[s]).scale(0.5);
                    low[i3(d, s, nu, la)] = v;
                    low[i3(d, s, la, nu)] = v;
                }
            }
        }
        let mut chr = vec![Dual::constant(0.0); d * d * d];
        for mu in 0..d {
            for nu in 0..d {
                for la in nu..d {
                    let mut acc = Dual::constant(0.0);
                    for s in 0..d {
                        acc += ginv[mu * d + s] * low[i3(d, s, nu, la)];
                    }
                    chr[i3(d, mu, nu, la)] = acc;
                    chr[i3(d, mu, la, nu)] = acc;
                }
            }
        }
        // vielbein e_alpha^mu and its coordinate derivatives
        let zero = Dual::constant(0.0);
        let one = Dual::constant(1.0);
        let mut e = vec![zero; d * d];
        for i in 0..n {
            e[i * d + i] = one;
            for a in 0..m {
                e[i * d + n + a] = -p.nc(i, a).v;
            }
        }
        for a in 0..m {
            e[(n + a) * d + n + a] = one;
        }
        // coframe e^gamma_mu
        let mut th = vec![zero; d * d];
        for i in 0..n {
            th[i * d + i] = one;
        }
        for a in 0..m {
            for j in 0..n {
                th[(n + a) * d + j] = p.nc(j, a).v;
            }
            th[(n + a) * d + n + a] = one;
        }
        let mut gam = vec![zero; d * d * d];
        for al in 0..d {
            for be in 0..d {
                // vector V^mu = e_al(e_be^mu) + e_al^nu e_be^la chr^mu_nu_la
                let mut v = vec![zero; d];
                for mu in 0..d {
                    let mut acc = zero;
                    if be < n && mu >= n {
                        for nu in 0..d {
                            // d_nu e_be^mu = -d_nu N_be^a
                            acc -= e[al * d + nu] * p.nc(be, mu - n).d[nu];
                        }
                    }
                    for nu in 0..d {
                        let ean = e[al * d + nu];
                        if ean.v == 0.0 && ean.d.iter().all(|x| *x == 0.0) {
                            continue;
                        }
                        for la in 0..d {
                            let ebl = e[be * d + la];
                            if ebl.v == 0.0 && ebl.d.iter().all(|x| *x == 0.0) {
                                continue;
                            }
                            acc += ean * ebl * chr[i3(d, mu, nu, la)];
                        }
                    }
                    v[mu] = acc;
                }
                for ga in 0..d {
                    let mut acc = zero;
                    for mu in 0..d {
                        acc += th[ga * d + mu] * v[mu];
                    }
                    gam[i3(d, ga, be, al)] = acc;
                }
            }
        }
        Ok(gam)
    }

    /// Frame derivative e_alpha of a dual quantity.
    pub fn e(&self, x: &Dual, alpha: usize) -> f64 {
        self.p.frame_dual(x, alpha)
    }

    /// Curvature of any frame connection:
    /// R(e_mu,e_nu)e_b = e_mu G^c_{b nu} - e_nu G^c_{b mu}
    ///   + G^s_{b nu} G^c_{s mu} - G^s_{b mu} G^c_{s nu} - W^s_{mu nu} G^c_{b s}.
    pub fn riemann_general(&self, gam: &[Dual]) -> Vec<f64> {
        let d = self.d;
        let w = self.p.anholonomy();
        let gv: Vec<f64> = gam.iter().map(|x| x.v).collect();
        let mut ed = vec![0.0; d * d * d * d];
        for idx in 0..d * d * d {
            for al in 0..d {
                ed[idx * d + al] = self.e(&gam[idx], al);
            }
        }
        let mut r = vec![0.0; d * d * d * d];
        for c in 0..d {
            for b in 0..d {
                for nu in 0..d {
                    for mu in 0..d {
                        if mu == nu {
                            continue;
                        }
                        let mut v = ed[i3(d, c, b, nu) * d + mu] - ed[i3(d, c, b, mu) * d + nu];
                        for s in 0..d {
                            v += gv[i3(d, s, b, nu)] * gv[i3(d, c, s, mu)] - gv[i3(d, s, b, mu)] * gv[i3(d, c, s, nu)];
                            v -= w[i3(d, s, mu, nu)] * gv[i3(d, c, b, s)];
                        }
                        r[i4(d, c, b, nu, mu)] = v;
                    }
                }
            }
        }
        r
    }

    /// Torsion of a frame connection, T^c_{a b} = G^c_{b a} - G^c_{a b} - W^c_{a b}
    /// (c-component of T(e_a, e_b)).
    pub fn torsion_general(&self, gam: &[Dual]) -> Vec<f64> {
        let d = self.d;
        let w = self.p.anholonomy();
        let mut t = vec![0.0; d * d * d];
        for c in 0..d {
            for a in 0..d {
                for b in 0..d {
                    t[i3(d, c, a, b)] = gam[i3(d, c, b, a)].v - gam[i3(d, c, a, b)].v - w[i3(d, c, a, b)];
                }
            }
        }
        t
    }

    /// Frame covariant derivative of the block metric,
    /// D_a G_{b c} = e_a G_bc - G^s_{b a} G_sc - G^s_{c a} G_bs, at [(a*d+b)*d+c].
    pub fn metricity(&self, gam: &[Dual]) -> Vec<f64> {
        let (n, m, d) = (self.n, self.m, self.d);
        let gm = self.frame_metric();
        let mut out = vec![0.0; d * d * d];
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    let mut v = if b < n && c < n {
                        self.e(&self.g[b * n + c], a)
                    } else if b >= n && c >= n {
                        self.e(&self.h[(b - n) * m + (c - n)], a)
                    } else {
                        0.0
                    };
                    for s in 0..d {
                        v -= gam[i3(d, s, b, a)].v * gm[s * d + c] + gam[i3(d, s, c, a)].v * gm[b * d + s];
                    }
                    out[i3(d, a, b, c)] = v;
                }
            }
        }
        out
    }
}

/// Ricci R_{b nu} = R^t_{b nu t}.
pub fn ricci(riemann: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d * d];
    for b in 0..d {
        for nu in 0..d {
            out[b * d + nu] = (0..d).map(|t| riemann[i4(d, t, b, nu, t)]).sum();
        }
    }
    out
}

/// sR = g^ij R_ij + h^ab R_ab.
pub fn scalar(ric: &[f64], ginv_frame: &[f64], d: usize) -> f64 {
    let mut s = 0.0;
    for a in 0..d {
        for b in 0..d {
            s += ginv_frame[a * d + b] * ric[a * d + b];
        }
    }
    s
}

impl<'a> LocalFrame<'a> {
    /// The six d-curvature blocks of a d-connection, assembled into the full
    /// array with antisymmetry in the last two slots. Mixed blocks use
    /// D_k C^i_ja = e_k C^i_ja + L^i_mk C^m_ja - L^m_jk C^i_ma - L^b_ak C^i_jb
    /// and torsion T^b_ak = d_a N_k^b - L^b_ak.
    pub fn d_curvature(&self, gam: &[Dual]) -> Vec<f64> {
        let (n, m, d) = (self.n, self.m, self.d);
        let p = self.p;
        let gv = |c: usize, b: usize, a: usize| gam[i3(d, c, b, a)].v;
        let ed = |c: usize, b: usize, a: usize, al: usize| self.e(&gam[i3(d, c, b, a)], al);
        let om = |i: usize, j: usize, a: usize| p.omega(i, j, a);
        let dn = |b: usize, k: usize, a: usize| self.dvn(b, k, a).v;
        let mut r = vec![0.0; d * d * d * d];
        let put = |r: &mut Vec<f64>, c: usize, b: usize, nu: usize, mu: usize, v: f64| {
            r[i4(d, c, b, nu, mu)] = v;
            r[i4(d, c, b, mu, nu)] = -v;
        };
        // hh-blocks R^i_hjk and R^a_bjk
        for j in 0..n {
            for k in (j + 1)..n {
                for i in 0..n {
                    for hh in 0..n {
                        let mut v = ed(i, hh, j, k) - ed(i, hh, k, j);
                        for s in 0..n {
                            v += gv(s, hh, j) * gv(i, s, k) - gv(s, hh, k) * gv(i, s, j);
                        }
                        for a in 0..m {
                            v -= gv(i, hh, n + a) * om(k, j, a);
                        }
                        put(&mut r, i, hh, j, k, v);
                    }
                }
                for a in 0..m {
                    for b in 0..m {
                        let mut v = ed(n + a, n + b, j, k) - ed(n + a, n + b, k, j);
                        for c in 0..m {
                            v += gv(n + c, n + b, j) * gv(n + a, n + c, k) - gv(n + c, n + b, k) * gv(n + a, n + c, j);
                            v -= gv(n + a, n + b, n + c) * om(k, j, c);
                        }
                        put(&mut r, n + a, n + b, j, k, v);
                    }
                }
            }
        }
        // mixed blocks R^i_jka and R^c_bka
        for k in 0..n {
            for a in 0..m {
                let va = n + a;
                for i in 0..n {
                    for j in 0..n {
                        let mut dc = ed(i, j, va, k);
                        for s in 0..n {
                            dc += gv(i, s, k) * gv(s, j, va) - gv(s, j, k) * gv(i, s, va);
                        }
                        let mut ct = 0.0;
                        for b in 0..m {
                            dc -= gv(n + b, va, k) * gv(i, j, n + b);
                            ct += gv(i, j, n + b) * (dn(a, k, b) - gv(n + b, va, k));
                        }
                        put(&mut r, i, j, k, va, ed(i, j, k, va) - dc + ct);
                    }
                }
                for c in 0..m {
                    for b in 0..m {
                        let (vc, vb) = (n + c, n + b);
                        let mut dc = ed(vc, vb, va, k);
                        let mut ct = 0.0;
                        for e in 0..m {
                            let ve = n + e;
                            dc += gv(vc, ve, k) * gv(ve, vb, va) - gv(ve, vb, k) * gv(vc, ve, va) - gv(ve, va, k) * gv(vc, vb, ve);
                            ct += gv(vc, vb, ve) * (dn(a, k, e) - gv(ve, va, k));
                        }
                        put(&mut r, vc, vb, k, va, ed(vc, vb, k, va) - dc + ct);
                    }
                }
            }
        }
        // vv-blocks R^i_jbc and R^a_bcd
        for b in 0..m {
            for c in (b + 1)..m {
                let (vb, vc) = (n + b, n + c);
                for i in 0..n {
                    for j in 0..n {
                        let mut v = ed(i, j, vb, vc) - ed(i, j, vc, vb);
                        for s in 0..n {
                            v += gv(s, j, vb) * gv(i, s, vc) - gv(s, j, vc) * gv(i, s, vb);
                        }
                        put(&mut r, i, j, vb, vc, v);
                    }
                }
                for a in 0..m {
                    for e in 0..m {
                        let (va, ve) = (n + a, n + e);
                        let mut v = ed(va, ve, vb, vc) - ed(va, ve, vc, vb);
                        for f in 0..m {
                            let vf = n + f;
                            v += gv(vf, ve, vb) * gv(va, vf, vc) - gv(vf, ve, vc) * gv(va, vf, vb);
                        }
                        put(&mut r, va, ve, vb, vc, v);
                    }
                }
            }
        }
        r
    }

    /// d-torsion blocks of a d-connection,
    /// completed by antisymmetry in the lower pair:
    /// T^i_jk = L^i_jk - L^i_kj, T^i_ja = C^i_ja, T^a_ji = Omega_ji^a,
    /// T^a_bi = d_b N_i^a - L^a_bi, T^a_bc = C^a_bc - C^a_cb.
    pub fn d_torsion(&self, gam: &[Dual]) -> Vec<f64> {
        let (n, m, d) = (self.n, self.m, self.d);
        let gv = |c: usize, b: usize, a: usize| gam[i3(d, c, b, a)].v;
        let mut t = vec![0.0; d * d * d];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    t[i3(d, i, j, k)] = gv(i, j, k) - gv(i, k, j);
                }
                for a in 0..m {
                    let c = gv(i, j, n + a);
                    t[i3(d, i, j, n + a)] = c;
                    t[i3(d, i, n + a, j)] = -c;
                }
            }
        }
        for a in 0..m {
            for j in 0..n {
                for i in 0..n {
                    t[i3(d, n + a, j, i)] = self.p.omega(j, i, a);
                }
            }
            for b in 0..m {
                for i in 0..n {
                    let v = self.dvn(b, i, a).v - gv(n + a, n + b, i);
                    t[i3(d, n + a, n + b, i)] = v;
                    t[i3(d, n + a, i, n + b)] = -v;
                }
                for c in 0..m {
                    t[i3(d, n + a, n + b, n + c)] = gv(n + a, n + b, n + c) - gv(n + a, n + c, n + b);
                }
            }
        }
        t
    }

    /// Distortion Z = Gamma_LC - Gamma_hat assembled block by block from the
    /// canonical coefficients, Omega and oL^c_aj = L^c_aj - d_a N_j^c.
    /// Returns (Z, oL) with oL stored [(c*m + a)*n + j].
    pub fn distortion(&self, can: &[Dual]) -> (Vec<f64>, Vec<f64>) {
        let (n, m, d) = (self.n, self.m, self.d);
        let p = self.p;
        let gv = |c: usize, b: usize, a: usize| can[i3(d, c, b, a)].v;
        let g = |i: usize, j: usize| self.g[i * n + j].v;
        let gi = |i: usize, j: usize| self.gi[i * n + j].v;
        let h = |a: usize, b: usize| self.h[a * m + b].v;
        let hi = |a: usize, b: usize| self.hi[a * m + b].v;
        let mut ol = vec![0.0; m * m * n];
        for c in 0..m {
            for a in 0..m {
                for j in 0..n {
                    ol[(c * m + a) * n + j] = gv(n + c, n + a, j) - self.dvn(a, j, c).v;
                }
            }
        }
        let olv = |c: usize, a: usize, j: usize| ol[(c * m + a) * n + j];
        // half Omega^c_jk h_cb g^ji, shared by two blocks: [(i*m + b)*n + k]
        let mut oh = vec![0.0; n * m * n];
        for i in 0..n {
            for b in 0..m {
                for k in 0..n {
                    let mut s = 0.0;
                    for j in 0..n {
                        for c in 0..m {
                            s += p.omega(j, k, c) * h(c, b) * gi(j, i);
                        }
                    }
                    oh[(i * m + b) * n + k] = 0.5 * s;
                }
            }
        }
        let mut z = vec![0.0; d * d * d];
        for a in 0..m {
            for j in 0..n {
                for k in 0..n {
                    let mut s = -0.5 * p.omega(j, k, a);
                    for i in 0..n {
                        for b in 0..m {
                            s -= gv(i, j, n + b) * g(i, k) * hi(a, b);
                        }
                    }
                    z[i3(d, n + a, j, k)] = s;
                }
            }
        }
        for i in 0..n {
            for b in 0..m {
                for k in 0..n {
                    z[i3(d, i, n + b, k)] = gv(i, k, n + b) + oh[(i * m + b) * n + k];
                    z[i3(d, i, k, n + b)] = oh[(i * m + b) * n + k];
                }
                for c in 0..m {
                    let mut s = 0.0;
                    for j in 0..n {
                        let mut br = 0.0;
                        for e in 0..m {
                            br += olv(e, b, j) * h(e, c) + olv(e, c, j) * h(e, b);
                        }
                        s += gi(i, j) * br;
                    }
                    z[i3(d, i, n + b, n + c)] = -0.5 * s;
                }
            }
        }
        for a in 0..m {
            for j in 0..n {
                for b in 0..m {
                    z[i3(d, n + a, j, n + b)] = olv(a, b, j);
                }
            }
        }
        (z, ol)
    }

    /// Z^i_bk and Z^a_jb evaluated with the projector forms
    /// (the Xi-contractions vanish identically), for comparison with
    /// `distortion`. Returns (Z^i_bk at [(i*m+b)*n+k], Z^a_jb at [(a*n+j)*m+b]).
    pub fn distortion_projector_form(&self, can: &[Dual]) -> (Vec<f64>, Vec<f64>) {
        let (n, m, d) = (self.n, self.m, self.d);
        let p = self.p;
        let gv = |c: usize, b: usize, a: usize| can[i3(d, c, b, a)].v;
        let g = |i: usize, j: usize| self.g[i * n + j].v;
        let gi = |i: usize, j: usize| self.gi[i * n + j].v;
        let h = |a: usize, b: usize| self.h[a * m + b].v;
        let hi = |a: usize, b: usize| self.hi[a * m + b].v;
        let xi = |i: usize, hh: usize, j: usize, k: usize| {
            0.5 * ((i == j && hh == k) as u8 as f64 - g(j, k) * gi(i, hh))
        };
        let mut zibk = vec![0.0; n * m * n];
        for i in 0..n {
            for b in 0..m {
                for k in 0..n {
                    let mut s = 0.0;
                    for j in 0..n {
                        for c in 0..m {
                            s += 0.5 * p.omega(j, k, c) * h(c, b) * gi(j, i);
                        }
                        for hh in 0..n {
                            s -= xi(i, hh, j, k) * gv(j, hh, n + b);
                        }
                    }
                    zibk[(i * m + b) * n + k] = s;
                }
            }
        }
        let mut zajb = vec![0.0; m * n * m];
        for a in 0..m {
            for j in 0..n {
                for b in 0..m {
                    let mut s = 0.0;
                    for c in 0..m {
                        for e in 0..m {
                            let xm = 0.5 * ((a == c && e == b) as u8 as f64 - h(c, b) * hi(a, e));
                            s -= xm * (gv(n + c, n + e, j) - self.dvn(e, j, c).v);
                        }
                    }
                    zajb[(a * n + j) * m + b] = s;
                }
            }
        }
        (zibk, zajb)
    }

    /// Coordinate Christoffel symbols of the assembled metric (values),
    /// [(mu*d + nu)*d + la].
    pub fn coordinate_christoffel(&self) -> Result<Vec<f64>, GeometryError> {
        let d = self.d;
        let big = self.p.assembled();
        let gv: Vec<Dual> = big.iter().map(|j| j.v).collect();
        let ginv = invert_dual(&gv, d).ok_or_else(|| GeometryError::Degenerate("assembled metric not invertible".into()))?;
        let mut chr = vec![0.0; d * d * d];
        for mu in 0..d {
            for nu in 0..d {
                for la in 0..d {
                    let mut acc = 0.0;
                    for s in 0..d {
                        acc += ginv[mu * d + s].v * 0.5 * (big[s * d + la].grad(nu) + big[s * d + nu].grad(la) - big[nu * d + la].grad(s));
                    }
                    chr[i3(d, mu, nu, la)] = acc;
                }
            }
        }
        Ok(chr)
    }
}
