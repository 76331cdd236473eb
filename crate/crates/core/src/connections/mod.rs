//! Connections, torsion, curvature and their invariants in the N-adapted
//! frame, evaluated on a set of sites (arbitrary points for closed-form
//! inputs, grid nodes for sampled ones).
//!
//! Index conventions: frame indices are 0-based in the API (h-indices 0..n,
//! v-indices n..n+m); JSON exports shift them to 1-based. Lower index order
//! follows `local`: gamma(c, b, a) is the c-component of D_{e_a} e_b, and
//! riemann(c, b, nu, mu) is the c-component of R(e_mu, e_nu) e_b. The
//! lowered Riemann tensor is R_{mu nu la ga} = G_{mu rho} R^rho_{nu la ga}.

pub mod local;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::geometry::jet::{Dual, Jet};
use crate::geometry::{multi_indices, point_input, ChartGrid, DMetric, Field, GeometryError, NConnection, PointInput, Site};
use local::{i3, i4, LocalFrame};

pub use local::{ricci, scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConnectionKind {
    #[default]
    Canonical,
    LeviCivita,
}

impl ConnectionKind {
    pub fn name(self) -> &'static str {
        match self {
            ConnectionKind::Canonical => "canonical",
            ConnectionKind::LeviCivita => "levi-civita",
        }
    }
}

/// Evaluation sites: coordinates, plus node indices when they are grid nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteSet {
    pub coords: Vec<Vec<f64>>,
    pub nodes: Option<Vec<Vec<usize>>>,
}

impl SiteSet {
    pub fn points(coords: Vec<Vec<f64>>) -> Self {
        SiteSet { coords, nodes: None }
    }

    /// Every node of the chart grid, row-major.
    pub fn grid(chart: &ChartGrid) -> Self {
        let d = chart.dim();
        let axes: Vec<Vec<f64>> = (0..d).map(|k| chart.grid_coords(k)).collect();
        let nodes = multi_indices(&chart.grid_shape());
        let coords = nodes.iter().map(|idx| (0..d).map(|k| axes[k][idx[k]]).collect()).collect();
        SiteSet { coords, nodes: Some(nodes) }
    }

    /// Selected grid nodes.
    pub fn nodes(chart: &ChartGrid, nodes: Vec<Vec<usize>>) -> Self {
        let d = chart.dim();
        let axes: Vec<Vec<f64>> = (0..d).map(|k| chart.grid_coords(k)).collect();
        let coords = nodes.iter().map(|idx| (0..d).map(|k| axes[k][idx[k]]).collect()).collect();
        SiteSet { coords, nodes: Some(nodes) }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn site(&self, k: usize) -> Site<'_> {
        match &self.nodes {
            Some(nodes) => Site::Node(&nodes[k], &self.coords[k]),
            None => Site::Point(&self.coords[k]),
        }
    }
}

fn inputs(g: &DMetric, nc: &NConnection, sites: &SiteSet) -> Result<Vec<PointInput>, GeometryError> {
    if g.chart.dim() != nc.chart.dim() || g.n() != nc.chart.n {
        return Err(GeometryError::Shape("metric and N-connection charts differ".into()));
    }
    (0..sites.len()).map(|k| point_input(g, nc, sites.site(k))).collect()
}

/// Everything the downstream modules need at one point.
#[derive(Debug, Clone)]
pub struct PointCurvature {
    pub n: usize,
    pub m: usize,
    pub kind: ConnectionKind,
    pub frame_metric: Vec<f64>,
    pub frame_inverse: Vec<f64>,
    pub gamma: Vec<f64>,
    pub riemann: Vec<f64>,
    pub ricci: Vec<f64>,
    pub scalar: f64,
    pub volume: f64,
}

impl PointCurvature {
    pub fn dim(&self) -> usize {
        self.n + self.m
    }

    /// R_{mu nu la ga} = G_{mu rho} R^rho_{nu la ga}.
    pub fn lowered_riemann(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; d * d * d * d];
        for mu in 0..d {
            for rho in 0..d {
                let gm = self.frame_metric[mu * d + rho];
                if gm == 0.0 {
                    continue;
                }
                for nu in 0..d {
                    for la in 0..d {
                        for ga in 0..d {
                            out[i4(d, mu, nu, la, ga)] += gm * self.riemann[i4(d, rho, nu, la, ga)];
                        }
                    }
                }
            }
        }
        out
    }

    fn raise_all(&self, low: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let gi = &self.frame_inverse;
        let mut cur = low.to_vec();
        for slot in 0..4 {
            let mut next = vec![0.0; d * d * d * d];
            for idx in 0..d * d * d * d {
                let mut parts = [idx / (d * d * d), (idx / (d * d)) % d, (idx / d) % d, idx % d];
                let free = parts[slot];
                let mut s = 0.0;
                for k in 0..d {
                    let w = gi[free * d + k];
                    if w == 0.0 {
                        continue;
                    }
                    parts[slot] = k;
                    s += w * cur[i4(d, parts[0], parts[1], parts[2], parts[3])];
                }
                next[idx] = s;
            }
            cur = next;
        }
        cur
    }

    fn contract4(&self, a: &[f64]) -> f64 {
        let up = self.raise_all(a);
        a.iter().zip(&up).map(|(x, y)| x * y).sum()
    }

    /// R_{mu nu} R^{mu nu}.
    pub fn ricci_sq(&self) -> f64 {
        let d = self.dim();
        let gi = &self.frame_inverse;
        let mut s = 0.0;
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    for e in 0..d {
                        s += self.ricci[a * d + b] * gi[a * d + c] * gi[b * d + e] * self.ricci[c * d + e];
                    }
                }
            }
        }
        s
    }

    /// R_{mu nu la ga} R^{mu nu la ga}.
    pub fn riemann_sq(&self) -> f64 {
        self.contract4(&self.lowered_riemann())
    }

    /// Weyl tensor (four dimensions), lowered.
    pub fn weyl(&self) -> Result<Vec<f64>, GeometryError> {
        let d = self.dim();
        if d != 4 {
            return Err(GeometryError::Unsupported(format!("Weyl tensor needs n+m = 4, got {d}")));
        }
        let r = self.lowered_riemann();
        let g = &self.frame_metric;
        let ric = &self.ricci;
        let mut c = vec![0.0; d * d * d * d];
        for mu in 0..d {
            for nu in 0..d {
                for la in 0..d {
                    for ga in 0..d {
                        let rg = ric[mu * d + la] * g[nu * d + ga] - ric[nu * d + la] * g[mu * d + ga] - ric[mu * d + ga] * g[nu * d + la]
                            + ric[nu * d + ga] * g[mu * d + la];
                        let gg = g[mu * d + la] * g[nu * d + ga] - g[nu * d + la] * g[mu * d + ga];
                        c[i4(d, mu, nu, la, ga)] = r[i4(d, mu, nu, la, ga)] + 0.5 * rg - gg * self.scalar / 6.0;
                    }
                }
            }
        }
        Ok(c)
    }

    /// C_{mu nu la ga} C^{mu nu la ga}.
    pub fn weyl_sq(&self) -> Result<f64, GeometryError> {
        Ok(self.contract4(&self.weyl()?))
    }

    /// R*R* = (1/4) eps^{mu nu al be} eps_{rho si ga de} R^{rho si}_{mu nu} R^{ga de}_{al be}
    /// with eps the Levi-Civita tensor of the frame metric (the two density
    /// weights cancel), i.e. the Euler density Rm^2 - 4 Ric^2 + R^2.
    pub fn euler_density(&self) -> Result<f64, GeometryError> {
        let d = self.dim();
        if d != 4 {
            return Err(GeometryError::Unsupported(format!("Gauss-Bonnet density needs n+m = 4, got {d}")));
        }
        // R^{rho si}_{mu nu}: raise the second index of R^rho_{si' . .}; the
        // 2-form slots (mu, nu) are the last pair.
        let gi = &self.frame_inverse;
        let mut rr = vec![0.0; 256];
        for rho in 0..4 {
            for si in 0..4 {
                for mu in 0..4 {
                    for nu in 0..4 {
                        let mut s = 0.0;
                        for k in 0..4 {
                            s += self.riemann[i4(4, rho, k, mu, nu)] * gi[k * 4 + si];
                        }
                        rr[i4(4, rho, si, mu, nu)] = s;
                    }
                }
            }
        }
        let perms = permutations4();
        let mut total = 0.0;
        for (p, sp) in &perms {
            for (q, sq) in &perms {
                total += (sp * sq) as f64 * rr[i4(4, q[0], q[1], p[0], p[1])] * rr[i4(4, q[2], q[3], p[2], p[3])];
            }
        }
        Ok(0.25 * total)
    }
}

fn permutations4() -> Vec<([usize; 4], i32)> {
    let mut out = Vec::with_capacity(24);
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for e in 0..4 {
                    let p = [a, b, c, e];
                    let mut seen = [false; 4];
                    if p.iter().any(|&x| std::mem::replace(&mut seen[x], true)) {
                        continue;
                    }
                    let mut inv = 0;
                    for i in 0..4 {
                        for j in (i + 1)..4 {
                            if p[i] > p[j] {
                                inv += 1;
                            }
                        }
                    }
                    out.push((p, if inv % 2 == 0 { 1 } else { -1 }));
                }
            }
        }
    }
    out
}

/// Connection coefficients, curvature and contractions at one point. The
/// canonical d-connection uses the six d-curvature blocks; the Levi-Civita
/// connection uses the general frame formula.
pub fn point_curvature(p: &PointInput, kind: ConnectionKind) -> Result<PointCurvature, GeometryError> {
    let lf = LocalFrame::new(p)?;
    let d = lf.d;
    let (gam, riemann) = match kind {
        ConnectionKind::Canonical => {
            let gam = lf.canonical();
            let r = lf.d_curvature(&gam);
            (gam, r)
        }
        ConnectionKind::LeviCivita => {
            let gam = lf.levi_civita()?;
            let r = lf.riemann_general(&gam);
            (gam, r)
        }
    };
    let frame_metric = lf.frame_metric();
    let frame_inverse = lf.frame_metric_inverse();
    let ric = ricci(&riemann, d);
    let sc = scalar(&ric, &frame_inverse, d);
    let volume = p.volume_jet()?.value();
    Ok(PointCurvature {
        n: p.n,
        m: p.m,
        kind,
        frame_metric,
        frame_inverse,
        gamma: gam.iter().map(|x| x.v).collect(),
        riemann,
        ricci: ric,
        scalar: sc,
        volume,
    })
}

/// Frame connection coefficients at every site. Used for both the canonical
/// d-connection (only the four d-blocks are nonzero) and the Levi-Civita
/// connection.
#[derive(Debug, Clone)]
pub struct FrameConnection {
    pub kind: ConnectionKind,
    pub n: usize,
    pub m: usize,
    pub metric: DMetric,
    pub nconn: NConnection,
    pub sites: SiteSet,
    pub gamma: Vec<Vec<f64>>,
}

pub type DConnection = FrameConnection;
pub type LinearConnection = FrameConnection;

impl FrameConnection {
    pub fn dim(&self) -> usize {
        self.n + self.m
    }

    /// c-component of D_{e_a} e_b at site s.
    pub fn get(&self, s: usize, c: usize, b: usize, a: usize) -> f64 {
        self.gamma[s][i3(self.dim(), c, b, a)]
    }

    /// L^i_jk.
    pub fn l_h(&self, s: usize, i: usize, j: usize, k: usize) -> f64 {
        self.get(s, i, j, k)
    }

    /// L^a_bk with a, b local v-indices.
    pub fn l_v(&self, s: usize, a: usize, b: usize, k: usize) -> f64 {
        self.get(s, self.n + a, self.n + b, k)
    }

    /// C^i_jc with c a local v-index.
    pub fn c_h(&self, s: usize, i: usize, j: usize, c: usize) -> f64 {
        self.get(s, i, j, self.n + c)
    }

    /// C^a_bc, local v-indices.
    pub fn c_v(&self, s: usize, a: usize, b: usize, c: usize) -> f64 {
        let n = self.n;
        self.get(s, n + a, n + b, n + c)
    }

    pub fn to_json(&self) -> Value {
        let d = self.dim();
        let name = |c: usize, b: usize, a: usize| -> &'static str {
            match (c < self.n, b < self.n, a < self.n) {
                (true, true, true) => "L^i_jk",
                (false, false, true) => "L^a_bk",
                (true, true, false) => "C^i_jc",
                (false, false, false) => "C^a_bc",
                _ => "mixed",
            }
        };
        json!({
            "connection": self.kind.name(),
            "n": self.n,
            "m": self.m,
            "sites": self.sites.coords,
            "coefficients": export3(d, &self.gamma, name),
        })
    }
}

fn export3(d: usize, per_site: &[Vec<f64>], name: impl Fn(usize, usize, usize) -> &'static str) -> Value {
    let mut rows = Vec::new();
    for c in 0..d {
        for b in 0..d {
            for a in 0..d {
                let vals: Vec<f64> = per_site.iter().map(|v| v[i3(d, c, b, a)]).collect();
                if vals.iter().all(|x| *x == 0.0) {
                    continue;
                }
                rows.push(json!({"block": name(c, b, a), "index": [c + 1, b + 1, a + 1], "values": vals}));
            }
        }
    }
    Value::Array(rows)
}

fn export4(d: usize, per_site: &[Vec<f64>]) -> Value {
    let mut rows = Vec::new();
    for idx in 0..d * d * d * d {
        let vals: Vec<f64> = per_site.iter().map(|v| v[idx]).collect();
        if vals.iter().all(|x| *x == 0.0) {
            continue;
        }
        let ix = [idx / (d * d * d) + 1, (idx / (d * d)) % d + 1, (idx / d) % d + 1, idx % d + 1];
        rows.push(json!({"index": ix, "values": vals}));
    }
    Value::Array(rows)
}

/// Canonical d-connection: metric compatible, with vanishing h(hh)- and
/// v(vv)-torsion.
pub fn canonical_dconnection(g: &DMetric, nc: &NConnection, sites: &SiteSet) -> Result<DConnection, GeometryError> {
    let pts = inputs(g, nc, sites)?;
    let gamma = pts
        .iter()
        .map(|p| Ok(LocalFrame::new(p)?.canonical().iter().map(|x| x.v).collect()))
        .collect::<Result<Vec<Vec<f64>>, GeometryError>>()?;
    Ok(FrameConnection { kind: ConnectionKind::Canonical, n: g.n(), m: g.m(), metric: g.clone(), nconn: nc.clone(), sites: sites.clone(), gamma })
}

/// Levi-Civita connection of the off-diagonal metric in the N-adapted frame.
pub fn levicivita_connection(g: &DMetric, nc: &NConnection, sites: &SiteSet) -> Result<LinearConnection, GeometryError> {
    let pts = inputs(g, nc, sites)?;
    let gamma = pts
        .iter()
        .map(|p| Ok(LocalFrame::new(p)?.levi_civita()?.iter().map(|x| x.v).collect()))
        .collect::<Result<Vec<Vec<f64>>, GeometryError>>()?;
    Ok(FrameConnection { kind: ConnectionKind::LeviCivita, n: g.n(), m: g.m(), metric: g.clone(), nconn: nc.clone(), sites: sites.clone(), gamma })
}

pub fn connection(kind: ConnectionKind, g: &DMetric, nc: &NConnection, sites: &SiteSet) -> Result<FrameConnection, GeometryError> {
    match kind {
        ConnectionKind::Canonical => canonical_dconnection(g, nc, sites),
        ConnectionKind::LeviCivita => levicivita_connection(g, nc, sites),
    }
}

/// Coordinate-basis Christoffel symbols of the assembled metric,
/// [(mu*d + nu)*d + la] per site.
pub fn coordinate_christoffel(g: &DMetric, nc: &NConnection, sites: &SiteSet) -> Result<Vec<Vec<f64>>, GeometryError> {
    inputs(g, nc, sites)?.iter().map(|p| LocalFrame::new(p)?.coordinate_christoffel()).collect()
}

/// Distortion Z with Gamma_LC = Gamma_hat + Z, plus the auxiliary
/// projectors and oL^c_aj.
#[derive(Debug, Clone)]
pub struct DistortionTensor {
    pub n: usize,
    pub m: usize,
    pub sites: SiteSet,
    /// Full frame array per site, same layout as `FrameConnection::gamma`.
    pub z: Vec<Vec<f64>>,
    /// oL^c_aj at [(c*m + a)*n + j].
    pub ol: Vec<Vec<f64>>,
    /// Xi^ih_jk = 1/2 (delta^i_j delta^h_k - g_jk g^ih) at [((i*n+h)*n+j)*n+k].
    pub xi: Vec<Vec<f64>>,
    /// +-Xi^ab_cd = 1/2 (delta^a_c delta^b_d +- h_cd h^ab).
    pub xi_plus: Vec<Vec<f64>>,
    pub xi_minus: Vec<Vec<f64>>,
    /// Z^i_bk and Z^a_jb in projector form, see `LocalFrame::distortion_projector_form`.
    pub z_ibk_projector: Vec<Vec<f64>>,
    pub z_ajb_projector: Vec<Vec<f64>>,
}

impl DistortionTensor {
    pub fn get(&self, s: usize, c: usize, b: usize, a: usize) -> f64 {
        self.z[s][i3(self.n + self.m, c, b, a)]
    }

    pub fn to_json(&self) -> Value {
        let d = self.n + self.m;
        json!({
            "n": self.n,
            "m": self.m,
            "sites": self.sites.coords,
            "z": export3(d, &self.z, |_, _, _| "Z"),
            "oL": self.ol,
        })
    }
}

pub fn distortion(g: &DMetric, nc: &NConnection, sites: &SiteSet) -> Result<DistortionTensor, GeometryError> {
    let pts = inputs(g, nc, sites)?;
    let (n, m) = (g.n(), g.m());
    let mut out = DistortionTensor {
        n,
        m,
        sites: sites.clone(),
        z: vec![],
        ol: vec![],
        xi: vec![],
        xi_plus: vec![],
        xi_minus: vec![],
        z_ibk_projector: vec![],
        z_ajb_projector: vec![],
    };
    for p in &pts {
        let lf = LocalFrame::new(p)?;
        let can = lf.canonical();
        let (z, ol) = lf.distortion(&can);
        let (zp1, zp2) = lf.distortion_projector_form(&can);
        let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        let mut xi = vec![0.0; n * n * n * n];
        for i in 0..n {
            for h in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        xi[((i * n + h) * n + j) * n + k] = 0.5 * (delta(i, j) * delta(h, k) - lf.g[j * n + k].v * lf.gi[i * n + h].v);
                    }
                }
            }
        }
        let mut xp = vec![0.0; m * m * m * m];
        let mut xm = vec![0.0; m * m * m * m];
        for a in 0..m {
            for b in 0..m {
                for c in 0..m {
                    for e in 0..m {
                        let k = ((a * m + b) * m + c) * m + e;
                        let t = lf.h[c * m + e].v * lf.hi[a * m + b].v;
                        xp[k] = 0.5 * (delta(a, c) * delta(b, e) + t);
                        xm[k] = 0.5 * (delta(a, c) * delta(b, e) - t);
                    }
                }
            }
        }
        out.z.push(z);
        out.ol.push(ol);
        out.xi.push(xi);
        out.xi_plus.push(xp);
        out.xi_minus.push(xm);
        out.z_ibk_projector.push(zp1);
        out.z_ajb_projector.push(zp2);
    }
    Ok(out)
}

/// Torsion at every site. For the canonical d-connection these are the five
/// d-torsion blocks; for the Levi-Civita connection the frame torsion
/// T(e_a, e_b) (identically zero up to rounding).
#[derive(Debug, Clone)]
pub struct TorsionBundle {
    pub kind: ConnectionKind,
    pub n: usize,
    pub m: usize,
    pub sites: SiteSet,
    /// [(c*d + a)*d + b] per site.
    pub t: Vec<Vec<f64>>,
}

impl TorsionBundle {
    pub fn get(&self, s: usize, c: usize, a: usize, b: usize) -> f64 {
        self.t[s][i3(self.n + self.m, c, a, b)]
    }

    pub fn max_abs(&self) -> f64 {
        self.t.iter().flatten().fold(0.0, |a, x| a.max(x.abs()))
    }

    pub fn to_json(&self) -> Value {
        json!({
            "connection": self.kind.name(),
            "sites": self.sites.coords,
            "torsion": export3(self.n + self.m, &self.t, |_, _, _| "T"),
        })
    }
}

pub fn torsion(conn: &FrameConnection) -> Result<TorsionBundle, GeometryError> {
    let pts = inputs(&conn.metric, &conn.nconn, &conn.sites)?;
    let t = pts
        .iter()
        .map(|p| {
            let lf = LocalFrame::new(p)?;
            Ok(match conn.kind {
                ConnectionKind::Canonical => lf.d_torsion(&lf.canonical()),
                ConnectionKind::LeviCivita => lf.torsion_general(&lf.levi_civita()?),
            })
        })
        .collect::<Result<Vec<_>, GeometryError>>()?;
    Ok(TorsionBundle { kind: conn.kind, n: conn.n, m: conn.m, sites: conn.sites.clone(), t })
}

/// Frame covariant derivative of the block metric, D_a G_bc at
/// [(a*d + b)*d + c] per site.
pub fn metricity(conn: &FrameConnection) -> Result<Vec<Vec<f64>>, GeometryError> {
    let pts = inputs(&conn.metric, &conn.nconn, &conn.sites)?;
    pts.iter()
        .map(|p| {
            let lf = LocalFrame::new(p)?;
            Ok(match conn.kind {
                ConnectionKind::Canonical => lf.metricity(&lf.canonical()),
                ConnectionKind::LeviCivita => lf.metricity(&lf.levi_civita()?),
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct CurvatureBundle {
    pub kind: ConnectionKind,
    pub n: usize,
    pub m: usize,
    pub sites: SiteSet,
    pub points: Vec<PointCurvature>,
}

impl CurvatureBundle {
    fn d(&self) -> usize {
        self.n + self.m
    }

    /// R^c_{b nu mu}, frame indices.
    pub fn riemann(&self, s: usize, c: usize, b: usize, nu: usize, mu: usize) -> f64 {
        self.points[s].riemann[i4(self.d(), c, b, nu, mu)]
    }

    /// R^i_hjk.
    pub fn r_hhhh(&self, s: usize, i: usize, h: usize, j: usize, k: usize) -> f64 {
        self.riemann(s, i, h, j, k)
    }

    /// R^a_bjk (a, b local v-indices).
    pub fn r_vvhh(&self, s: usize, a: usize, b: usize, j: usize, k: usize) -> f64 {
        self.riemann(s, self.n + a, self.n + b, j, k)
    }

    /// R^i_jka.
    pub fn r_hhhv(&self, s: usize, i: usize, j: usize, k: usize, a: usize) -> f64 {
        self.riemann(s, i, j, k, self.n + a)
    }

    /// R^c_bka.
    pub fn r_vvhv(&self, s: usize, c: usize, b: usize, k: usize, a: usize) -> f64 {
        let n = self.n;
        self.riemann(s, n + c, n + b, k, n + a)
    }

    /// R^i_jbc.
    pub fn r_hhvv(&self, s: usize, i: usize, j: usize, b: usize, c: usize) -> f64 {
        let n = self.n;
        self.riemann(s, i, j, n + b, n + c)
    }

    /// R^a_bcd.
    pub fn r_vvvv(&self, s: usize, a: usize, b: usize, c: usize, e: usize) -> f64 {
        let n = self.n;
        self.riemann(s, n + a, n + b, n + c, n + e)
    }

    /// R_{b nu} with R_ij = R^k_ijk, R_ia = -R^k_ika, R_ai = R^b_aib, R_ab = R^c_abc.
    pub fn ricci(&self, s: usize, b: usize, nu: usize) -> f64 {
        self.points[s].ricci[b * self.d() + nu]
    }

    pub fn scalar(&self, s: usize) -> f64 {
        self.points[s].scalar
    }

    pub fn scalars(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.scalar).collect()
    }

    pub fn to_json(&self) -> Value {
        let d = self.d();
        let r: Vec<Vec<f64>> = self.points.iter().map(|p| p.riemann.clone()).collect();
        let ric: Vec<Vec<f64>> = self.points.iter().map(|p| p.ricci.clone()).collect();
        json!({
            "connection": self.kind.name(),
            "sites": self.sites.coords,
            "riemann": export4(d, &r),
            "ricci": ric,
            "scalar": self.scalars(),
        })
    }
}

pub fn curvature(conn: &FrameConnection) -> Result<CurvatureBundle, GeometryError> {
    curvature_of(conn.kind, &conn.metric, &conn.nconn, &conn.sites)
}

pub fn curvature_of(kind: ConnectionKind, g: &DMetric, nc: &NConnection, sites: &SiteSet) -> Result<CurvatureBundle, GeometryError> {
    let points = inputs(g, nc, sites)?.iter().map(|p| point_curvature(p, kind)).collect::<Result<Vec<_>, _>>()?;
    Ok(CurvatureBundle { kind, n: g.n(), m: g.m(), sites: sites.clone(), points })
}

/// General frame-formula Riemann tensor for either connection; used to
/// cross-check the d-curvature blocks.
pub fn riemann_general(kind: ConnectionKind, g: &DMetric, nc: &NConnection, sites: &SiteSet) -> Result<Vec<Vec<f64>>, GeometryError> {
    inputs(g, nc, sites)?
        .iter()
        .map(|p| {
            let lf = LocalFrame::new(p)?;
            let gam = match kind {
                ConnectionKind::Canonical => lf.canonical(),
                ConnectionKind::LeviCivita => lf.levi_civita()?,
            };
            Ok(lf.riemann_general(&gam))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct WeylField {
    pub sites: SiteSet,
    /// Lowered C_{mu nu la ga} per site.
    pub values: Vec<Vec<f64>>,
    /// C_{mu nu la ga} C^{mu nu la ga} per site.
    pub squared: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GaussBonnetDensity {
    pub sites: SiteSet,
    pub values: Vec<f64>,
}

pub fn weyl_and_gauss_bonnet(k: &CurvatureBundle) -> Result<(WeylField, GaussBonnetDensity), GeometryError> {
    let mut values = Vec::with_capacity(k.points.len());
    let mut squared = Vec::with_capacity(k.points.len());
    let mut gb = Vec::with_capacity(k.points.len());
    for p in &k.points {
        values.push(p.weyl()?);
        squared.push(p.weyl_sq()?);
        gb.push(p.euler_density()?);
    }
    Ok((WeylField { sites: k.sites.clone(), values, squared }, GaussBonnetDensity { sites: k.sites.clone(), values: gb }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConformalMode {
    /// Scalar curvature of the rescaled metric e^{2 phi} g, computed directly.
    #[default]
    Recompute,
    /// e^{-2 phi} [sR + 3 g^{mu nu}(D_mu D_nu + D_nu D_mu + e_mu e_nu + e_nu e_mu) phi].
    Literal,
}

/// Point data of the rescaled d-metric e^{2 phi} g with N unchanged.
pub fn rescaled(p: &PointInput, phi: &Jet) -> PointInput {
    let w = (*phi).scale(2.0).exp();
    PointInput {
        n: p.n,
        m: p.m,
        g: p.g.iter().map(|x| *x * w).collect(),
        h: p.h.iter().map(|x| *x * w).collect(),
        nc: p.nc.clone(),
    }
}

/// Scalar curvature of the conformally rescaled d-metric e^{2 phi} g (N kept)
/// at every site.
pub fn conformal_scalar(
    g: &DMetric,
    nc: &NConnection,
    phi: &Field,
    sites: &SiteSet,
    kind: ConnectionKind,
    mode: ConformalMode,
) -> Result<Vec<f64>, GeometryError> {
    let pts = inputs(g, nc, sites)?;
    let mut out = Vec::with_capacity(pts.len());
    for (s, p) in pts.iter().enumerate() {
        out.push(conformal_scalar_at(p, &phi.jet(sites.site(s))?, kind, mode)?);
    }
    Ok(out)
}

/// Scalar curvature of e^{2 phi} g at one point.
pub fn conformal_scalar_at(p: &PointInput, pj: &Jet, kind: ConnectionKind, mode: ConformalMode) -> Result<f64, GeometryError> {
    match mode {
        ConformalMode::Recompute => Ok(point_curvature(&rescaled(p, pj), kind)?.scalar),
        ConformalMode::Literal => {
            let pc = point_curvature(p, kind)?;
            let lf = LocalFrame::new(p)?;
            let gam = match kind {
                ConnectionKind::Canonical => lf.canonical(),
                ConnectionKind::LeviCivita => lf.levi_civita()?,
            };
            let d = lf.d;
            let hess = frame_hessian(p, pj, &gam);
            let mut acc = 0.0;
            for mu in 0..d {
                for nu in 0..d {
                    let w = pc.frame_inverse[mu * d + nu];
                    if w == 0.0 {
                        continue;
                    }
                    let ee = p.frame_dual(&p.frame_jet(pj, nu), mu);
                    acc += w * 6.0 * (hess[mu * d + nu] + ee);
                }
            }
            Ok((-2.0 * pj.value()).exp() * (pc.scalar + acc))
        }
    }
}

/// Frame derivatives e_alpha f at a point.
pub fn frame_gradient(p: &PointInput, fj: &Jet) -> Vec<f64> {
    (0..p.dim()).map(|al| p.frame_jet(fj, al).v).collect()
}

/// Covariant Hessian (D_mu D_nu f) = e_mu e_nu f - Gamma^la_{nu mu} e_la f,
/// row-major [mu * d + nu], for frame connection coefficients `gam`.
pub fn frame_hessian(p: &PointInput, fj: &Jet, gam: &[Dual]) -> Vec<f64> {
    let d = p.dim();
    let e1: Vec<Dual> = (0..d).map(|al| p.frame_jet(fj, al)).collect();
    let mut out = vec![0.0; d * d];
    for mu in 0..d {
        for nu in 0..d {
            let mut v = p.frame_dual(&e1[nu], mu);
            for la in 0..d {
                v -= gam[i3(d, la, nu, mu)].v * e1[la].v;
            }
            out[mu * d + nu] = v;
        }
    }
    out
}

/// Frame connection coefficients of the chosen connection at a point.
pub fn frame_gamma(p: &PointInput, kind: ConnectionKind) -> Result<Vec<Dual>, GeometryError> {
    let lf = LocalFrame::new(p)?;
    match kind {
        ConnectionKind::Canonical => Ok(lf.canonical()),
        ConnectionKind::LeviCivita => lf.levi_civita(),
    }
}
