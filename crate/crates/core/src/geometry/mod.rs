//! Charts, fields (closed form or sampled), the d-metric and N-connection,
//! N-adapted frames, anholonomy, the volume element and quadrature.

pub mod chart;
pub mod fd;
pub mod field;
pub mod jet;
pub mod point;
pub mod quadrature;

use std::sync::Arc;

use thiserror::Error;

pub use chart::{Axis, AxisKind, ChartGrid, DEFAULT_THETA0};
pub use field::{multi_indices, Field, GridField, JetArray, Site, SymField};
pub use jet::{Dual, Jet, MAXD};
pub use point::PointInput;
pub use quadrature::{integrate, integrate_sites, integrate_sites_many, Integral, QuadratureOptions};

use crate::exprlang::{add, call, mul, sub, EvalError, Expr, ExprError, Func};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("chart: {0}")]
    Chart(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("degenerate metric block: {0}")]
    Degenerate(String),
    #[error("signature violation: {0}")]
    Signature(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Parse(#[from] ExprError),
}

fn tri(i: usize, j: usize) -> usize {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    b * (b + 1) / 2 + a
}

/// Block-diagonal metric in the N-adapted frame. Blocks are stored
/// triangularly so symmetry is exact.
#[derive(Debug, Clone)]
pub struct DMetric {
    pub chart: Arc<ChartGrid>,
    g: Vec<Field>,
    h: Vec<Field>,
}

impl DMetric {
    /// Build from full row-major blocks; only the upper triangles are read,
    /// the lower ones must agree when they are closed forms.
    pub fn new(chart: Arc<ChartGrid>, g: Vec<Field>, h: Vec<Field>) -> Result<Self, GeometryError> {
        let (n, m) = (chart.n, chart.m);
        if g.len() != n * n || h.len() != m * m {
            return Err(GeometryError::Shape(format!("expected {}x{} and {}x{} blocks", n, n, m, m)));
        }
        let pick = |full: &Vec<Field>, k: usize, name: &str| -> Result<Vec<Field>, GeometryError> {
            let mut out = Vec::with_capacity(k * (k + 1) / 2);
            for j in 0..k {
                for i in 0..=j {
                    if let (Some(a), Some(b)) = (full[i * k + j].as_expr(), full[j * k + i].as_expr()) {
                        if a != b {
                            return Err(GeometryError::Shape(format!(
                                "{} block not symmetric at ({}, {}): '{}' vs '{}'",
                                name,
                                i + 1,
                                j + 1,
                                a,
                                b
                            )));
                        }
                    }
                    out.push(full[i * k + j].clone());
                }
            }
            Ok(out)
        };
        let g = pick(&g, n, "g")?;
        let h = pick(&h, m, "h")?;
        Ok(DMetric { chart, g, h })
    }

    /// Build from upper triangles (column by column: (0,0), (0,1), (1,1), ...).
    pub fn from_triangles(chart: Arc<ChartGrid>, g: Vec<Field>, h: Vec<Field>) -> Result<Self, GeometryError> {
        let (n, m) = (chart.n, chart.m);
        if g.len() != n * (n + 1) / 2 || h.len() != m * (m + 1) / 2 {
            return Err(GeometryError::Shape("triangle lengths do not match the chart".into()));
        }
        Ok(DMetric { chart, g, h })
    }

    pub fn n(&self) -> usize {
        self.chart.n
    }

    pub fn m(&self) -> usize {
        self.chart.m
    }

    pub fn g(&self, i: usize, j: usize) -> &Field {
        &self.g[tri(i, j)]
    }

    /// h_ab with local v-indices 0..m.
    pub fn h(&self, a: usize, b: usize) -> &Field {
        &self.h[tri(a, b)]
    }

    pub fn g_triangle(&self) -> &[Field] {
        &self.g
    }

    pub fn h_triangle(&self) -> &[Field] {
        &self.h
    }

    pub fn fields(&self) -> impl Iterator<Item = &Field> {
        self.g.iter().chain(self.h.iter())
    }

    pub fn deps(&self) -> Vec<usize> {
        union_deps(self.fields())
    }

    pub fn is_symbolic(&self) -> bool {
        self.fields().all(|f| f.is_symbolic())
    }
}

/// Nonlinear connection coefficients N_i^a.
#[derive(Debug, Clone)]
pub struct NConnection {
    pub chart: Arc<ChartGrid>,
    coeffs: Vec<Field>,
}

impl NConnection {
    /// Row-major n×m.
    pub fn new(chart: Arc<ChartGrid>, coeffs: Vec<Field>) -> Result<Self, GeometryError> {
        if coeffs.len() != chart.n * chart.m {
            return Err(GeometryError::Shape(format!("expected {}x{} N-connection", chart.n, chart.m)));
        }
        Ok(NConnection { chart, coeffs })
    }

    pub fn zero(chart: Arc<ChartGrid>) -> Self {
        let d = chart.dim();
        let coeffs = vec![Field::constant(0.0, d); chart.n * chart.m];
        NConnection { chart, coeffs }
    }

    /// N_i^a with a a local v-index.
    pub fn get(&self, i: usize, a: usize) -> &Field {
        &self.coeffs[i * self.chart.m + a]
    }

    pub fn fields(&self) -> impl Iterator<Item = &Field> {
        self.coeffs.iter()
    }

    pub fn deps(&self) -> Vec<usize> {
        union_deps(self.fields())
    }

    pub fn is_symbolic(&self) -> bool {
        self.coeffs.iter().all(|f| f.is_symbolic())
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|f| f.is_zero())
    }
}

/// Full coordinate-basis metric, stored triangularly.
#[derive(Debug, Clone)]
pub struct OffDiagonalMetric {
    pub chart: Arc<ChartGrid>,
    comps: Vec<Field>,
}

impl OffDiagonalMetric {
    pub fn get(&self, a: usize, b: usize) -> &Field {
        &self.comps[tri(a, b)]
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }
}

/// W_ia^b = d_a N_i^b and Omega_ij^a.
#[derive(Debug, Clone)]
pub struct AnholonomyData {
    n: usize,
    m: usize,
    /// [i][a][b] row-major, a and b local v-indices.
    pub w: Vec<Field>,
    /// [i][j][a] row-major.
    pub omega: Vec<Field>,
}

impl AnholonomyData {
    pub fn w(&self, i: usize, a: usize, b: usize) -> &Field {
        &self.w[(i * self.m + a) * self.m + b]
    }

    pub fn omega(&self, i: usize, j: usize, a: usize) -> &Field {
        &self.omega[(i * self.n + j) * self.m + a]
    }
}

pub fn union_deps<'a>(fields: impl Iterator<Item = &'a Field>) -> Vec<usize> {
    let mut out: Vec<usize> = fields.flat_map(|f| f.deps()).collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Point data for the metric and connection at a site.
pub fn point_input(g: &DMetric, nc: &NConnection, site: Site<'_>) -> Result<PointInput, GeometryError> {
    let (n, m) = (g.n(), g.m());
    let mut gj = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            gj.push(g.g(i, j).jet(site)?);
        }
    }
    let mut hj = Vec::with_capacity(m * m);
    for a in 0..m {
        for b in 0..m {
            hj.push(g.h(a, b).jet(site)?);
        }
    }
    let mut nj = Vec::with_capacity(n * m);
    for i in 0..n {
        for a in 0..m {
            nj.push(nc.get(i, a).jet(site)?);
        }
    }
    Ok(PointInput { n, m, g: gj, h: hj, nc: nj })
}

/// Evaluate a pointwise rule on every node of the grid (restricted to the
/// listed axes) and wrap the result as an unseeded grid field.
pub fn tabulate(chart: &Arc<ChartGrid>, deps: &[usize], f: impl Fn(Site<'_>) -> Result<f64, GeometryError>) -> Result<Field, GeometryError> {
    let d = chart.dim();
    let shape: Vec<usize> = (0..d).map(|k| if deps.contains(&k) { chart.axes[k].samples } else { 1 }).collect();
    let coords: Vec<Vec<f64>> = (0..d).map(|k| chart.grid_coords(k)).collect();
    let mut values = Vec::new();
    let mut p = vec![0.0; d];
    for idx in multi_indices(&shape) {
        for k in 0..d {
            p[k] = coords[k][idx[k]];
        }
        values.push(f(Site::Node(&idx, &p))?);
    }
    Ok(Field::Grid(Arc::new(GridField::new(chart.clone(), shape, values, None)?)))
}

fn exprs<'a>(fields: impl Iterator<Item = &'a Field>) -> Option<Vec<Expr>> {
    fields.map(|f| f.as_expr().cloned()).collect()
}

fn same_chart(a: &ChartGrid, b: &ChartGrid) -> Result<(), GeometryError> {
    if a != b {
        return Err(GeometryError::Shape("fields live on different charts".into()));
    }
    Ok(())
}

/// Coordinate-basis metric of the off-diagonal ansatz.
pub fn assemble_offdiagonal(g: &DMetric, nc: &NConnection) -> Result<OffDiagonalMetric, GeometryError> {
    same_chart(&g.chart, &nc.chart)?;
    let (n, m) = (g.n(), g.m());
    let d = n + m;
    if let (Some(_), Some(_)) = (exprs(g.fields()), exprs(nc.fields())) {
        let ge = |i: usize, j: usize| g.g(i, j).as_expr().unwrap().clone();
        let he = |a: usize, b: usize| g.h(a, b).as_expr().unwrap().clone();
        let ne = |i: usize, a: usize| nc.get(i, a).as_expr().unwrap().clone();
        let nh = |j: usize, a: usize| (0..m).fold(Expr::Num(0.0), |acc, e| add(acc, mul(ne(j, e), he(a, e))));
        let mut comps = Vec::with_capacity(d * (d + 1) / 2);
        for b in 0..d {
            for a in 0..=b {
                let e = match (a < n, b < n) {
                    (true, true) => (0..m).fold(ge(a, b), |acc, c| add(acc, mul(ne(a, c), nh(b, c)))),
                    (true, false) => nh(a, b - n),
                    (false, false) => he(a - n, b - n),
                    (false, true) => unreachable!(),
                };
                comps.push(Field::from_expr(e, d));
            }
        }
        return Ok(OffDiagonalMetric { chart: g.chart.clone(), comps });
    }
    let deps = union_deps(g.fields().chain(nc.fields()));
    let mut comps = Vec::with_capacity(d * (d + 1) / 2);
    for b in 0..d {
        for a in 0..=b {
            comps.push(tabulate(&g.chart, &deps, |site| {
                let p = point_input(g, nc, site)?;
                Ok(p.assembled()[a * d + b].value())
            })?);
        }
    }
    Ok(OffDiagonalMetric { chart: g.chart.clone(), comps })
}

/// Recover the d-metric relative to a declared N-connection.
pub fn split_dmetric(big: &OffDiagonalMetric, nc: &NConnection) -> Result<DMetric, GeometryError> {
    same_chart(&big.chart, &nc.chart)?;
    let chart = big.chart.clone();
    let (n, m) = (chart.n, chart.m);
    let d = n + m;
    let symbolic = big.comps.iter().all(|f| f.is_symbolic()) && nc.is_symbolic();
    let (gt, ht) = if symbolic {
        let be = |a: usize, b: usize| big.get(a, b).as_expr().unwrap().clone();
        let ne = |i: usize, a: usize| nc.get(i, a).as_expr().unwrap().clone();
        let mut ht = Vec::new();
        for b in 0..m {
            for a in 0..=b {
                ht.push(Field::from_expr(be(n + a, n + b), d));
            }
        }
        let mut gt = Vec::new();
        for j in 0..n {
            for i in 0..=j {
                let mut e = be(i, j);
                for a in 0..m {
                    for b in 0..m {
                        e = sub(e, mul(mul(ne(i, a), ne(j, b)), be(n + a, n + b)));
                    }
                }
                gt.push(Field::from_expr(e, d));
            }
        }
        (gt, ht)
    } else {
        let deps = union_deps(big.comps.iter().chain(nc.fields()));
        let mut ht = Vec::new();
        for b in 0..m {
            for a in 0..=b {
                ht.push(tabulate(&chart, &deps, |s| big.get(n + a, n + b).value(s))?);
            }
        }
        let mut gt = Vec::new();
        for j in 0..n {
            for i in 0..=j {
                gt.push(tabulate(&chart, &deps, |s| {
                    let mut v = big.get(i, j).value(s)?;
                    for a in 0..m {
                        for b in 0..m {
                            v -= nc.get(i, a).value(s)? * nc.get(j, b).value(s)? * big.get(n + a, n + b).value(s)?;
                        }
                    }
                    Ok(v)
                })?);
            }
        }
        (gt, ht)
    };
    let dm = DMetric::from_triangles(chart.clone(), gt, ht)?;
    check_nondegenerate(&dm)?;
    Ok(dm)
}

fn det_f64(a: &[f64], n: usize) -> f64 {
    let jets: Vec<Jet> = a.iter().map(|&v| Jet::constant(v)).collect();
    jet::det_jet(&jets, n).value()
}

/// |det g| and |det h| above 1e-12 at every grid node of the chart.
pub fn check_nondegenerate(g: &DMetric) -> Result<(), GeometryError> {
    let chart = g.chart.clone();
    let (n, m) = (g.n(), g.m());
    let d = chart.dim();
    let deps = g.deps();
    let shape: Vec<usize> = (0..d).map(|k| if deps.contains(&k) { chart.axes[k].samples } else { 1 }).collect();
    let coords: Vec<Vec<f64>> = (0..d).map(|k| chart.grid_coords(k)).collect();
    let mut p = vec![0.0; d];
    for idx in multi_indices(&shape) {
        for k in 0..d {
            p[k] = coords[k][idx[k]];
        }
        let site = Site::Node(&idx, &p);
        let gv: Vec<f64> = (0..n * n).map(|k| g.g(k / n, k % n).value(site)).collect::<Result<_, _>>()?;
        let hv: Vec<f64> = (0..m * m).map(|k| g.h(k / m, k % m).value(site)).collect::<Result<_, _>>()?;
        let (dg, dh) = (det_f64(&gv, n), det_f64(&hv, m));
        if dg.abs() <= 1e-12 || dh.abs() <= 1e-12 {
            return Err(GeometryError::Degenerate(format!("det g = {:.3e}, det h = {:.3e} at {:?}", dg, dh, p)));
        }
    }
    Ok(())
}

/// e_alpha f: d_i f - N_i^a d_a f on h-indices, d_a f on v-indices
/// (alpha is 0-based over all n+m frame directions).
pub fn frame_apply(nc: &NConnection, f: &Field, alpha: usize) -> Result<Field, GeometryError> {
    let chart = &nc.chart;
    let (n, m) = (chart.n, chart.m);
    let d = n + m;
    if alpha >= d {
        return Err(GeometryError::Shape(format!("frame index {} out of range", alpha + 1)));
    }
    if let (Some(fs), true) = (f.as_symbolic(), nc.is_symbolic()) {
        let mut e = fs.grad_expr(alpha).clone();
        if alpha < n {
            for a in 0..m {
                let na = nc.get(alpha, a).as_expr().unwrap().clone();
                e = sub(e, mul(na, fs.grad_expr(n + a).clone()));
            }
        }
        return Ok(Field::from_expr(e, d));
    }
    let deps = union_deps(std::iter::once(f).chain(nc.fields()));
    tabulate(chart, &deps, |site| {
        let fj = f.jet(site)?;
        let mut v = fj.grad(alpha);
        if alpha < n {
            for a in 0..m {
                v -= nc.get(alpha, a).value(site)? * fj.grad(n + a);
            }
        }
        Ok(v)
    })
}

/// W_ia^b = d_a N_i^b and Omega_ij^a = d_j N_i^a - d_i N_j^a
/// + N_i^b d_b N_j^a - N_j^b d_b N_i^a.
pub fn anholonomy(nc: &NConnection) -> Result<AnholonomyData, GeometryError> {
    let chart = &nc.chart;
    let (n, m) = (chart.n, chart.m);
    let d = n + m;
    if nc.is_symbolic() {
        let sym = |i: usize, a: usize| nc.get(i, a).as_symbolic().unwrap().clone();
        let mut w = Vec::with_capacity(n * m * m);
        for i in 0..n {
            for a in 0..m {
                for b in 0..m {
                    w.push(Field::from_expr(sym(i, b).grad_expr(n + a).clone(), d));
                }
            }
        }
        let mut omega = Vec::with_capacity(n * n * m);
        for i in 0..n {
            for j in 0..n {
                for a in 0..m {
                    if i == j {
                        omega.push(Field::constant(0.0, d));
                        continue;
                    }
                    let (lo, hi, sign) = if i < j { (i, j, 1.0) } else { (j, i, -1.0) };
                    let mut e = sub(sym(lo, a).grad_expr(hi).clone(), sym(hi, a).grad_expr(lo).clone());
                    for b in 0..m {
                        let t1 = mul(sym(lo, b).expr.clone(), sym(hi, a).grad_expr(n + b).clone());
                        let t2 = mul(sym(hi, b).expr.clone(), sym(lo, a).grad_expr(n + b).clone());
                        e = add(e, sub(t1, t2));
                    }
                    // antisymmetry exact: the lower pair is the negated tree
                    let e = if sign < 0.0 { crate::exprlang::neg(e) } else { e };
                    omega.push(Field::from_expr(e, d));
                }
            }
        }
        return Ok(AnholonomyData { n, m, w, omega });
    }
    let deps = nc.deps();
    let zero_g = DMetric::from_triangles(
        chart.clone(),
        vec![Field::constant(1.0, d); n * (n + 1) / 2],
        vec![Field::constant(1.0, d); m * (m + 1) / 2],
    )?;
    let mut w = Vec::with_capacity(n * m * m);
    for i in 0..n {
        for a in 0..m {
            for b in 0..m {
                w.push(tabulate(chart, &deps, |s| Ok(nc.get(i, b).jet(s)?.grad(n + a)))?);
            }
        }
    }
    let mut omega = Vec::with_capacity(n * n * m);
    let mut upper: Vec<Option<Arc<GridField>>> = vec![None; n * n * m];
    for i in 0..n {
        for j in 0..n {
            for a in 0..m {
                let f = if i == j {
                    Field::constant(0.0, d)
                } else if i < j {
                    let f = tabulate(chart, &deps, |s| Ok(point_input(&zero_g, nc, s)?.omega(i, j, a)))?;
                    if let Field::Grid(gf) = &f {
                        upper[(i * n + j) * m + a] = Some(gf.clone());
                    }
                    f
                } else {
                    let src = upper[(j * n + i) * m + a].clone().unwrap();
                    let neg: Vec<f64> = src.values.iter().map(|v| -v).collect();
                    Field::Grid(Arc::new(src.with_values(src.shape.clone(), neg)?))
                };
                omega.push(f);
            }
        }
    }
    Ok(AnholonomyData { n, m, w, omega })
}

/// sqrt(det g) sqrt(det h). Fails with a signature error if either
/// determinant is negative at some grid node.
pub fn volume_element(g: &DMetric) -> Result<Field, GeometryError> {
    let chart = g.chart.clone();
    let (n, m) = (g.n(), g.m());
    let d = n + m;
    let deps = g.deps();
    let shape: Vec<usize> = (0..d).map(|k| if deps.contains(&k) { chart.axes[k].samples } else { 1 }).collect();
    let coords: Vec<Vec<f64>> = (0..d).map(|k| chart.grid_coords(k)).collect();
    let mut values = Vec::new();
    let mut p = vec![0.0; d];
    for idx in multi_indices(&shape) {
        for k in 0..d {
            p[k] = coords[k][idx[k]];
        }
        let site = Site::Node(&idx, &p);
        let gv: Vec<f64> = (0..n * n).map(|k| g.g(k / n, k % n).value(site)).collect::<Result<_, _>>()?;
        let hv: Vec<f64> = (0..m * m).map(|k| g.h(k / m, k % m).value(site)).collect::<Result<_, _>>()?;
        let (dg, dh) = (det_f64(&gv, n), det_f64(&hv, m));
        if dg < 0.0 || dh < 0.0 {
            return Err(GeometryError::Signature(format!("det g = {:.3e}, det h = {:.3e} at {:?}", dg, dh, p)));
        }
        values.push(dg.sqrt() * dh.sqrt());
    }
    if g.is_symbolic() {
        let det_expr = |k: usize, get: &dyn Fn(usize, usize) -> Expr| -> Expr {
            let jets: Vec<Expr> = (0..k * k).map(|x| get(x / k, x % k)).collect();
            det_sym(&jets, k)
        };
        let dg = det_expr(n, &|i, j| g.g(i, j).as_expr().unwrap().clone());
        let dh = det_expr(m, &|a, b| g.h(a, b).as_expr().unwrap().clone());
        let e = mul(call(Func::Sqrt, dg), call(Func::Sqrt, dh));
        return Ok(Field::from_expr(e, d));
    }
    Ok(Field::Grid(Arc::new(GridField::new(chart, shape, values, None)?)))
}

fn det_sym(a: &[Expr], n: usize) -> Expr {
    match n {
        1 => a[0].clone(),
        2 => sub(mul(a[0].clone(), a[3].clone()), mul(a[1].clone(), a[2].clone())),
        _ => {
            let mut total = Expr::Num(0.0);
            for c in 0..n {
                let mut minor = Vec::new();
                for r in 1..n {
                    for k in 0..n {
                        if k != c {
                            minor.push(a[r * n + k].clone());
                        }
                    }
                }
                let term = mul(a[c].clone(), det_sym(&minor, n - 1));
                total = if c % 2 == 0 { add(total, term) } else { sub(total, term) };
            }
            total
        }
    }
}
