use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use super::chart::ChartGrid;
use super::fd;
use super::jet::{Jet, MAXD};
use super::GeometryError;
use crate::exprlang::{bind, parse, Expr, SymbolTable};

/// Where a field is evaluated: an arbitrary chart point, or a grid node
/// (multi-index plus its coordinates).
#[derive(Debug, Clone, Copy)]
pub enum Site<'a> {
    Point(&'a [f64]),
    Node(&'a [usize], &'a [f64]),
}

impl<'a> Site<'a> {
    pub fn coords(&self) -> &'a [f64] {
        match self {
            Site::Point(p) => p,
            Site::Node(_, p) => p,
        }
    }
}

/// Closed-form field with its derivatives precomputed.
#[derive(Debug)]
pub struct SymField {
    pub expr: Expr,
    dim: usize,
    deps: Vec<usize>,
    grad: Vec<Expr>,
    hess: Vec<Expr>,
}

impl SymField {
    /// `expr` must already have its parameters bound.
    pub fn new(expr: Expr, dim: usize) -> Self {
        let deps: Vec<usize> = expr.coordinate_deps().into_iter().filter(|&k| k < dim).collect();
        let mut grad = vec![Expr::Num(0.0); dim];
        let mut hess = vec![Expr::Num(0.0); dim * dim];
        for &a in &deps {
            grad[a] = expr.diff(a);
        }
        for &a in &deps {
            for &b in &deps {
                if b < a {
                    continue;
                }
                let h = grad[a].diff(b);
                hess[a * dim + b] = h.clone();
                hess[b * dim + a] = h;
            }
        }
        SymField { expr, dim, deps, grad, hess }
    }

    pub fn deps(&self) -> &[usize] {
        &self.deps
    }

    pub fn value_at(&self, p: &[f64]) -> Result<f64, GeometryError> {
        Ok(self.expr.eval(p)?)
    }

    pub fn jet_at(&self, p: &[f64]) -> Result<Jet, GeometryError> {
        let d = self.dim;
        let v = self.expr.eval(p)?;
        let mut g = [0.0; MAXD];
        let mut h = [0.0; MAXD * MAXD];
        for &a in &self.deps {
            g[a] = self.grad[a].eval(p)?;
            for &b in &self.deps {
                if b >= a {
                    let x = self.hess[a * d + b].eval(p)?;
                    h[a * d + b] = x;
                    h[b * d + a] = x;
                }
            }
        }
        Ok(Jet::from_raw(v, &g, &h, d))
    }

    pub fn grad_expr(&self, a: usize) -> &Expr {
        &self.grad[a]
    }
}

/// Samples of a field and its derivatives on the nodes of a grid. Axes of
/// extent 1 are broadcast.
#[derive(Debug, Clone)]
pub struct JetArray {
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    /// Per axis; empty when identically zero.
    pub grad: Vec<Vec<f64>>,
    /// Row-major dim×dim; empty when identically zero.
    pub hess: Vec<Vec<f64>>,
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![0; shape.len()];
    let mut acc = 1;
    for k in (0..shape.len()).rev() {
        s[k] = acc;
        acc *= shape[k];
    }
    s
}

/// Offset of a full-grid multi-index inside an array with broadcast shape.
pub(crate) fn broadcast_offset(shape: &[usize], idx: &[usize]) -> usize {
    let mut off = 0;
    for k in 0..shape.len() {
        off = off * shape[k] + if shape[k] == 1 { 0 } else { idx[k] };
    }
    off
}

/// All multi-indices of a shape in row-major order.
pub fn multi_indices(shape: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = shape.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0; shape.len()];
    for _ in 0..total {
        out.push(idx.clone());
        for k in (0..shape.len()).rev() {
            idx[k] += 1;
            if idx[k] < shape[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    out
}

impl JetArray {
    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn jet(&self, idx: &[usize]) -> Jet {
        let d = self.dim();
        let off = broadcast_offset(&self.shape, idx);
        let mut g = [0.0; MAXD];
        let mut h = [0.0; MAXD * MAXD];
        for a in 0..d {
            if !self.grad[a].is_empty() {
                g[a] = self.grad[a][off];
            }
            for b in 0..d {
                let hh = &self.hess[a * d + b];
                if !hh.is_empty() {
                    h[a * d + b] = hh[off];
                }
            }
        }
        Jet::from_raw(self.value[off], &g, &h, d)
    }

    /// Exact samples of a closed-form field on the grid nodes.
    pub fn from_symbolic(f: &SymField, chart: &ChartGrid) -> Result<JetArray, GeometryError> {
        let d = chart.dim();
        let coords: Vec<Vec<f64>> = (0..d).map(|k| chart.grid_coords(k)).collect();
        let shape: Vec<usize> = (0..d).map(|k| if f.deps.contains(&k) { chart.axes[k].samples } else { 1 }).collect();
        let idxs = multi_indices(&shape);
        let total = idxs.len();
        let mut value = Vec::with_capacity(total);
        let mut grad: Vec<Vec<f64>> = (0..d).map(|a| if f.deps.contains(&a) { Vec::with_capacity(total) } else { Vec::new() }).collect();
        let mut hess: Vec<Vec<f64>> = (0..d * d)
            .map(|ab| if f.deps.contains(&(ab / d)) && f.deps.contains(&(ab % d)) { Vec::with_capacity(total) } else { Vec::new() })
            .collect();
        let mut p = vec![0.0; d];
        for idx in idxs {
            for k in 0..d {
                p[k] = coords[k][idx[k]];
            }
            let j = f.jet_at(&p)?;
            value.push(j.value());
            for a in 0..d {
                if f.deps.contains(&a) {
                    grad[a].push(j.grad(a));
                }
                for b in 0..d {
                    if f.deps.contains(&a) && f.deps.contains(&b) {
                        hess[a * d + b].push(j.hess(a, b));
                    }
                }
            }
        }
        Ok(JetArray { shape, value, grad, hess })
    }
}

/// Sampled field on the nodes of a chart grid, optionally carried as a
/// closed-form seed plus a sampled deviation. Derivatives of the seed are
/// exact, derivatives of the deviation use order-4 differences.
#[derive(Debug)]
pub struct GridField {
    pub chart: Arc<ChartGrid>,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub seed: Option<Arc<SymField>>,
    seed_jets: OnceLock<Option<JetArray>>,
    jets: OnceLock<Result<JetArray, GeometryError>>,
}

impl GridField {
    /// `shape[k]` is either the axis sample count or 1 (field constant along
    /// that axis).
    pub fn new(chart: Arc<ChartGrid>, shape: Vec<usize>, values: Vec<f64>, seed: Option<Arc<SymField>>) -> Result<Self, GeometryError> {
        if shape.len() != chart.dim() {
            return Err(GeometryError::Shape(format!("grid field has {} axes, chart has {}", shape.len(), chart.dim())));
        }
        for (k, &s) in shape.iter().enumerate() {
            if s != 1 && s != chart.axes[k].samples {
                return Err(GeometryError::Shape(format!("axis {} extent {} does not match {} samples", k + 1, s, chart.axes[k].samples)));
            }
        }
        if let Some(sd) = &seed {
            for &k in sd.deps() {
                if shape[k] == 1 {
                    return Err(GeometryError::Shape(format!("seed depends on axis {} but samples do not", k + 1)));
                }
            }
        }
        let total: usize = shape.iter().product();
        if values.len() != total {
            return Err(GeometryError::Shape(format!("{} samples for shape {:?}", values.len(), shape)));
        }
        Ok(GridField { chart, shape, values, seed, seed_jets: OnceLock::new(), jets: OnceLock::new() })
    }

    /// Sample a closed-form field. With `seeded`, the expression is kept as
    /// the seed so derivatives stay exact until the samples change.
    pub fn sample(f: &Arc<SymField>, chart: Arc<ChartGrid>, seeded: bool) -> Result<Self, GeometryError> {
        let arr = JetArray::from_symbolic(f, &chart)?;
        let seed = if seeded { Some(f.clone()) } else { None };
        let g = GridField::new(chart, arr.shape.clone(), arr.value.clone(), seed)?;
        if seeded {
            let _ = g.seed_jets.set(Some(arr));
        }
        Ok(g)
    }

    /// Same seed and grid, new samples (shape may grow).
    pub fn with_values(&self, shape: Vec<usize>, values: Vec<f64>) -> Result<Self, GeometryError> {
        let g = GridField::new(self.chart.clone(), shape, values, self.seed.clone())?;
        if let Some(sj) = self.seed_jets.get() {
            let _ = g.seed_jets.set(sj.clone());
        }
        Ok(g)
    }

    pub fn value_at_node(&self, idx: &[usize]) -> f64 {
        self.values[broadcast_offset(&self.shape, idx)]
    }

    pub fn deps(&self) -> Vec<usize> {
        (0..self.shape.len()).filter(|&k| self.shape[k] > 1).collect()
    }

    fn seed_jets(&self) -> Result<Option<&JetArray>, GeometryError> {
        if self.seed_jets.get().is_none() {
            let s = match &self.seed {
                Some(sd) => Some(JetArray::from_symbolic(sd, &self.chart)?),
                None => None,
            };
            let _ = self.seed_jets.set(s);
        }
        Ok(self.seed_jets.get().and_then(|s| s.as_ref()))
    }

    fn compute_jets(&self) -> Result<JetArray, GeometryError> {
        let d = self.shape.len();
        let idxs = multi_indices(&self.shape);
        let n = idxs.len();
        // seed samples broadcast onto this field's shape
        let seed = self.seed_jets()?.map(|sj| {
            let offs: Vec<usize> = idxs.iter().map(|idx| broadcast_offset(&sj.shape, idx)).collect();
            let pick = |src: &Vec<f64>| if src.is_empty() { Vec::new() } else { offs.iter().map(|&o| src[o]).collect() };
            JetArray {
                shape: self.shape.clone(),
                value: pick(&sj.value),
                grad: sj.grad.iter().map(pick).collect(),
                hess: sj.hess.iter().map(pick).collect(),
            }
        });
        // Relative deviation q = v/s - 1 when the seed is bounded away from
        // zero, additive deviation v - s otherwise. Differencing q keeps the
        // flow stable next to coordinate singularities of the seed.
        let relative = seed.as_ref().is_some_and(|sj| {
            let big = sj.value.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            big > 0.0 && sj.value.iter().all(|v| v.abs() > 1e-6 * big)
        });
        let dev: Vec<f64> = match &seed {
            Some(sj) if relative => self.values.iter().zip(&sj.value).map(|(v, s)| v / s - 1.0).collect(),
            Some(sj) => self.values.iter().zip(&sj.value).map(|(v, s)| v - s).collect(),
            None => self.values.clone(),
        };
        let mut grad = vec![Vec::new(); d];
        let mut hess = vec![Vec::new(); d * d];
        for a in 0..d {
            if self.shape[a] > 1 {
                grad[a] = fd::derivative(&dev, &self.shape, a, &self.chart);
            }
        }
        for a in 0..d {
            if self.shape[a] == 1 {
                continue;
            }
            for b in a..d {
                if self.shape[b] == 1 {
                    continue;
                }
                let h = fd::derivative(&grad[a], &self.shape, b, &self.chart);
                hess[b * d + a] = h.clone();
                hess[a * d + b] = h;
            }
        }
        let Some(sj) = seed else {
            return Ok(JetArray { shape: self.shape.clone(), value: self.values.clone(), grad, hess });
        };
        let at = |v: &Vec<f64>, k: usize| if v.is_empty() { 0.0 } else { v[k] };
        let nonempty = |x: &Vec<f64>, y: &Vec<f64>| !(x.is_empty() && y.is_empty());
        let mut g_out = vec![Vec::new(); d];
        let mut h_out = vec![Vec::new(); d * d];
        if relative {
            // v = s (1 + q)
            for a in 0..d {
                if nonempty(&sj.grad[a], &grad[a]) {
                    g_out[a] = (0..n).map(|k| at(&sj.grad[a], k) * (1.0 + dev[k]) + sj.value[k] * at(&grad[a], k)).collect();
                }
            }
            for a in 0..d {
                for b in 0..d {
                    let ab = a * d + b;
                    let any = nonempty(&sj.hess[ab], &hess[ab]) || (nonempty(&sj.grad[a], &sj.grad[b]) && nonempty(&grad[a], &grad[b]));
                    if any {
                        h_out[ab] = (0..n)
                            .map(|k| {
                                at(&sj.hess[ab], k) * (1.0 + dev[k])
                                    + at(&sj.grad[a], k) * at(&grad[b], k)
                                    + at(&sj.grad[b], k) * at(&grad[a], k)
                                    + sj.value[k] * at(&hess[ab], k)
                            })
                            .collect();
                    }
                }
            }
        } else {
            for a in 0..d {
                if nonempty(&sj.grad[a], &grad[a]) {
                    g_out[a] = (0..n).map(|k| at(&sj.grad[a], k) + at(&grad[a], k)).collect();
                }
            }
            for ab in 0..d * d {
                if nonempty(&sj.hess[ab], &hess[ab]) {
                    h_out[ab] = (0..n).map(|k| at(&sj.hess[ab], k) + at(&hess[ab], k)).collect();
                }
            }
        }
        Ok(JetArray { shape: self.shape.clone(), value: self.values.clone(), grad: g_out, hess: h_out })
    }

    pub fn jets(&self) -> Result<&JetArray, GeometryError> {
        self.jets.get_or_init(|| self.compute_jets()).as_ref().map_err(|e| e.clone())
    }
}

/// Scalar field: closed form or grid samples.
#[derive(Debug, Clone)]
pub enum Field {
    Symbolic(Arc<SymField>),
    Grid(Arc<GridField>),
}

impl Field {
    pub fn constant(v: f64, dim: usize) -> Field {
        Field::Symbolic(Arc::new(SymField::new(Expr::Num(v), dim)))
    }

    pub fn from_expr(e: Expr, dim: usize) -> Field {
        Field::Symbolic(Arc::new(SymField::new(e, dim)))
    }

    /// Parse and bind in one go.
    pub fn parse(src: &str, table: &SymbolTable, params: &BTreeMap<String, f64>) -> Result<Field, GeometryError> {
        let e = parse(src, table)?;
        let e = bind(&e, params)?;
        Ok(Field::from_expr(e, table.coords.len()))
    }

    pub fn is_symbolic(&self) -> bool {
        matches!(self, Field::Symbolic(_))
    }

    pub fn as_symbolic(&self) -> Option<&Arc<SymField>> {
        match self {
            Field::Symbolic(s) => Some(s),
            Field::Grid(_) => None,
        }
    }

    pub fn as_expr(&self) -> Option<&Expr> {
        self.as_symbolic().map(|s| &s.expr)
    }

    /// Axes the field may vary along.
    pub fn deps(&self) -> Vec<usize> {
        match self {
            Field::Symbolic(s) => s.deps().to_vec(),
            Field::Grid(g) => g.deps(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Field::Symbolic(s) => s.expr.is_zero(),
            Field::Grid(g) => g.values.iter().all(|v| *v == 0.0),
        }
    }

    pub fn jet(&self, site: Site<'_>) -> Result<Jet, GeometryError> {
        match (self, site) {
            (Field::Symbolic(s), site) => s.jet_at(site.coords()),
            (Field::Grid(g), Site::Node(idx, _)) => Ok(g.jets()?.jet(idx)),
            (Field::Grid(_), Site::Point(_)) => Err(GeometryError::Unsupported(
                "grid-backed fields can only be evaluated at grid nodes".into(),
            )),
        }
    }

    pub fn value(&self, site: Site<'_>) -> Result<f64, GeometryError> {
        match (self, site) {
            (Field::Symbolic(s), site) => s.value_at(site.coords()),
            (Field::Grid(g), Site::Node(idx, _)) => Ok(g.value_at_node(idx)),
            (Field::Grid(_), Site::Point(_)) => Err(GeometryError::Unsupported(
                "grid-backed fields can only be evaluated at grid nodes".into(),
            )),
        }
    }

    /// Grid version of this field (closed forms are sampled, optionally
    /// keeping the seed).
    pub fn to_grid(&self, chart: &Arc<ChartGrid>, seeded: bool) -> Result<Arc<GridField>, GeometryError> {
        match self {
            Field::Symbolic(s) => Ok(Arc::new(GridField::sample(s, chart.clone(), seeded)?)),
            Field::Grid(g) => Ok(g.clone()),
        }
    }

    pub fn grid_chart(&self) -> Option<&Arc<ChartGrid>> {
        match self {
            Field::Grid(g) => Some(&g.chart),
            _ => None,
        }
    }
}
