//! Normalized Ricci flow of the d-metric blocks on grid samples,
//! d g/d chi = -2 Ric + kappa r g, with the N-connection held fixed.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::connections::{point_curvature, ConnectionKind, PointCurvature};
use crate::geometry::field::GridField;
use crate::geometry::point::cholesky_ok;
use crate::geometry::{integrate_sites, multi_indices, point_input, ChartGrid, DMetric, Field, GeometryError, NConnection, QuadratureOptions, Site};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("invalid flow configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("positive definiteness lost at node {node:?} (chi = {chi})")]
    Positivity { node: Vec<usize>, chi: f64 },
    #[error("non-finite value in the flow at node {node:?} (chi = {chi})")]
    NonFinite { node: Vec<usize>, chi: f64 },
    #[error("step {step}: {source}")]
    Step { step: usize, source: Box<FlowError> },
    #[error("observer: {0}")]
    Observer(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    Euler,
    #[default]
    Rk4,
}

/// Coefficient in front of r g.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum Normalization {
    /// 2/(n+m): volume preserving.
    #[default]
    Dimensional,
    /// Fixed 2/5.
    Literal,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub connection: ConnectionKind,
    pub normalization: Normalization,
    pub dchi: f64,
    pub steps: usize,
    pub integrator: Integrator,
    /// Smallest Cholesky pivot accepted for g and h.
    pub positivity_tol: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            connection: ConnectionKind::Canonical,
            normalization: Normalization::Dimensional,
            dchi: 1e-3,
            steps: 10,
            integrator: Integrator::Rk4,
            positivity_tol: 1e-12,
        }
    }
}

impl FlowConfig {
    pub fn kappa(&self, dim: usize) -> f64 {
        match self.normalization {
            Normalization::Dimensional => 2.0 / dim as f64,
            Normalization::Literal => 0.4,
            Normalization::Fixed(k) => k,
        }
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        if !(self.dchi > 0.0 && self.dchi.is_finite()) {
            return Err(FlowError::Config(format!("dchi must be positive, got {}", self.dchi)));
        }
        if let Normalization::Fixed(k) = self.normalization {
            if !(k >= 0.0 && k.is_finite()) {
                return Err(FlowError::Config(format!("kappa must be nonnegative, got {k}")));
            }
        }
        if !(self.positivity_tol >= 0.0) {
            return Err(FlowError::Config("positivity tolerance must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowDiagnostics {
    pub volume: f64,
    /// Volume average of sR (equals r).
    pub mean_scalar: f64,
    pub min_scalar: f64,
    pub max_scalar: f64,
    /// max |Ric - (sR/(n+m)) G| over nodes and frame components.
    pub einstein_residual: f64,
    /// max |R_ia|, |R_ai|: mixed Ricci blocks that the d-metric cannot absorb.
    pub mixed_ricci: f64,
}

/// Grid state of the flow. Metric components are stored on the active
/// axes only (those any input depends on); the remaining axes broadcast.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub chi: f64,
    pub g: DMetric,
    pub nconn: NConnection,
    pub r: f64,
    pub diagnostics: FlowDiagnostics,
    /// Active-axis shape of every sample array.
    pub shape: Vec<usize>,
}

/// Rate of the g and h triangles (upper triangle, row-major i <= j) at every
/// active node.
#[derive(Debug, Clone)]
pub struct FlowRate {
    pub g: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
    pub r: f64,
    pub kappa: f64,
    pub mixed_ricci: f64,
}

fn tri_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for j in 0..n {
        for i in 0..=j {
            out.push((i, j));
        }
    }
    out
}

fn active_shape(chart: &ChartGrid, deps: &[usize]) -> Vec<usize> {
    (0..chart.dim()).map(|k| if deps.contains(&k) { chart.axes[k].samples } else { 1 }).collect()
}

fn node_coords(chart: &ChartGrid, idx: &[usize]) -> Vec<f64> {
    idx.iter().enumerate().map(|(k, &i)| chart.grid_coords(k)[i]).collect()
}

fn on_shape(f: &Field, chart: &Arc<ChartGrid>, shape: &[usize], seeded: bool) -> Result<Field, GeometryError> {
    let gf = f.to_grid(chart, seeded)?;
    if gf.shape == shape {
        return Ok(Field::Grid(gf));
    }
    let values: Vec<f64> = multi_indices(shape).iter().map(|idx| gf.value_at_node(idx)).collect();
    Ok(Field::Grid(Arc::new(gf.with_values(shape.to_vec(), values)?)))
}

struct NodeEval {
    nodes: Vec<Vec<usize>>,
    curv: Vec<PointCurvature>,
}

fn evaluate(g: &DMetric, nc: &NConnection, shape: &[usize], kind: ConnectionKind) -> Result<NodeEval, GeometryError> {
    let chart = &g.chart;
    let coords: Vec<Vec<f64>> = (0..chart.dim()).map(|k| chart.grid_coords(k)).collect();
    let nodes = multi_indices(shape);
    let mut curv = Vec::with_capacity(nodes.len());
    for idx in &nodes {
        let p: Vec<f64> = idx.iter().enumerate().map(|(k, &i)| coords[k][i]).collect();
        let pi = point_input(g, nc, Site::Node(idx, &p))?;
        curv.push(point_curvature(&pi, kind)?);
    }
    Ok(NodeEval { nodes, curv })
}

/// Grid-node quadrature of a per-node quantity over the active shape.
fn node_integral(chart: &ChartGrid, shape: &[usize], nodes: &[Vec<usize>], vals: &[f64]) -> Result<f64, GeometryError> {
    let deps: Vec<usize> = (0..shape.len()).filter(|&k| shape[k] > 1).collect();
    let strides: Vec<usize> = {
        let mut s = vec![0; shape.len()];
        let mut acc = 1;
        for k in (0..shape.len()).rev() {
            s[k] = acc;
            acc *= shape[k];
        }
        s
    };
    debug_assert_eq!(nodes.len(), vals.len());
    let r = integrate_sites(chart, &deps, true, &QuadratureOptions::default(), &|site| {
        let idx = match site {
            Site::Node(idx, _) => idx,
            Site::Point(_) => unreachable!(),
        };
        let off: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
        Ok(vals[off])
    })?;
    Ok(r.value)
}

fn diagnostics(chart: &ChartGrid, shape: &[usize], ev: &NodeEval) -> Result<(f64, FlowDiagnostics), GeometryError> {
    let vol_vals: Vec<f64> = ev.curv.iter().map(|c| c.volume).collect();
    let sr_vals: Vec<f64> = ev.curv.iter().map(|c| c.volume * c.scalar).collect();
    let volume = node_integral(chart, shape, &ev.nodes, &vol_vals)?;
    let total = node_integral(chart, shape, &ev.nodes, &sr_vals)?;
    let r = total / volume;
    let mut min_scalar = f64::INFINITY;
    let mut max_scalar = f64::NEG_INFINITY;
    let mut einstein: f64 = 0.0;
    let mut mixed: f64 = 0.0;
    for c in &ev.curv {
        let d = c.dim();
        min_scalar = min_scalar.min(c.scalar);
        max_scalar = max_scalar.max(c.scalar);
        for a in 0..d {
            for b in 0..d {
                let v = c.ricci[a * d + b] - c.scalar / d as f64 * c.frame_metric[a * d + b];
                einstein = einstein.max(v.abs());
                if (a < c.n) != (b < c.n) {
                    mixed = mixed.max(c.ricci[a * d + b].abs());
                }
            }
        }
    }
    Ok((
        r,
        FlowDiagnostics { volume, mean_scalar: r, min_scalar, max_scalar, einstein_residual: einstein, mixed_ricci: mixed },
    ))
}

impl FlowState {
    /// Sample the metric (keeping closed forms as seeds) and the
    /// N-connection on the grid and compute the diagnostics.
    pub fn new(g: &DMetric, nc: &NConnection, cfg: &FlowConfig) -> Result<Self, FlowError> {
        cfg.validate()?;
        let chart = g.chart.clone();
        let mut deps = g.deps();
        deps.extend(nc.deps());
        deps.sort_unstable();
        deps.dedup();
        let shape = active_shape(&chart, &deps);
        let conv = |f: &Field| on_shape(f, &chart, &shape, true);
        let g_tri = g.g_triangle().iter().map(conv).collect::<Result<Vec<_>, _>>()?;
        let h_tri = g.h_triangle().iter().map(conv).collect::<Result<Vec<_>, _>>()?;
        let nc_f = nc.fields().map(|f| on_shape(f, &chart, &shape, true)).collect::<Result<Vec<_>, _>>()?;
        let g = DMetric::from_triangles(chart.clone(), g_tri, h_tri)?;
        let nconn = NConnection::new(chart.clone(), nc_f)?;
        Self::assemble(0.0, g, nconn, shape, cfg)
    }

    fn assemble(chi: f64, g: DMetric, nconn: NConnection, shape: Vec<usize>, cfg: &FlowConfig) -> Result<Self, FlowError> {
        check_positive(&g, &shape, cfg.positivity_tol, chi)?;
        let ev = evaluate(&g, &nconn, &shape, cfg.connection)?;
        let (r, diagnostics) = diagnostics(&g.chart, &shape, &ev)?;
        Ok(FlowState { chi, g, nconn, r, diagnostics, shape })
    }

    pub fn nodes(&self) -> Vec<Vec<usize>> {
        multi_indices(&self.shape)
    }

    /// Samples of the g triangle component (i <= j) on the active nodes.
    pub fn g_values(&self, i: usize, j: usize) -> Vec<f64> {
        samples(self.g.g(i, j), &self.shape)
    }

    pub fn h_values(&self, a: usize, b: usize) -> Vec<f64> {
        samples(self.g.h(a, b), &self.shape)
    }

    /// Coordinates of an active node.
    pub fn coords(&self, idx: &[usize]) -> Vec<f64> {
        node_coords(&self.g.chart, idx)
    }
}

fn samples(f: &Field, shape: &[usize]) -> Vec<f64> {
    match f {
        Field::Grid(gf) => multi_indices(shape).iter().map(|idx| gf.value_at_node(idx)).collect(),
        Field::Symbolic(_) => unreachable!("flow metrics are grid backed"),
    }
}

fn check_positive(g: &DMetric, shape: &[usize], tol: f64, chi: f64) -> Result<(), FlowError> {
    let (n, m) = (g.n(), g.m());
    let chart = &g.chart;
    for idx in multi_indices(shape) {
        let p = node_coords(chart, &idx);
        let s = Site::Node(&idx, &p);
        let gv: Vec<f64> = (0..n * n).map(|k| g.g(k / n, k % n).value(s)).collect::<Result<_, _>>()?;
        let hv: Vec<f64> = (0..m * m).map(|k| g.h(k / m, k % m).value(s)).collect::<Result<_, _>>()?;
        if gv.iter().chain(&hv).any(|x| !x.is_finite()) {
            return Err(FlowError::NonFinite { node: idx, chi });
        }
        if !(cholesky_ok(&gv, n, tol) && cholesky_ok(&hv, m, tol)) {
            return Err(FlowError::Positivity { node: idx, chi });
        }
    }
    Ok(())
}

/// rate = -2 Ric + kappa r G on the g and h blocks (Ricci symmetrized);
/// the mixed blocks are only reported.
pub fn flow_rhs(s: &FlowState, cfg: &FlowConfig) -> Result<FlowRate, FlowError> {
    let ev = evaluate(&s.g, &s.nconn, &s.shape, cfg.connection)?;
    let (r, diag) = diagnostics(&s.g.chart, &s.shape, &ev)?;
    let (n, m) = (s.g.n(), s.g.m());
    let d = n + m;
    let kappa = cfg.kappa(d);
    let tg = tri_pairs(n);
    let th = tri_pairs(m);
    let mut g = vec![Vec::with_capacity(ev.nodes.len()); tg.len()];
    let mut h = vec![Vec::with_capacity(ev.nodes.len()); th.len()];
    for c in &ev.curv {
        let ric = |a: usize, b: usize| 0.5 * (c.ricci[a * d + b] + c.ricci[b * d + a]);
        for (k, &(i, j)) in tg.iter().enumerate() {
            g[k].push(-2.0 * ric(i, j) + kappa * r * c.frame_metric[i * d + j]);
        }
        for (k, &(a, b)) in th.iter().enumerate() {
            h[k].push(-2.0 * ric(n + a, n + b) + kappa * r * c.frame_metric[(n + a) * d + n + b]);
        }
    }
    Ok(FlowRate { g, h, r, kappa, mixed_ricci: diag.mixed_ricci })
}

fn field_values(f: &Field, shape: &[usize]) -> (Arc<GridField>, Vec<f64>) {
    match f {
        Field::Grid(gf) => (gf.clone(), samples(f, shape)),
        Field::Symbolic(_) => unreachable!("flow metrics are grid backed"),
    }
}

/// New state with triangles base + sum_k w_k rate_k.
fn combine(s: &FlowState, chi: f64, parts: &[(f64, &FlowRate)], cfg: &FlowConfig) -> Result<FlowState, FlowError> {
    let update = |fields: &[Field], pick: &dyn Fn(&FlowRate) -> &Vec<Vec<f64>>| -> Result<Vec<Field>, FlowError> {
        fields
            .iter()
            .enumerate()
            .map(|(k, f)| {
                let (gf, mut vals) = field_values(f, &s.shape);
                for (w, rate) in parts {
                    for (v, dv) in vals.iter_mut().zip(&pick(rate)[k]) {
                        *v += w * dv;
                    }
                }
                Ok(Field::Grid(Arc::new(gf.with_values(s.shape.clone(), vals)?)))
            })
            .collect()
    };
    let g_tri = update(s.g.g_triangle(), &|r| &r.g)?;
    let h_tri = update(s.g.h_triangle(), &|r| &r.h)?;
    let g = DMetric::from_triangles(s.g.chart.clone(), g_tri, h_tri)?;
    FlowState::assemble(chi, g, s.nconn.clone(), s.shape.clone(), cfg)
}

/// One explicit Euler or classical RK4 step.
pub fn step(s: &FlowState, cfg: &FlowConfig) -> Result<FlowState, FlowError> {
    cfg.validate()?;
    let h = cfg.dchi;
    match cfg.integrator {
        Integrator::Euler => {
            let k1 = flow_rhs(s, cfg)?;
            combine(s, s.chi + h, &[(h, &k1)], cfg)
        }
        Integrator::Rk4 => {
            let k1 = flow_rhs(s, cfg)?;
            let s2 = combine(s, s.chi + 0.5 * h, &[(0.5 * h, &k1)], cfg)?;
            let k2 = flow_rhs(&s2, cfg)?;
            let s3 = combine(s, s.chi + 0.5 * h, &[(0.5 * h, &k2)], cfg)?;
            let k3 = flow_rhs(&s3, cfg)?;
            let s4 = combine(s, s.chi + h, &[(h, &k3)], cfg)?;
            let k4 = flow_rhs(&s4, cfg)?;
            combine(s, s.chi + h, &[(h / 6.0, &k1), (h / 3.0, &k2), (h / 3.0, &k3), (h / 6.0, &k4)], cfg)
        }
    }
}

/// Run `cfg.steps` steps. The observer sees the initial state and every
/// accepted step.
pub fn evolve(s0: FlowState, cfg: &FlowConfig, observer: &mut dyn FnMut(&FlowState) -> Result<(), String>) -> Result<Vec<FlowState>, FlowError> {
    cfg.validate()?;
    observer(&s0).map_err(FlowError::Observer)?;
    let mut out = Vec::with_capacity(cfg.steps + 1);
    out.push(s0);
    for k in 0..cfg.steps {
        let next = step(out.last().unwrap(), cfg).map_err(|e| FlowError::Step { step: k + 1, source: Box::new(e) })?;
        observer(&next).map_err(|e| FlowError::Step { step: k + 1, source: Box::new(FlowError::Observer(e)) })?;
        out.push(next);
    }
    Ok(out)
}

/// Trajectory as CSV. `extra` supplies named columns, one value per state.
pub fn trajectory_csv(states: &[FlowState], extra: &[(String, Vec<f64>)]) -> String {
    let mut out = String::from("chi,volume,r,min_sR,max_sR,einstein_residual,mixed_ricci");
    for (name, _) in extra {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (k, s) in states.iter().enumerate() {
        let d = &s.diagnostics;
        out.push_str(&format!(
            "{},{},{},{},{},{},{}",
            s.chi, d.volume, s.r, d.min_scalar, d.max_scalar, d.einstein_residual, d.mixed_ricci
        ));
        for (_, col) in extra {
            out.push_str(&format!(",{}", col.get(k).copied().unwrap_or(f64::NAN)));
        }
        out.push('\n');
    }
    out
}
