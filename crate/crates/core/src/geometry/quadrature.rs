use serde::{Deserialize, Serialize};

use super::chart::{composite_gauss, AxisKind, ChartGrid};
use super::field::{multi_indices, Field, Site};
use super::{point_input, DMetric, GeometryError, NConnection};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureOptions {
    /// Trapezoid nodes on periodic axes (closed-form fields).
    pub periodic_nodes: usize,
    /// Gauss-Legendre panels on bounded axes.
    pub gauss_panels: usize,
    pub gauss_order: usize,
    /// theta0 halvings used for the pole extrapolation.
    pub richardson_levels: usize,
    /// Relative change tolerated when node counts double.
    pub resolution_tol: f64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions { periodic_nodes: 32, gauss_panels: 4, gauss_order: 8, richardson_levels: 3, resolution_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Integral {
    pub value: f64,
    /// Relative change between base and doubled node counts.
    pub rel_change: f64,
    pub resolved: bool,
    /// Integrand evaluations spent.
    pub evaluations: usize,
}

struct Rule {
    coords: Vec<Vec<f64>>,
    weights: Vec<Vec<f64>>,
}

fn symbolic_rule(chart: &ChartGrid, deps: &[usize], opts: &QuadratureOptions, level: usize, theta0: f64) -> Rule {
    let d = chart.dim();
    let mut coords = Vec::with_capacity(d);
    let mut weights = Vec::with_capacity(d);
    for k in 0..d {
        let ax = &chart.axes[k];
        if !deps.contains(&k) {
            coords.push(vec![ax.lower]);
            weights.push(vec![ax.length()]);
            continue;
        }
        let (a, b) = chart.effective_bounds(k, theta0);
        if ax.is_periodic() {
            let n = opts.periodic_nodes * level;
            let h = (b - a) / n as f64;
            coords.push((0..n).map(|j| a + j as f64 * h).collect());
            weights.push(vec![h; n]);
        } else {
            let (x, w) = composite_gauss(a, b, opts.gauss_panels * level, opts.gauss_order);
            coords.push(x);
            weights.push(w);
        }
    }
    Rule { coords, weights }
}

fn grid_rule(chart: &ChartGrid, deps: &[usize]) -> Rule {
    let d = chart.dim();
    let mut coords = Vec::with_capacity(d);
    let mut weights = Vec::with_capacity(d);
    for k in 0..d {
        if deps.contains(&k) {
            coords.push(chart.grid_coords(k));
            weights.push(chart.grid_weights(k));
        } else {
            coords.push(vec![chart.grid_coords(k)[0]]);
            weights.push(vec![chart.axes[k].length()]);
        }
    }
    Rule { coords, weights }
}

/// Returns (sum f w, sum |f| w) per component and the evaluation count.
/// Fixed row-major order.
fn apply(
    rule: &Rule,
    grid_nodes: bool,
    count: usize,
    f: &dyn Fn(Site<'_>) -> Result<Vec<f64>, GeometryError>,
) -> Result<(Vec<f64>, Vec<f64>, usize), GeometryError> {
    let shape: Vec<usize> = rule.coords.iter().map(|c| c.len()).collect();
    let d = shape.len();
    let mut sum = vec![0.0; count];
    let mut abs = vec![0.0; count];
    let mut p = vec![0.0; d];
    let idxs = multi_indices(&shape);
    let n = idxs.len();
    for idx in idxs {
        let mut w = 1.0;
        for k in 0..d {
            p[k] = rule.coords[k][idx[k]];
            w *= rule.weights[k][idx[k]];
        }
        let v = if grid_nodes { f(Site::Node(&idx, &p))? } else { f(Site::Point(&p))? };
        if v.len() != count {
            return Err(GeometryError::Shape(format!("integrand returned {} values, expected {count}", v.len())));
        }
        for (c, x) in v.iter().enumerate() {
            if !x.is_finite() {
                return Err(GeometryError::Unsupported(format!("non-finite integrand at {:?}", p)));
            }
            sum[c] += w * x;
            abs[c] += w * x.abs();
        }
    }
    Ok((sum, abs, n))
}

/// Integrate a pointwise rule over the chart. `deps` lists the axes the
/// integrand may vary along; the others contribute their length. With
/// `grid_nodes` the rule is evaluated on grid nodes (trapezoid / Gregory
/// weights); otherwise at trapezoid and Gauss-Legendre nodes with a
/// resolution check by doubling and, on polar axes, extrapolation of the
/// pole band to zero.
pub fn integrate_sites(
    chart: &ChartGrid,
    deps: &[usize],
    grid_nodes: bool,
    opts: &QuadratureOptions,
    f: &dyn Fn(Site<'_>) -> Result<f64, GeometryError>,
) -> Result<Integral, GeometryError> {
    let mut r = integrate_sites_many(chart, deps, grid_nodes, opts, 1, &|s| Ok(vec![f(s)?]))?;
    Ok(r.remove(0))
}

/// Several integrands sharing one set of evaluations; `f` returns `count`
/// values per site.
pub fn integrate_sites_many(
    chart: &ChartGrid,
    deps: &[usize],
    grid_nodes: bool,
    opts: &QuadratureOptions,
    count: usize,
    f: &dyn Fn(Site<'_>) -> Result<Vec<f64>, GeometryError>,
) -> Result<Vec<Integral>, GeometryError> {
    if grid_nodes {
        let (value, _, evaluations) = apply(&grid_rule(chart, deps), true, count, f)?;
        return Ok(value.into_iter().map(|value| Integral { value, rel_change: 0.0, resolved: true, evaluations }).collect());
    }
    let polar = deps.iter().any(|&k| chart.axes[k].kind == AxisKind::Polar);
    let (coarse, _, n1) = apply(&symbolic_rule(chart, deps, opts, 1, chart.theta0), false, count, f)?;
    let (fine, abs, n2) = apply(&symbolic_rule(chart, deps, opts, 2, chart.theta0), false, count, f)?;
    let mut evaluations = n1 + n2;
    let mut values = fine.clone();
    if polar && opts.richardson_levels > 1 {
        // I(t) = I + c1 t^2 + c2 t^4 + ...
        let mut rows: Vec<Vec<f64>> = vec![fine.clone()];
        let mut t = chart.theta0;
        for _ in 1..opts.richardson_levels {
            t *= 0.5;
            let (v, _, k) = apply(&symbolic_rule(chart, deps, opts, 2, t), false, count, f)?;
            evaluations += k;
            rows.push(v);
        }
        for (c, out) in values.iter_mut().enumerate() {
            let mut row: Vec<f64> = rows.iter().map(|r| r[c]).collect();
            let mut factor = 4.0;
            while row.len() > 1 {
                row = row.windows(2).map(|w| (factor * w[1] - w[0]) / (factor - 1.0)).collect();
                factor *= 4.0;
            }
            *out = row[0];
        }
    }
    Ok((0..count)
        .map(|c| {
            let scale = fine[c].abs().max(abs[c] * 1e-3).max(1e-300);
            let rel_change = (fine[c] - coarse[c]).abs() / scale;
            Integral { value: values[c], rel_change, resolved: rel_change <= opts.resolution_tol, evaluations }
        })
        .collect())
}

/// Integral of f against the volume element of g.
pub fn integrate(f: &Field, g: &DMetric, opts: &QuadratureOptions) -> Result<Integral, GeometryError> {
    let nc = NConnection::zero(g.chart.clone());
    let mut deps = g.deps();
    deps.extend(f.deps());
    deps.sort_unstable();
    deps.dedup();
    let grid = !(g.is_symbolic() && f.is_symbolic());
    integrate_sites(&g.chart, &deps, grid, opts, &|site| {
        let p = point_input(g, &nc, site)?;
        Ok(f.value(site)? * p.volume_jet()?.value())
    })
}
