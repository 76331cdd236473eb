use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::moments::{moments, Moments, TestingFunction};
use super::operator::{spectral_trace, SpectralOperator, TraceValue};
use super::{frame_inverse, SpectralError};
use crate::connections::{frame_gradient, point_curvature, rescaled, ConnectionKind, PointCurvature};
use crate::geometry::{integrate_sites_many, point_input, DMetric, Field, Jet, NConnection, QuadratureOptions, Site};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeatMode {
    /// Literal four-dimensional coefficients, no cutoff powers.
    #[default]
    Literal,
    /// Scalar heat-kernel normalization with Lambda^4, Lambda^2, Lambda^0.
    Scalar,
}

impl HeatMode {
    pub fn name(self) -> &'static str {
        match self {
            HeatMode::Literal => "literal",
            HeatMode::Scalar => "scalar",
        }
    }
}

/// Which part of the manifold the invariants are taken over.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Restriction {
    #[default]
    Full,
    /// The h-block alone: integrals over the x axes with sqrt(det g_ij),
    /// curvature contractions over h-indices. Needs g and N independent of
    /// the fibre and N = 0.
    Horizontal,
}

#[derive(Debug, Clone)]
pub struct HeatContext {
    pub g: DMetric,
    pub nconn: NConnection,
    pub connection: ConnectionKind,
    pub phi: Option<Field>,
    pub quadrature: QuadratureOptions,
    /// Bundle rank multiplying every heat invariant.
    pub rank: usize,
    pub restriction: Restriction,
}

impl HeatContext {
    pub fn new(g: DMetric, nconn: NConnection) -> Self {
        HeatContext {
            g,
            nconn,
            connection: ConnectionKind::Canonical,
            phi: None,
            quadrature: QuadratureOptions::default(),
            rank: 1,
            restriction: Restriction::Full,
        }
    }

    pub fn with_connection(mut self, kind: ConnectionKind) -> Self {
        self.connection = kind;
        self
    }

    pub fn with_phi(mut self, phi: Field) -> Self {
        self.phi = Some(phi);
        self
    }

    pub fn with_quadrature(mut self, q: QuadratureOptions) -> Self {
        self.quadrature = q;
        self
    }

    pub fn with_rank(mut self, rank: usize) -> Self {
        self.rank = rank;
        self
    }

    pub fn with_restriction(mut self, r: Restriction) -> Self {
        self.restriction = r;
        self
    }

    /// Dimension the invariants live in.
    pub fn dimension(&self) -> usize {
        match self.restriction {
            Restriction::Full => self.g.n() + self.g.m(),
            Restriction::Horizontal => self.g.n(),
        }
    }
}

/// Integrated curvature invariants of e^{2 phi} g.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatInvariants {
    pub dimension: usize,
    /// Volume of e^{2 phi} g.
    pub volume: f64,
    /// Integral of sR.
    pub scalar: f64,
    /// Integral of (2 Rm^2 - 2 Ric^2 + 5 R^2) / 360.
    pub quartic: f64,
    /// I0, I2, I4 of the four-dimensional approximation (full restriction, n+m = 4).
    pub literal: Option<[f64; 3]>,
    pub resolved: bool,
    pub evaluations: usize,
}

/// Scalar, |Ric|^2 and |Rm|^2 with every index running over 0..r.
fn contractions(pc: &PointCurvature, r: usize) -> (f64, f64, f64) {
    let d = pc.dim();
    let gi = &pc.frame_inverse;
    let riem = |c: usize, b: usize, nu: usize, mu: usize| pc.riemann[((c * d + b) * d + nu) * d + mu];
    let mut ric = vec![0.0; r * r];
    for b in 0..r {
        for nu in 0..r {
            ric[b * r + nu] = (0..r).map(|t| riem(t, b, nu, t)).sum();
        }
    }
    let mut scalar = 0.0;
    for b in 0..r {
        for nu in 0..r {
            scalar += gi[b * d + nu] * ric[b * r + nu];
        }
    }
    let mut ric2 = 0.0;
    for a in 0..r {
        for b in 0..r {
            for c in 0..r {
                for e in 0..r {
                    ric2 += ric[a * r + b] * gi[a * d + c] * gi[b * d + e] * ric[c * r + e];
                }
            }
        }
    }
    let low = pc.lowered_riemann();
    let mut up = vec![0.0; d * d * d * d];
    // raise all four slots within the range; the frame metric is block diagonal
    for a in 0..r {
        for b in 0..r {
            for c in 0..r {
                for e in 0..r {
                    let mut s = 0.0;
                    for p in 0..r {
                        let wa = gi[a * d + p];
                        if wa == 0.0 {
                            continue;
                        }
                        for q in 0..r {
                            let wb = gi[b * d + q];
                            if wb == 0.0 {
                                continue;
                            }
                            for s2 in 0..r {
                                let wc = gi[c * d + s2];
                                if wc == 0.0 {
                                    continue;
                                }
                                for t in 0..r {
                                    s += wa * wb * wc * gi[e * d + t] * low[((p * d + q) * d + s2) * d + t];
                                }
                            }
                        }
                    }
                    up[((a * d + b) * d + c) * d + e] = s;
                }
            }
        }
    }
    let mut rm2 = 0.0;
    for a in 0..r {
        for b in 0..r {
            for c in 0..r {
                for e in 0..r {
                    let k = ((a * d + b) * d + c) * d + e;
                    rm2 += low[k] * up[k];
                }
            }
        }
    }
    (scalar, ric2, rm2)
}

pub fn heat_invariants(ctx: &HeatContext) -> Result<HeatInvariants, SpectralError> {
    let (n, m) = (ctx.g.n(), ctx.g.m());
    let d = n + m;
    let zero = Field::constant(0.0, d);
    let phi = ctx.phi.as_ref().unwrap_or(&zero);
    let mut deps: Vec<usize> = ctx.g.deps();
    deps.extend(ctx.nconn.deps());
    deps.extend(phi.deps());
    deps.sort_unstable();
    deps.dedup();
    let r = ctx.dimension();
    if ctx.restriction == Restriction::Horizontal {
        if !ctx.nconn.is_zero() {
            return Err(SpectralError::Dimension("horizontal restriction needs N = 0".into()));
        }
        let mut hdeps: Vec<usize> = ctx.g.g_triangle().iter().flat_map(|f| f.deps()).collect();
        hdeps.extend(phi.deps());
        if let Some(k) = hdeps.iter().find(|&&k| k >= n) {
            return Err(SpectralError::Dimension(format!("h-block depends on fibre axis {}", k + 1)));
        }
        deps = ctx.g.g_triangle().iter().flat_map(|f| f.deps()).chain(phi.deps()).collect();
        deps.sort_unstable();
        deps.dedup();
    }
    let literal = ctx.restriction == Restriction::Full && d == 4;
    let grid = ctx.g.fields().chain(ctx.nconn.fields()).chain(std::iter::once(phi)).any(|f| !f.is_symbolic());
    let count = if literal { 6 } else { 3 };
    let ints = integrate_sites_many(&ctx.g.chart, &deps, grid, &ctx.quadrature, count, &|site: Site<'_>| {
        let p = point_input(&ctx.g, &ctx.nconn, site)?;
        let pj: Jet = phi.jet(site)?;
        let ps = rescaled(&p, &pj);
        let pc = point_curvature(&ps, ctx.connection)?;
        let ph = pj.value();
        let vol = match ctx.restriction {
            Restriction::Full => p.volume_jet()?.value(),
            Restriction::Horizontal => {
                let gm = DMatrix::from_fn(n, n, |i, j| p.g(i, j).value());
                gm.determinant().abs().sqrt()
            }
        };
        let dv = (r as f64 * ph).exp() * vol;
        let (sr, ric2, rm2) = contractions(&pc, r);
        let mut out = vec![dv, dv * sr, dv * (2.0 * rm2 - 2.0 * ric2 + 5.0 * sr * sr) / 360.0];
        if literal {
            let gi = frame_inverse(&p).map_err(|e| crate::geometry::GeometryError::Unsupported(e.to_string()))?;
            let df = frame_gradient(&p, &pj);
            let mut grad2 = 0.0;
            for a in 0..d {
                for b in 0..d {
                    grad2 += gi[a * d + b] * df[a] * df[b];
                }
            }
            let w = (2.0 * ph).exp() * vol;
            out.push(w);
            out.push(w * (sr + 6.0 * (-2.0 * ph).exp() * grad2));
            out.push(w * (11.0 * pc.euler_density()? - 18.0 * pc.weyl_sq()?));
        }
        Ok(out)
    })?;
    // the omitted fibre axes contributed their lengths
    let fibre: f64 = match ctx.restriction {
        Restriction::Full => 1.0,
        Restriction::Horizontal => (n..d).map(|k| ctx.g.chart.axes[k].length()).product(),
    };
    let v = |k: usize| ints[k].value / fibre;
    Ok(HeatInvariants {
        dimension: r,
        volume: v(0),
        scalar: v(1),
        quartic: v(2),
        literal: if literal { Some([v(3), v(4), v(5)]) } else { None },
        resolved: ints.iter().all(|i| i.resolved),
        evaluations: ints[0].evaluations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatKernelEstimate {
    pub mode: HeatMode,
    pub lambda: f64,
    pub value: f64,
    /// f_(0), f_(2) and f_(4) contributions.
    pub terms: [f64; 3],
    pub moments: Moments,
    pub invariants: HeatInvariants,
}

/// Four-dimensional approximation of Tr f(D^2 / Lambda^2).
pub fn heat_kernel_estimate(ctx: &HeatContext, tf: &TestingFunction, lambda: f64, mode: HeatMode) -> Result<HeatKernelEstimate, SpectralError> {
    let inv = heat_invariants(ctx)?;
    estimate_from(&inv, ctx.rank, tf, lambda, mode)
}

/// Same as `heat_kernel_estimate` with precomputed invariants.
pub fn estimate_from(inv: &HeatInvariants, rank: usize, tf: &TestingFunction, lambda: f64, mode: HeatMode) -> Result<HeatKernelEstimate, SpectralError> {
    if inv.dimension != 4 || inv.literal.is_none() {
        return Err(SpectralError::Dimension(format!("the four-dimensional approximation needs n+m = 4, got {}", inv.dimension)));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(SpectralError::Config(format!("cutoff must be positive, got {lambda}")));
    }
    let mo = moments(tf, 0)?;
    let f4 = mo.higher[0];
    let terms = match mode {
        HeatMode::Literal => {
            let [i0, i2, i4] = inv.literal.unwrap();
            [45.0 / (4.0 * PI * PI) * mo.f0 * i0, 15.0 / (16.0 * PI * PI) * mo.f2 * i2, f4 * i4 / (128.0 * PI * PI)]
        }
        HeatMode::Scalar => {
            let c = rank as f64 / (16.0 * PI * PI);
            [c * lambda.powi(4) * mo.f0 * inv.volume, c * lambda * lambda * mo.f2 * inv.scalar / 6.0, c * f4 * inv.quartic]
        }
    };
    Ok(HeatKernelEstimate { mode, lambda, value: terms.iter().sum(), terms, moments: mo, invariants: inv.clone() })
}

/// a_(2) = Lambda^{D-2} / (4 pi)^{D/2} * rank * integral of (-sR / 6), D the
/// dimension of the restriction.
pub fn seeley_dewitt_a2(ctx: &HeatContext, lambda: f64) -> Result<f64, SpectralError> {
    let inv = heat_invariants(ctx)?;
    let dd = inv.dimension as f64;
    Ok(lambda.powf(dd - 2.0) / (4.0 * PI).powf(dd / 2.0) * ctx.rank as f64 * (-inv.scalar / 6.0))
}

/// Heat-invariant expansion c_0 Lambda^D + c_1 Lambda^{D-2} + c_2 Lambda^{D-4}
/// evaluated on a cutoff grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometricSeries {
    pub scenario: String,
    pub dimension: usize,
    pub powers: Vec<i32>,
    pub coefficients: Vec<f64>,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSeries {
    pub scenario: String,
    pub dimension: usize,
    pub points: Vec<TraceValue>,
}

/// Moment multiplying the Lambda^{D-2j} term: (1/Gamma(k)) int f u^{k-1} du
/// for k = D/2 - j >= 1, (-1)^{-k} f^{(-k)}(0) otherwise.
fn weight(mo: &Moments, k: i32) -> Result<f64, SpectralError> {
    match k {
        2 => Ok(mo.f0),
        1 => Ok(mo.f2),
        k if k <= 0 => mo.get((4 - 2 * k) as usize).ok_or_else(|| SpectralError::Config("moment table too short".into())),
        _ => Err(SpectralError::Dimension("expansion implemented for dimensions 2 and 4".into())),
    }
}

pub fn geometric_series(ctx: &HeatContext, tf: &TestingFunction, lambdas: &[f64], scenario: &str) -> Result<GeometricSeries, SpectralError> {
    let inv = heat_invariants(ctx)?;
    let dd = inv.dimension;
    if dd != 2 && dd != 4 {
        return Err(SpectralError::Dimension(format!("expansion implemented for dimensions 2 and 4, got {dd}")));
    }
    let mo = moments(tf, 2)?;
    let pref = ctx.rank as f64 / (4.0 * PI).powf(dd as f64 / 2.0);
    let half = (dd / 2) as i32;
    let integrals = [inv.volume, inv.scalar / 6.0, inv.quartic];
    let mut coefficients = Vec::with_capacity(3);
    let mut powers = Vec::with_capacity(3);
    for (j, integral) in integrals.iter().enumerate() {
        coefficients.push(pref * weight(&mo, half - j as i32)? * integral);
        powers.push(dd as i32 - 2 * j as i32);
    }
    let mut points = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        if !(l > 0.0 && l.is_finite()) {
            return Err(SpectralError::Config(format!("cutoff must be positive, got {l}")));
        }
        points.push((l, coefficients.iter().zip(&powers).map(|(c, p)| c * l.powi(*p)).sum()));
    }
    Ok(GeometricSeries { scenario: scenario.to_string(), dimension: dd, powers, coefficients, points })
}

pub fn spectral_series(op: &SpectralOperator, tf: &TestingFunction, lambdas: &[f64], budget: usize, scenario: &str) -> Result<SpectralSeries, SpectralError> {
    let dimension = match op {
        SpectralOperator::Lattice(l) => l.axes.len(),
        SpectralOperator::Analytic(a) => a.dimension(),
    };
    let points = lambdas.iter().map(|&l| spectral_trace(op, tf, l, budget)).collect::<Result<Vec<_>, _>>()?;
    Ok(SpectralSeries { scenario: scenario.to_string(), dimension, points })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub lambda: f64,
    pub spectral: f64,
    pub geometric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub scenario: String,
    pub rows: Vec<ComparisonRow>,
    pub powers: Vec<i32>,
    /// Least-squares fit of the spectral values on the powers.
    pub fitted: Vec<f64>,
    pub expected: Vec<f64>,
    /// Relative error where the expected coefficient is nonzero, absolute otherwise.
    pub coefficient_error: Vec<f64>,
}

pub fn spectral_vs_geometric(s: &SpectralSeries, g: &GeometricSeries) -> Result<Comparison, SpectralError> {
    if s.scenario != g.scenario {
        return Err(SpectralError::Mismatch(format!("scenario {} vs {}", s.scenario, g.scenario)));
    }
    if s.dimension != g.dimension {
        return Err(SpectralError::Mismatch(format!("dimension {} vs {}", s.dimension, g.dimension)));
    }
    if s.points.len() != g.points.len() || s.points.iter().zip(&g.points).any(|(a, b)| a.lambda != b.0) {
        return Err(SpectralError::Mismatch("cutoff grids differ".into()));
    }
    let rows: Vec<ComparisonRow> = s
        .points
        .iter()
        .zip(&g.points)
        .map(|(a, b)| ComparisonRow { lambda: a.lambda, spectral: a.value, geometric: b.1, rel_error: (a.value - b.1).abs() / b.1.abs().max(1e-300) })
        .collect();
    let k = g.powers.len().min(rows.len());
    let powers: Vec<i32> = g.powers[..k].to_vec();
    let fitted = if k == 0 {
        Vec::new()
    } else {
        // columns scaled by their largest entry
        let raw = DMatrix::from_fn(rows.len(), k, |i, j| rows[i].lambda.powi(powers[j]));
        let scale: Vec<f64> = (0..k).map(|j| raw.column(j).amax()).collect();
        let a = DMatrix::from_fn(rows.len(), k, |i, j| raw[(i, j)] / scale[j]);
        let b = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.spectral));
        let x = a.svd(true, true).solve(&b, 1e-14).map_err(|e| SpectralError::Config(format!("fit failed: {e}")))?;
        (0..k).map(|j| x[j] / scale[j]).collect()
    };
    let expected = g.coefficients[..k].to_vec();
    let coefficient_error = fitted
        .iter()
        .zip(&expected)
        .map(|(f, e): (&f64, &f64)| if *e != 0.0 { (f - e).abs() / e.abs() } else { (f - e).abs() })
        .collect();
    Ok(Comparison { scenario: s.scenario.clone(), rows, powers, fitted, expected, coefficient_error })
}

/// `lambda,spectral,geometric,rel_error` rows.
pub fn comparison_csv(c: &Comparison) -> String {
    let mut out = String::from("lambda,spectral,geometric,rel_error\n");
    for r in &c.rows {
        out.push_str(&format!("{},{},{},{}\n", r.lambda, r.spectral, r.geometric, r.rel_error));
    }
    out
}
