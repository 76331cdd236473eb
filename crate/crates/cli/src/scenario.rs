//! Scenario files: TOML with nested sections, validated into ready-to-run
//! geometry before anything is computed.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use nhrf_core::connections::{ConformalMode, ConnectionKind};
use nhrf_core::exprlang::{parse, SymbolTable};
use nhrf_core::flow::{FlowConfig, Integrator, Normalization};
use nhrf_core::geometry::{check_nondegenerate, Axis, AxisKind, ChartGrid, DMetric, Field, NConnection, QuadratureOptions, DEFAULT_THETA0};
use nhrf_core::spectral::{AnalyticSpectrum, HeatMode, LatticeOptions, Restriction, SpectralConfig, TestingFunction, TraceMethod};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// A number or a coordinate-free expression such as `2*pi` or `rho^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Num(f64),
    Expr(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub kind: AxisKind,
    #[serde(default)]
    pub lower: Option<Scalar>,
    #[serde(default)]
    pub upper: Option<Scalar>,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    #[default]
    Symbolic,
    /// Every field sampled on the chart grid (seeded jets).
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSpec {
    pub n: usize,
    pub m: usize,
    pub axes: Vec<AxisSpec>,
    #[serde(default)]
    pub theta0: Option<f64>,
    #[serde(default)]
    pub backend: Backend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSpec {
    pub g: Vec<Vec<String>>,
    pub h: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NConnectionSpec {
    /// Row i = 1..n, column a = n+1..n+m. Omitted means N = 0.
    #[serde(rename = "N", default)]
    pub n: Option<Vec<Vec<String>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    /// Number of quasi-random evaluation points.
    #[serde(default = "default_points")]
    pub points: usize,
    /// Explicit points; replaces `points` when given.
    #[serde(default)]
    pub sites: Option<Vec<Vec<f64>>>,
}

fn default_points() -> usize {
    6
}

impl Default for GeometrySpec {
    fn default() -> Self {
        GeometrySpec { points: default_points(), sites: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KappaSpec {
    Named(String),
    Value(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_dchi")]
    pub dchi: f64,
    #[serde(default)]
    pub integrator: Integrator,
    /// `dimensional` (2/(n+m)), `literal` (2/5) or a number.
    #[serde(default)]
    pub kappa: Option<KappaSpec>,
    #[serde(default)]
    pub positivity_tol: Option<f64>,
}

fn default_steps() -> usize {
    10
}

fn default_dchi() -> f64 {
    1e-3
}

impl Default for FlowSpec {
    fn default() -> Self {
        FlowSpec { steps: default_steps(), dchi: default_dchi(), integrator: Integrator::Rk4, kappa: None, positivity_tol: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalSpec {
    #[serde(default = "default_psi")]
    pub psi: String,
    #[serde(default = "default_chis")]
    pub chi: Vec<f64>,
    #[serde(default)]
    pub conformal: ConformalMode,
    /// Thermodynamic consistency over the chi list (needs two or more values).
    #[serde(default = "yes")]
    pub thermo: bool,
    #[serde(default)]
    pub periodic_nodes: Option<usize>,
}

fn default_psi() -> String {
    "0".into()
}

fn default_chis() -> Vec<f64> {
    vec![1.0]
}

fn yes() -> bool {
    true
}

impl Default for FunctionalSpec {
    fn default() -> Self {
        FunctionalSpec { psi: default_psi(), chi: default_chis(), conformal: ConformalMode::Recompute, thermo: true, periodic_nodes: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SpectrumSpec {
    Sphere { radius: Scalar },
    Circle { length: Scalar },
    Product { factors: Vec<SpectrumSpec> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralSpec {
    #[serde(default = "default_function")]
    pub function: String,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default)]
    pub mode: HeatMode,
    #[serde(default)]
    pub method: TraceMethod,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_rank")]
    pub rank: usize,
    #[serde(default)]
    pub restriction: Restriction,
    /// Closed-form spectrum for the analytic method.
    #[serde(default)]
    pub spectrum: Option<SpectrumSpec>,
    /// 1-based lattice axes for the dense method (all axes when omitted).
    #[serde(default)]
    pub lattice_axes: Option<Vec<usize>>,
    /// Potential B of the operator.
    #[serde(default)]
    pub potential: Option<String>,
    /// Conformal factor phi of the operator and the heat invariants.
    #[serde(default)]
    pub phi: Option<String>,
    #[serde(default)]
    pub max_asymmetry: Option<f64>,
}

fn default_function() -> String {
    "exp".into()
}

fn default_lambdas() -> Vec<f64> {
    vec![4.0, 8.0, 16.0]
}

fn default_budget() -> usize {
    2_000_000
}

fn default_rank() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub dir: Option<String>,
}

/// Scenario file as written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default)]
    pub connection: ConnectionKind,
    #[serde(default)]
    pub parameters: BTreeMap<String, f64>,
    pub chart: ChartSpec,
    pub metric: MetricSpec,
    #[serde(default)]
    pub nconnection: NConnectionSpec,
    #[serde(default)]
    pub geometry: GeometrySpec,
    #[serde(default)]
    pub flow: FlowSpec,
    #[serde(default)]
    pub functionals: FunctionalSpec,
    #[serde(default)]
    pub spectral: Option<SpectralSpec>,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Validated spectral settings.
#[derive(Debug, Clone)]
pub struct SpectralSettings {
    pub config: SpectralConfig,
    pub restriction: Restriction,
    pub spectrum: Option<AnalyticSpectrum>,
    pub lattice_axes: Option<Vec<usize>>,
    pub potential: Option<Field>,
    pub phi: Option<Field>,
    pub lattice: LatticeOptions,
}

/// Validated scenario with every expression parsed.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub chart: Arc<ChartGrid>,
    pub g: DMetric,
    pub nconn: NConnection,
    pub sites: Vec<Vec<f64>>,
    pub flow: FlowConfig,
    pub psi: Field,
    pub quadrature: QuadratureOptions,
    pub spectral: Option<SpectralSettings>,
    pub hash: String,
}

impl Scenario {
    pub fn name(&self) -> &str {
        &self.file.name
    }

    pub fn connection(&self) -> ConnectionKind {
        self.file.connection
    }

    pub fn kappa(&self) -> f64 {
        self.flow.kappa(self.chart.dim())
    }
}

fn invalid(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{path}: {msg}"))
}

fn scalar(s: &Scalar, params: &BTreeMap<String, f64>, path: &str) -> Result<f64, CliError> {
    match s {
        Scalar::Num(v) => Ok(*v),
        Scalar::Expr(src) => {
            let table = SymbolTable::new(vec![], params.keys().cloned().collect());
            let e = parse(src, &table).map_err(|e| invalid(path, format!("'{src}': {e}")))?;
            nhrf_core::exprlang::evaluate(&e, &[], params).map_err(|e| invalid(path, e))
        }
    }
}

fn field(src: &str, table: &SymbolTable, params: &BTreeMap<String, f64>, path: &str) -> Result<Field, CliError> {
    Field::parse(src, table, params).map_err(|e| invalid(path, format!("'{src}': {e}")))
}

fn square(rows: &[Vec<String>], k: usize, path: &str) -> Result<(), CliError> {
    if rows.len() != k || rows.iter().any(|r| r.len() != k) {
        return Err(invalid(path, format!("expected a {k}x{k} array")));
    }
    Ok(())
}

/// Deterministic low-discrepancy points (Kronecker sequence) in the chart.
fn kronecker_points(chart: &ChartGrid, count: usize) -> Vec<Vec<f64>> {
    let d = chart.dim();
    let alpha: Vec<f64> = (0..d).map(|k| (((k + 2) as f64).sqrt()).fract()).collect();
    (1..=count)
        .map(|j| {
            (0..d)
                .map(|k| {
                    let (a, b) = chart.effective_bounds(k, 0.3_f64.max(chart.theta0));
                    let t = (0.5 + j as f64 * alpha[k]).fract();
                    a + t * (b - a)
                })
                .collect()
        })
        .collect()
}

fn analytic(s: &SpectrumSpec, params: &BTreeMap<String, f64>, path: &str) -> Result<AnalyticSpectrum, CliError> {
    Ok(match s {
        SpectrumSpec::Sphere { radius } => AnalyticSpectrum::Sphere { radius: scalar(radius, params, &format!("{path}.radius"))? },
        SpectrumSpec::Circle { length } => AnalyticSpectrum::Circle { length: scalar(length, params, &format!("{path}.length"))? },
        SpectrumSpec::Product { factors } => AnalyticSpectrum::Product {
            factors: factors.iter().enumerate().map(|(k, f)| analytic(f, params, &format!("{path}.factors[{k}]"))).collect::<Result<_, _>>()?,
        },
    })
}

/// Tolerance overrides from the command line (`key=value`).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub positivity_tol: Option<f64>,
    pub max_asymmetry: Option<f64>,
    pub resolution_tol: Option<f64>,
}

impl Overrides {
    pub fn parse(items: &[String]) -> Result<Self, CliError> {
        let mut o = Overrides::default();
        for item in items {
            let (k, v) = item.split_once('=').ok_or_else(|| invalid("--tol", format!("'{item}' is not key=value")))?;
            let v: f64 = v.trim().parse().map_err(|_| invalid("--tol", format!("'{v}' is not a number")))?;
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid("--tol", format!("{k} must be positive")));
            }
            match k.trim() {
                "positivity" => o.positivity_tol = Some(v),
                "asymmetry" => o.max_asymmetry = Some(v),
                "resolution" => o.resolution_tol = Some(v),
                other => return Err(invalid("--tol", format!("unknown tolerance '{other}' (positivity, asymmetry, resolution)"))),
            }
        }
        Ok(o)
    }
}

pub fn parse_scenario(text: &str, overrides: &Overrides) -> Result<Scenario, CliError> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| CliError::Validation(format!("schema: {e}")))?;
    validate(file, overrides)
}

pub fn load_scenario(path: &Path, overrides: &Overrides) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    parse_scenario(&text, overrides).map_err(|e| match e {
        CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn validate(file: ScenarioFile, overrides: &Overrides) -> Result<Scenario, CliError> {
    let params = &file.parameters;
    if file.name.trim().is_empty() {
        return Err(invalid("name", "must not be empty"));
    }
    for (k, v) in params {
        if !v.is_finite() {
            return Err(invalid(&format!("parameters.{k}"), "not finite"));
        }
    }
    let c = &file.chart;
    let mut axes = Vec::with_capacity(c.axes.len());
    for (k, a) in c.axes.iter().enumerate() {
        let path = format!("chart.axes[{k}]");
        let (lo, hi) = match a.kind {
            AxisKind::Polar => {
                if a.lower.is_some() || a.upper.is_some() {
                    return Err(invalid(&path, "polar axes span [0, pi]; bounds are not accepted"));
                }
                (0.0, std::f64::consts::PI)
            }
            _ => {
                let lo = a.lower.as_ref().ok_or_else(|| invalid(&path, "missing lower"))?;
                let hi = a.upper.as_ref().ok_or_else(|| invalid(&path, "missing upper"))?;
                (scalar(lo, params, &format!("{path}.lower"))?, scalar(hi, params, &format!("{path}.upper"))?)
            }
        };
        axes.push(Axis { kind: a.kind, lower: lo, upper: hi, samples: a.samples });
    }
    let chart = ChartGrid { n: c.n, m: c.m, axes, theta0: c.theta0.unwrap_or(DEFAULT_THETA0) };
    chart.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    let chart = Arc::new(chart);
    let (n, m) = (c.n, c.m);
    let table = chart.symbols(params.keys().cloned().collect());

    square(&file.metric.g, n, "metric.g")?;
    square(&file.metric.h, m, "metric.h")?;
    let mut g = Vec::with_capacity(n * n);
    for (i, row) in file.metric.g.iter().enumerate() {
        for (j, src) in row.iter().enumerate() {
            g.push(field(src, &table, params, &format!("metric.g[{}][{}]", i + 1, j + 1))?);
        }
    }
    let mut h = Vec::with_capacity(m * m);
    for (a, row) in file.metric.h.iter().enumerate() {
        for (b, src) in row.iter().enumerate() {
            h.push(field(src, &table, params, &format!("metric.h[{}][{}]", n + a + 1, n + b + 1))?);
        }
    }
    let mut nc = Vec::with_capacity(n * m);
    match &file.nconnection.n {
        Some(rows) => {
            if rows.len() != n || rows.iter().any(|r| r.len() != m) {
                return Err(invalid("nconnection.N", format!("expected {n} rows of {m} entries")));
            }
            for (i, row) in rows.iter().enumerate() {
                for (a, src) in row.iter().enumerate() {
                    nc.push(field(src, &table, params, &format!("nconnection.N[{}][{}]", i + 1, n + a + 1))?);
                }
            }
        }
        None => nc = vec![Field::constant(0.0, n + m); n * m],
    }
    let psi = field(&file.functionals.psi, &table, params, "functionals.psi")?;
    let (g, h, nc, psi) = match c.backend {
        Backend::Symbolic => (g, h, nc, psi),
        Backend::Grid => {
            let conv = |f: Field, path: &str| -> Result<Field, CliError> { Ok(Field::Grid(f.to_grid(&chart, true).map_err(|e| invalid(path, e))?)) };
            (
                g.into_iter().map(|f| conv(f, "metric.g")).collect::<Result<_, _>>()?,
                h.into_iter().map(|f| conv(f, "metric.h")).collect::<Result<_, _>>()?,
                nc.into_iter().map(|f| conv(f, "nconnection.N")).collect::<Result<_, _>>()?,
                conv(psi, "functionals.psi")?,
            )
        }
    };
    let g = DMetric::new(chart.clone(), g, h).map_err(|e| invalid("metric", e))?;
    let nconn = NConnection::new(chart.clone(), nc).map_err(|e| invalid("nconnection", e))?;
    check_nondegenerate(&g).map_err(|e| invalid("metric", e))?;

    let sites = match &file.geometry.sites {
        Some(s) => {
            for (k, p) in s.iter().enumerate() {
                if p.len() != n + m {
                    return Err(invalid(&format!("geometry.sites[{k}]"), format!("expected {} coordinates", n + m)));
                }
            }
            s.clone()
        }
        None => {
            if file.geometry.points == 0 {
                return Err(invalid("geometry.points", "must be positive"));
            }
            kronecker_points(&chart, file.geometry.points)
        }
    };

    let f = &file.flow;
    let normalization = match &f.kappa {
        None => Normalization::Dimensional,
        Some(KappaSpec::Named(s)) if s == "dimensional" => Normalization::Dimensional,
        Some(KappaSpec::Named(s)) if s == "literal" => Normalization::Literal,
        Some(KappaSpec::Named(s)) => return Err(invalid("flow.kappa", format!("'{s}': expected dimensional, literal or a number"))),
        Some(KappaSpec::Value(v)) => Normalization::Fixed(*v),
    };
    let mut flow = FlowConfig { connection: file.connection, normalization, dchi: f.dchi, steps: f.steps, integrator: f.integrator, ..FlowConfig::default() };
    if let Some(t) = f.positivity_tol {
        flow.positivity_tol = t;
    }
    if let Some(t) = overrides.positivity_tol {
        flow.positivity_tol = t;
    }
    flow.validate().map_err(|e| invalid("flow", e))?;

    let fs = &file.functionals;
    if fs.chi.is_empty() {
        return Err(invalid("functionals.chi", "empty list"));
    }
    if let Some(x) = fs.chi.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
        return Err(invalid("functionals.chi", format!("chi must be positive, got {x}")));
    }
    let mut quadrature = QuadratureOptions::default();
    if let Some(p) = fs.periodic_nodes {
        if p < 4 {
            return Err(invalid("functionals.periodic_nodes", "at least 4"));
        }
        quadrature.periodic_nodes = p;
    }
    if let Some(t) = overrides.resolution_tol {
        quadrature.resolution_tol = t;
    }

    let spectral = match &file.spectral {
        None => None,
        Some(s) => {
            let config = SpectralConfig { function: s.function.clone(), lambdas: s.lambdas.clone(), mode: s.mode, method: s.method, budget: s.budget, rank: s.rank };
            config.validate().map_err(|e| invalid("spectral", e))?;
            TestingFunction::named(&s.function).map_err(|e| invalid("spectral.function", e))?;
            let spectrum = s.spectrum.as_ref().map(|sp| analytic(sp, params, "spectral.spectrum")).transpose()?;
            if let Some(sp) = &spectrum {
                sp.validate().map_err(|e| invalid("spectral.spectrum", e))?;
            }
            if s.method == TraceMethod::Analytic && spectrum.is_none() {
                return Err(invalid("spectral.spectrum", "the analytic method needs a spectrum descriptor"));
            }
            let lattice_axes = match &s.lattice_axes {
                Some(ax) => {
                    if ax.is_empty() || ax.iter().any(|&k| k == 0 || k > n + m) {
                        return Err(invalid("spectral.lattice_axes", format!("axes are numbered 1..{}", n + m)));
                    }
                    Some(ax.iter().map(|k| k - 1).collect())
                }
                None => None,
            };
            let potential = s.potential.as_ref().map(|src| field(src, &table, params, "spectral.potential")).transpose()?;
            let phi = s.phi.as_ref().map(|src| field(src, &table, params, "spectral.phi")).transpose()?;
            let mut lattice = LatticeOptions::default();
            if let Some(a) = s.max_asymmetry {
                lattice.max_asymmetry = a;
            }
            if let Some(a) = overrides.max_asymmetry {
                lattice.max_asymmetry = a;
            }
            Some(SpectralSettings { config, restriction: s.restriction, spectrum, lattice_axes, potential, phi, lattice })
        }
    };

    let hash = scenario_hash(&file)?;
    Ok(Scenario { file, chart, g, nconn, sites, flow, psi, quadrature, spectral, hash })
}

/// sha256 of the canonical JSON form of the parsed file.
pub fn scenario_hash(file: &ScenarioFile) -> Result<String, CliError> {
    let canon = serde_json::to_vec(file).map_err(|e| CliError::Validation(format!("hash: {e}")))?;
    let digest = Sha256::digest(&canon);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
