//! Stage execution and the run report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use nhrf_core::connections::{
    canonical_dconnection, connection, curvature, distortion, levicivita_connection, metricity, torsion, weyl_and_gauss_bonnet, ConformalMode,
    ConnectionKind, SiteSet,
};
use nhrf_core::flow::{evolve, FlowConfig, FlowState, Integrator};
use nhrf_core::functionals::{evaluate, normalize_context, thermo_consistency, Form, FunctionalContext, FunctionalReport, ThermoReport};
use nhrf_core::geometry::{point_input, Site};
use nhrf_core::spectral::{
    assemble_operator, comparison_csv, estimate_from, geometric_series, heat_invariants, moments, seeley_dewitt_a2, spectral_series,
    spectral_vs_geometric, Comparison, GeometricSeries, HeatContext, HeatKernelEstimate, HeatMode, Moments, OperatorTerms, Restriction,
    SpectralOperator, SpectralSeries, TestingFunction, TraceMethod,
};
use serde::{Deserialize, Serialize};

use crate::scenario::{Backend, Scenario};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Geometry,
    Flow,
    Functionals,
    Spectral,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Geometry, Stage::Flow, Stage::Functionals, Stage::Spectral];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Geometry => "geometry",
            Stage::Flow => "flow",
            Stage::Functionals => "functionals",
            Stage::Spectral => "spectral",
        }
    }

    pub fn parse_list(s: &str) -> Result<Vec<Stage>, CliError> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let st = match part {
                "all" => return Ok(Stage::ALL.to_vec()),
                "geometry" => Stage::Geometry,
                "flow" => Stage::Flow,
                "functionals" => Stage::Functionals,
                "spectral" => Stage::Spectral,
                other => return Err(CliError::Validation(format!("--stages: unknown stage '{other}'"))),
            };
            out.push(st);
        }
        if out.is_empty() {
            return Err(CliError::Validation("--stages: no stage given".into()));
        }
        out.sort();
        out.dedup();
        Ok(out)
    }
}

/// Settings every number in the report depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub connection: ConnectionKind,
    pub backend: Backend,
    pub kappa: f64,
    pub integrator: Integrator,
    pub dchi: f64,
    pub beta: String,
    pub conformal: ConformalMode,
    /// Cutoff convention of the heat-kernel estimate, when a spectral stage is configured.
    pub lambda_mode: Option<HeatMode>,
    pub quadrature: nhrf_core::geometry::QuadratureOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    pub connection: ConnectionKind,
    pub sites: Vec<Vec<f64>>,
    /// Omega_ij^a per site at [(i*n + j)*m + a].
    pub omega: Vec<Vec<f64>>,
    /// Connection coefficients per site, Gamma(c, b, a) at [(c*d + b)*d + a].
    pub gamma: Vec<Vec<f64>>,
    pub scalar: Vec<f64>,
    /// Frame Ricci tensor per site, row-major.
    pub ricci: Vec<Vec<f64>>,
    /// Four dimensions only.
    pub weyl_sq: Option<Vec<f64>>,
    pub euler_density: Option<Vec<f64>>,
    /// max |T^i_jk| and |T^a_bc| of the canonical d-connection.
    pub torsion_pure_max: f64,
    pub torsion_max: f64,
    pub metricity_max: f64,
    /// max |Gamma_LC - (Gamma_canonical + Z)|.
    pub distortion_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRow {
    pub chi: f64,
    pub volume: f64,
    pub r: f64,
    pub min_scalar: f64,
    pub max_scalar: f64,
    pub einstein_residual: f64,
    pub mixed_ricci: f64,
    /// max relative change of the metric samples since chi = 0.
    pub drift: f64,
    pub g11_min: f64,
    pub g11_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowReport {
    pub config: FlowConfig,
    pub kappa: f64,
    pub samples: Vec<usize>,
    pub rows: Vec<FlowRow>,
    pub volume_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalsReport {
    pub psi: String,
    pub beta: String,
    pub rows: Vec<FunctionalReport>,
    pub thermo: Option<ThermoReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeInfo {
    pub axes: Vec<usize>,
    pub dof: usize,
    pub asymmetry: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub function: String,
    pub mode: HeatMode,
    pub method: TraceMethod,
    pub rank: usize,
    pub restriction: Restriction,
    pub moments: Moments,
    pub geometric: GeometricSeries,
    pub spectral: SpectralSeries,
    pub lattice: Option<LatticeInfo>,
    pub comparison: Option<Comparison>,
    /// Why no comparison was made.
    pub comparison_note: Option<String>,
    /// Heat-kernel estimate per cutoff (n+m = 4, full restriction).
    pub estimates: Vec<HeatKernelEstimate>,
    /// (Lambda, a_2).
    pub a2: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: Stage,
    pub message: String,
    /// Process exit code the failure maps to.
    pub exit_code: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub scenario: String,
    pub scenario_hash: String,
    pub stages: Vec<Stage>,
    pub settings: Settings,
    pub geometry: Option<GeometryReport>,
    pub flow: Option<FlowReport>,
    pub functionals: Option<FunctionalsReport>,
    pub spectral: Option<SpectralReport>,
    pub failure: Option<StageFailure>,
    /// Wall-clock seconds per stage; the only nondeterministic field.
    pub timing: BTreeMap<String, f64>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// JSON without the timing field.
    pub fn deterministic_json(&self) -> String {
        let mut r = self.clone();
        r.timing.clear();
        r.to_json()
    }
}

fn numerical(stage: Stage, e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(format!("{} stage: {e}", stage.name()))
}

/// Every stage the scenario configures (spectral only with a `[spectral]` section).
pub fn default_stages(s: &Scenario) -> Vec<Stage> {
    Stage::ALL.iter().copied().filter(|st| *st != Stage::Spectral || s.spectral.is_some()).collect()
}

/// Run the requested stages in order. A failing stage stops the run; the
/// report keeps every earlier stage and records the failure.
pub fn run(s: &Scenario, stages: &[Stage]) -> RunReport {
    let mut stages = stages.to_vec();
    stages.sort();
    stages.dedup();
    let settings = Settings {
        connection: s.connection(),
        backend: s.file.chart.backend,
        kappa: s.kappa(),
        integrator: s.flow.integrator,
        dchi: s.flow.dchi,
        beta: "1/chi".into(),
        conformal: s.file.functionals.conformal,
        lambda_mode: s.spectral.as_ref().map(|sp| sp.config.mode),
        quadrature: s.quadrature,
    };
    let mut report = RunReport {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        scenario: s.name().to_string(),
        scenario_hash: s.hash.clone(),
        stages: stages.clone(),
        settings,
        geometry: None,
        flow: None,
        functionals: None,
        spectral: None,
        failure: None,
        timing: BTreeMap::new(),
    };
    for st in stages {
        let t0 = Instant::now();
        let out = match st {
            Stage::Geometry => geometry_stage(s).map(|r| report.geometry = Some(r)),
            Stage::Flow => flow_stage(s).map(|r| report.flow = Some(r)),
            Stage::Functionals => functionals_stage(s).map(|r| report.functionals = Some(r)),
            Stage::Spectral => spectral_stage(s).map(|r| report.spectral = Some(r)),
        };
        report.timing.insert(st.name().into(), t0.elapsed().as_secs_f64());
        if let Err(e) = out {
            report.failure = Some(StageFailure { stage: st, message: e.to_string(), exit_code: e.exit_code() });
            break;
        }
    }
    report
}

pub fn geometry_stage(s: &Scenario) -> Result<GeometryReport, CliError> {
    let st = Stage::Geometry;
    let err = |e: nhrf_core::geometry::GeometryError| numerical(st, e);
    let (n, m) = (s.chart.n, s.chart.m);
    let d = n + m;
    let sites = SiteSet::points(s.sites.clone());
    let conn = connection(s.connection(), &s.g, &s.nconn, &sites).map_err(err)?;
    let can = canonical_dconnection(&s.g, &s.nconn, &sites).map_err(err)?;
    let lc = levicivita_connection(&s.g, &s.nconn, &sites).map_err(err)?;
    let z = distortion(&s.g, &s.nconn, &sites).map_err(err)?;
    let tor = torsion(&conn).map_err(err)?;
    let can_tor = torsion(&can).map_err(err)?;
    let met = metricity(&conn).map_err(err)?;
    let k = curvature(&conn).map_err(err)?;
    let mut omega = Vec::with_capacity(sites.len());
    for x in &s.sites {
        let p = point_input(&s.g, &s.nconn, Site::Point(x)).map_err(err)?;
        let mut o = vec![0.0; n * n * m];
        for i in 0..n {
            for j in 0..n {
                for a in 0..m {
                    o[(i * n + j) * m + a] = p.omega(i, j, a);
                }
            }
        }
        omega.push(o);
    }
    let mut residual: f64 = 0.0;
    for q in 0..sites.len() {
        for idx in 0..d * d * d {
            residual = residual.max((lc.gamma[q][idx] - can.gamma[q][idx] - z.z[q][idx]).abs());
        }
    }
    let mut pure: f64 = 0.0;
    for q in 0..sites.len() {
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    pure = pure.max(can_tor.get(q, i, j, l).abs());
                }
            }
        }
        for a in n..d {
            for b in n..d {
                for c in n..d {
                    pure = pure.max(can_tor.get(q, a, b, c).abs());
                }
            }
        }
    }
    let (weyl_sq, euler_density) = if d == 4 {
        let (w, gb) = weyl_and_gauss_bonnet(&k).map_err(err)?;
        (Some(w.squared), Some(gb.values))
    } else {
        (None, None)
    };
    Ok(GeometryReport {
        connection: s.connection(),
        sites: s.sites.clone(),
        omega,
        gamma: conn.gamma.clone(),
        scalar: k.scalars(),
        ricci: k.points.iter().map(|p| p.ricci.clone()).collect(),
        weyl_sq,
        euler_density,
        torsion_pure_max: pure,
        torsion_max: tor.max_abs(),
        metricity_max: met.iter().flatten().fold(0.0, |a, x| a.max(x.abs())),
        distortion_residual: residual,
    })
}

fn metric_samples(st: &FlowState) -> Vec<f64> {
    let (n, m) = (st.g.n(), st.g.m());
    let mut out = Vec::new();
    for j in 0..n {
        for i in 0..=j {
            out.extend(st.g_values(i, j));
        }
    }
    for b in 0..m {
        for a in 0..=b {
            out.extend(st.h_values(a, b));
        }
    }
    out
}

pub fn flow_stage(s: &Scenario) -> Result<FlowReport, CliError> {
    let st = Stage::Flow;
    let cfg = s.flow;
    let s0 = FlowState::new(&s.g, &s.nconn, &cfg).map_err(|e| numerical(st, e))?;
    let base = metric_samples(&s0);
    let scale = base.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1e-300);
    let v0 = s0.diagnostics.volume;
    let shape = s0.shape.clone();
    let mut rows = Vec::with_capacity(cfg.steps + 1);
    evolve(s0, &cfg, &mut |state| {
        let now = metric_samples(state);
        let drift = now.iter().zip(&base).fold(0.0f64, |a, (p, q)| a.max((p - q).abs())) / scale;
        let g11 = state.g_values(0, 0);
        let dg = &state.diagnostics;
        rows.push(FlowRow {
            chi: state.chi,
            volume: dg.volume,
            r: state.r,
            min_scalar: dg.min_scalar,
            max_scalar: dg.max_scalar,
            einstein_residual: dg.einstein_residual,
            mixed_ricci: dg.mixed_ricci,
            drift,
            g11_min: g11.iter().copied().fold(f64::INFINITY, f64::min),
            g11_max: g11.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        });
        Ok(())
    })
    .map_err(|e| numerical(st, e))?;
    let volume_drift = rows.iter().fold(0.0f64, |a, r| a.max((r.volume - v0).abs() / v0));
    Ok(FlowReport { config: cfg, kappa: s.kappa(), samples: shape, rows, volume_drift })
}

fn functional_context(s: &Scenario, chi: f64) -> Result<FunctionalContext, CliError> {
    let raw = FunctionalContext::new(s.g.clone(), s.nconn.clone(), s.psi.clone(), chi)
        .with_connection(s.connection())
        .with_conformal(s.file.functionals.conformal)
        .with_quadrature(s.quadrature);
    normalize_context(raw).map_err(|e| numerical(Stage::Functionals, e))
}

pub fn functionals_stage(s: &Scenario) -> Result<FunctionalsReport, CliError> {
    let st = Stage::Functionals;
    let chis = &s.file.functionals.chi;
    let mut rows = Vec::with_capacity(chis.len());
    for &chi in chis {
        let ctx = functional_context(s, chi)?;
        rows.push(evaluate(&ctx).map_err(|e| numerical(st, e))?);
    }
    let distinct = chis.iter().any(|c| *c != chis[0]);
    let thermo = if s.file.functionals.thermo && chis.len() >= 2 && distinct {
        let ctx = functional_context(s, chis[0])?;
        Some(thermo_consistency(&ctx, chis, Form::Standard).map_err(|e| numerical(st, e))?)
    } else {
        None
    };
    Ok(FunctionalsReport { psi: s.file.functionals.psi.clone(), beta: "1/chi".into(), rows, thermo })
}

pub fn spectral_stage(s: &Scenario) -> Result<SpectralReport, CliError> {
    let st = Stage::Spectral;
    let sp = s.spectral.as_ref().ok_or_else(|| CliError::Validation("spectral stage requested but the scenario has no [spectral] section".into()))?;
    let err = |e: nhrf_core::spectral::SpectralError| numerical(st, e);
    let cfg = &sp.config;
    let tf = TestingFunction::named(&cfg.function).map_err(err)?;
    let mo = moments(&tf, 2).map_err(err)?;
    let mut ctx = HeatContext::new(s.g.clone(), s.nconn.clone())
        .with_connection(s.connection())
        .with_quadrature(s.quadrature)
        .with_rank(cfg.rank)
        .with_restriction(sp.restriction);
    if let Some(phi) = &sp.phi {
        ctx = ctx.with_phi(phi.clone());
    }
    let name = s.name();
    let geometric = geometric_series(&ctx, &tf, &cfg.lambdas, name).map_err(err)?;
    let (op, lattice) = match cfg.method {
        TraceMethod::Analytic => (SpectralOperator::Analytic(sp.spectrum.clone().expect("validated")), None),
        TraceMethod::Dense => {
            let terms = OperatorTerms { a: None, b: sp.potential.clone(), phi: sp.phi.clone() };
            let l = assemble_operator(&s.g, &s.nconn, &terms, sp.lattice_axes.as_deref(), &sp.lattice).map_err(err)?;
            let info = LatticeInfo { axes: l.axes.iter().map(|k| k + 1).collect(), dof: l.dof(), asymmetry: l.asymmetry };
            (SpectralOperator::Lattice(l), Some(info))
        }
    };
    let spectral = spectral_series(&op, &tf, &cfg.lambdas, cfg.budget, name).map_err(err)?;
    let (comparison, comparison_note) = match spectral_vs_geometric(&spectral, &geometric) {
        Ok(c) => (Some(c), None),
        Err(nhrf_core::spectral::SpectralError::Mismatch(m)) => (None, Some(m)),
        Err(e) => return Err(err(e)),
    };
    let inv = heat_invariants(&ctx).map_err(err)?;
    let mut estimates = Vec::new();
    if inv.literal.is_some() {
        for &l in &cfg.lambdas {
            estimates.push(estimate_from(&inv, cfg.rank, &tf, l, cfg.mode).map_err(err)?);
        }
    }
    let mut a2 = Vec::with_capacity(cfg.lambdas.len());
    for &l in &cfg.lambdas {
        a2.push((l, seeley_dewitt_a2(&ctx, l).map_err(err)?));
    }
    Ok(SpectralReport {
        function: tf.source.clone(),
        mode: cfg.mode,
        method: cfg.method,
        rank: cfg.rank,
        restriction: sp.restriction,
        moments: mo,
        geometric,
        spectral,
        lattice,
        comparison,
        comparison_note,
        estimates,
        a2,
    })
}

fn coords_header(d: usize, n: usize) -> String {
    (0..d).map(|k| if k < n { format!("x{}", k + 1) } else { format!("y{}", k + 1) }).collect::<Vec<_>>().join(",")
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",")
}

/// CSV files of a report, by file name.
pub fn csv_outputs(r: &RunReport, n: usize, m: usize) -> Vec<(String, String)> {
    let d = n + m;
    let mut out = Vec::new();
    if let Some(g) = &r.geometry {
        let head = coords_header(d, n);
        let mut om = format!("site,{head},i,j,a,omega\n");
        let mut gm = format!("site,{head},c,b,a,gamma\n");
        let mut sc = format!("site,{head},scalar,weyl_sq,euler_density\n");
        for (q, x) in g.sites.iter().enumerate() {
            let xs = join(x);
            for i in 0..n {
                for j in 0..n {
                    for a in 0..m {
                        let v = g.omega[q][(i * n + j) * m + a];
                        if v != 0.0 {
                            let _ = writeln!(om, "{q},{xs},{},{},{},{v}", i + 1, j + 1, n + a + 1);
                        }
                    }
                }
            }
            for c in 0..d {
                for b in 0..d {
                    for a in 0..d {
                        let v = g.gamma[q][(c * d + b) * d + a];
                        if v != 0.0 {
                            let _ = writeln!(gm, "{q},{xs},{},{},{},{v}", c + 1, b + 1, a + 1);
                        }
                    }
                }
            }
            let w = g.weyl_sq.as_ref().map(|w| w[q].to_string()).unwrap_or_default();
            let e = g.euler_density.as_ref().map(|w| w[q].to_string()).unwrap_or_default();
            let _ = writeln!(sc, "{q},{xs},{},{w},{e}", g.scalar[q]);
        }
        out.push(("geometry_omega.csv".into(), om));
        out.push(("geometry_gamma.csv".into(), gm));
        out.push(("geometry_scalars.csv".into(), sc));
    }
    if let Some(f) = &r.flow {
        let mut s = String::from("chi,volume,r,min_sR,max_sR,einstein_residual,mixed_ricci,drift,g11_min,g11_max\n");
        for row in &f.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                row.chi, row.volume, row.r, row.min_scalar, row.max_scalar, row.einstein_residual, row.mixed_ricci, row.drift, row.g11_min, row.g11_max
            );
        }
        out.push(("flow.csv".into(), s));
    }
    if let Some(f) = &r.functionals {
        let mut s = String::from("chi,f0,F_std,W_std,E_std,S_std,F_spec,W_spec,E_spec,S_spec,log_Z,sigma,resolved\n");
        for row in &f.rows {
            let (a, b) = (&row.standard, &row.spectral);
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                row.chi, row.f0, a.f, a.w, a.average_energy, a.entropy, b.f, b.w, b.average_energy, b.entropy, row.log_partition, row.fluctuation, row.resolved
            );
        }
        out.push(("functionals.csv".into(), s));
        if let Some(t) = &f.thermo {
            let mut s = String::from("chi,E,E_from_logZ,residual_E,S,log_Z,residual_S,sigma,sigma_from_logZ\n");
            for row in &t.rows {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{}",
                    row.chi,
                    row.average_energy,
                    row.energy_from_partition,
                    row.residual_energy,
                    row.entropy,
                    row.log_partition,
                    row.residual_entropy,
                    row.fluctuation,
                    row.fluctuation_from_partition
                );
            }
            out.push(("thermo.csv".into(), s));
        }
    }
    if let Some(sp) = &r.spectral {
        match &sp.comparison {
            Some(c) => out.push(("spectral.csv".into(), comparison_csv(c))),
            None => {
                let mut s = String::from("lambda,spectral\n");
                for p in &sp.spectral.points {
                    let _ = writeln!(s, "{},{}", p.lambda, p.value);
                }
                out.push(("spectral.csv".into(), s));
            }
        }
        if !sp.estimates.is_empty() {
            let mut s = String::from("lambda,mode,estimate,term0,term2,term4\n");
            for e in &sp.estimates {
                let _ = writeln!(s, "{},{},{},{},{},{}", e.lambda, e.mode.name(), e.value, e.terms[0], e.terms[1], e.terms[2]);
            }
            out.push(("heat_estimate.csv".into(), s));
        }
    }
    out
}

/// Write report.json and the CSV tables into `dir`.
pub fn write_outputs(r: &RunReport, s: &Scenario, dir: &Path) -> Result<Vec<String>, CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut written = Vec::new();
    std::fs::write(dir.join("report.json"), r.to_json()).map_err(io)?;
    written.push("report.json".to_string());
    for (name, body) in csv_outputs(r, s.chart.n, s.chart.m) {
        std::fs::write(dir.join(&name), body).map_err(io)?;
        written.push(name);
    }
    Ok(written)
}

