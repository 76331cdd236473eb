//! Perelman-type functionals and the thermodynamic values of a normalized
//! scalar f = psi + f0 with measure mu = e^{-f} (4 pi chi)^{-(n+m)/2}.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::connections::{conformal_scalar_at, frame_gamma, frame_gradient, frame_hessian, point_curvature, ConformalMode, ConnectionKind};
use crate::geometry::jet::Jet;
use crate::geometry::{integrate_sites_many, point_input, DMetric, Field, GeometryError, NConnection, QuadratureOptions, Site};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FunctionalError {
    #[error("precondition: {0}")]
    Precondition(String),
    #[error("quadrature diverges: {0}")]
    Divergent(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Spectral (rescaled-curvature) or standard (sR + |Df|^2) variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Form {
    Spectral,
    #[default]
    Standard,
}

#[derive(Debug, Clone)]
pub struct FunctionalContext {
    pub g: DMetric,
    pub nconn: NConnection,
    pub connection: ConnectionKind,
    /// Shape of f; the additive constant is `f0`.
    pub psi: Field,
    pub f0: f64,
    pub chi: f64,
    pub conformal: ConformalMode,
    pub quadrature: QuadratureOptions,
    normalized: bool,
}

impl FunctionalContext {
    /// Raw context (f0 = 0, not yet normalized).
    pub fn new(g: DMetric, nconn: NConnection, psi: Field, chi: f64) -> Self {
        FunctionalContext {
            g,
            nconn,
            connection: ConnectionKind::Canonical,
            psi,
            f0: 0.0,
            chi,
            conformal: ConformalMode::Recompute,
            quadrature: QuadratureOptions::default(),
            normalized: false,
        }
    }

    pub fn with_connection(mut self, kind: ConnectionKind) -> Self {
        self.connection = kind;
        self
    }

    pub fn with_conformal(mut self, mode: ConformalMode) -> Self {
        self.conformal = mode;
        self
    }

    pub fn with_quadrature(mut self, opts: QuadratureOptions) -> Self {
        self.quadrature = opts;
        self
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn dim(&self) -> usize {
        self.g.n() + self.g.m()
    }

    /// Same shape psi at another chi, renormalized.
    pub fn at_chi(&self, chi: f64) -> Result<Self, FunctionalError> {
        let mut c = self.clone();
        c.chi = chi;
        c.normalized = false;
        normalize_context(c)
    }

    fn deps(&self) -> Vec<usize> {
        let mut deps = self.g.deps();
        deps.extend(self.nconn.deps());
        deps.extend(self.psi.deps());
        deps.sort_unstable();
        deps.dedup();
        deps
    }

    fn on_grid(&self) -> bool {
        !(self.g.is_symbolic() && self.nconn.is_symbolic() && self.psi.is_symbolic())
    }
}

/// Solve f0 = ln[ integral e^{-psi} dV / (4 pi chi)^{(n+m)/2} ].
pub fn normalize_context(raw: FunctionalContext) -> Result<FunctionalContext, FunctionalError> {
    if !(raw.chi > 0.0 && raw.chi.is_finite()) {
        return Err(FunctionalError::Precondition(format!("chi must be positive, got {}", raw.chi)));
    }
    let psi = &raw.psi;
    let (g, nc) = (&raw.g, &raw.nconn);
    let r = integrate_sites_many(&g.chart, &raw.deps(), raw.on_grid(), &raw.quadrature, 1, &|site| {
        let p = point_input(g, nc, site)?;
        Ok(vec![(-psi.value(site)?).exp() * p.volume_jet()?.value()])
    })
    .map_err(|e| match e {
        GeometryError::Unsupported(m) => FunctionalError::Divergent(m),
        other => other.into(),
    })?;
    let z = r[0].value;
    if !(z.is_finite() && z > 0.0) {
        return Err(FunctionalError::Divergent(format!("integral of e^(-psi) dV = {z}")));
    }
    let d = raw.dim() as f64;
    let mut ctx = raw;
    ctx.f0 = z.ln() - 0.5 * d * (4.0 * PI * ctx.chi).ln();
    ctx.normalized = true;
    Ok(ctx)
}

// integrand slots, all multiplied by e^{-f} dV
const MASS: usize = 0;
const F_LOG: usize = 1; // f
const STD: usize = 2; // sR + |Df|^2
const SPEC_F: usize = 3; // sR~ + 3 e^f |Df|^2
const SPEC_E: usize = 4; // sR~ + 3 |Df|^2
const SPEC_S: usize = 5; // sR~ - 3 e^f |Df|^2
const SIGMA: usize = 6; // |Ric_h + DDf - g/2chi|^2 + |Ric_v + DDf - h/2chi|^2
const SCALAR: usize = 7; // sR
const SLOTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormValues {
    pub f: f64,
    pub w: f64,
    pub average_energy: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub chi: f64,
    pub f0: f64,
    pub spectral: FormValues,
    pub standard: FormValues,
    pub fluctuation: f64,
    pub log_partition: f64,
    /// Integral of mu dV (1 after normalization).
    pub mass: f64,
    /// mu-mean of sR.
    pub mean_scalar: f64,
    pub connection: ConnectionKind,
    pub conformal: ConformalMode,
    /// "closed-form" or "grid".
    pub quadrature: String,
    pub max_rel_change: f64,
    pub resolved: bool,
    pub evaluations: usize,
    /// sha256 of the sampled inputs and settings.
    pub context_hash: String,
}

impl FunctionalReport {
    pub fn form(&self, form: Form) -> &FormValues {
        match form {
            Form::Spectral => &self.spectral,
            Form::Standard => &self.standard,
        }
    }
}

fn require_normalized(ctx: &FunctionalContext) -> Result<(), FunctionalError> {
    if !ctx.normalized {
        return Err(FunctionalError::Precondition("context is not normalized".into()));
    }
    Ok(())
}

fn site_values(ctx: &FunctionalContext, site: Site<'_>) -> Result<(Vec<f64>, Vec<f64>), GeometryError> {
    let p = point_input(&ctx.g, &ctx.nconn, site)?;
    let (n, m) = (ctx.g.n(), ctx.g.m());
    let d = n + m;
    let pj = ctx.psi.jet(site)?;
    let fj = pj + Jet::constant(ctx.f0);
    let f = fj.value();
    let vol = p.volume_jet()?.value();
    let w = (-f).exp() * vol;
    let curv = point_curvature(&p, ctx.connection)?;
    let gi = &curv.frame_inverse;
    let df = frame_gradient(&p, &fj);
    let mut grad2 = 0.0;
    for a in 0..d {
        for b in 0..d {
            grad2 += gi[a * d + b] * df[a] * df[b];
        }
    }
    let sr = curv.scalar;
    let sr_t = conformal_scalar_at(&p, &fj.scale(-0.5), ctx.connection, ctx.conformal)?;
    let gam = frame_gamma(&p, ctx.connection)?;
    let hess = frame_hessian(&p, &fj, &gam);
    let half = 0.5 / ctx.chi;
    let block = |lo: usize, hi: usize| {
        let a = |i: usize, j: usize| curv.ricci[i * d + j] + hess[i * d + j] - half * curv.frame_metric[i * d + j];
        let mut s = 0.0;
        for i in lo..hi {
            for j in lo..hi {
                for k in lo..hi {
                    for l in lo..hi {
                        s += gi[i * d + k] * gi[j * d + l] * a(i, j) * a(k, l);
                    }
                }
            }
        }
        s
    };
    let sigma = block(0, n) + block(n, d);
    let ef = f.exp();
    let mut vals = vec![0.0; SLOTS];
    vals[MASS] = w;
    vals[F_LOG] = w * f;
    vals[STD] = w * (sr + grad2);
    vals[SPEC_F] = w * (sr_t + 3.0 * ef * grad2);
    vals[SPEC_E] = w * (sr_t + 3.0 * grad2);
    vals[SPEC_S] = w * (sr_t - 3.0 * ef * grad2);
    vals[SIGMA] = w * sigma;
    vals[SCALAR] = w * sr;
    let mut inputs = Vec::with_capacity(1 + d * d + n * m);
    inputs.push(pj.value());
    for i in 0..n {
        for j in 0..n {
            inputs.push(p.g(i, j).value());
        }
    }
    for a in 0..m {
        for b in 0..m {
            inputs.push(p.h(a, b).value());
        }
    }
    for i in 0..n {
        for a in 0..m {
            inputs.push(p.nc(i, a).value());
        }
    }
    Ok((vals, inputs))
}

/// All functionals of a normalized context in one quadrature pass.
pub fn evaluate(ctx: &FunctionalContext) -> Result<FunctionalReport, FunctionalError> {
    require_normalized(ctx)?;
    let hasher = std::sync::Mutex::new(Sha256::new());
    {
        let mut h = hasher.lock().unwrap();
        h.update(ctx.connection.name().as_bytes());
        h.update(format!("{:?}", ctx.conformal).as_bytes());
        h.update(ctx.chi.to_bits().to_le_bytes());
        h.update(ctx.f0.to_bits().to_le_bytes());
    }
    let grid = ctx.on_grid();
    let ints = integrate_sites_many(&ctx.g.chart, &ctx.deps(), grid, &ctx.quadrature, SLOTS, &|site| {
        let (vals, inputs) = site_values(ctx, site)?;
        let mut h = hasher.lock().unwrap();
        for x in site.coords().iter().chain(&inputs) {
            h.update(x.to_bits().to_le_bytes());
        }
        Ok(vals)
    })
    .map_err(|e| match e {
        GeometryError::Unsupported(m) => FunctionalError::Divergent(m),
        other => other.into(),
    })?;
    let context_hash: String = hasher.into_inner().unwrap().finalize().iter().map(|b| format!("{b:02x}")).collect();
    let v = |k: usize| ints[k].value;
    let chi = ctx.chi;
    let d = ctx.dim() as f64;
    let c = (4.0 * PI * chi).powf(-0.5 * d);
    let mass = c * v(MASS);
    let mu_f = c * v(F_LOG);
    let w_of = |x: f64| c * chi * x + mu_f - d * mass;
    let standard = FormValues {
        f: v(STD),
        w: w_of(v(STD)),
        average_energy: -chi * chi * (c * v(STD) - 0.5 * d / chi * mass),
        entropy: -w_of(v(STD)),
    };
    let spectral = FormValues {
        f: v(SPEC_F),
        w: w_of(v(SPEC_F)),
        average_energy: -chi * chi * (c * v(SPEC_E) - 0.5 * d / chi * mass),
        entropy: -w_of(v(SPEC_S)),
    };
    let max_rel_change = ints.iter().map(|i| i.rel_change).fold(0.0, f64::max);
    Ok(FunctionalReport {
        chi,
        f0: ctx.f0,
        spectral,
        standard,
        fluctuation: 2.0 * chi * chi * c * v(SIGMA),
        log_partition: -mu_f + 0.5 * d * mass,
        mass,
        mean_scalar: c * v(SCALAR),
        connection: ctx.connection,
        conformal: ctx.conformal,
        quadrature: if grid { "grid" } else { "closed-form" }.to_string(),
        max_rel_change,
        resolved: ints.iter().all(|i| i.resolved),
        evaluations: ints[0].evaluations,
        context_hash,
    })
}

pub fn perelman_f(ctx: &FunctionalContext, form: Form) -> Result<f64, FunctionalError> {
    Ok(evaluate(ctx)?.form(form).f)
}

pub fn perelman_w(ctx: &FunctionalContext, form: Form) -> Result<f64, FunctionalError> {
    Ok(evaluate(ctx)?.form(form).w)
}

pub fn average_energy(ctx: &FunctionalContext, form: Form) -> Result<f64, FunctionalError> {
    Ok(evaluate(ctx)?.form(form).average_energy)
}

pub fn entropy(ctx: &FunctionalContext, form: Form) -> Result<f64, FunctionalError> {
    Ok(evaluate(ctx)?.form(form).entropy)
}

pub fn log_partition(ctx: &FunctionalContext) -> Result<f64, FunctionalError> {
    Ok(evaluate(ctx)?.log_partition)
}

pub fn fluctuation(ctx: &FunctionalContext) -> Result<f64, FunctionalError> {
    Ok(evaluate(ctx)?.fluctuation)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermoRow {
    pub chi: f64,
    pub average_energy: f64,
    /// chi^2 d(log Z)/d chi, i.e. -d log Z / d beta with beta = 1/chi.
    pub energy_from_partition: f64,
    pub residual_energy: f64,
    pub entropy: f64,
    pub log_partition: f64,
    /// |S - (E/chi + log Z)|
    pub residual_entropy: f64,
    pub fluctuation: f64,
    /// d^2 log Z / d beta^2 by differences.
    pub fluctuation_from_partition: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermoReport {
    pub form: Form,
    /// Always "1/chi".
    pub beta: String,
    pub rows: Vec<ThermoRow>,
    /// max residual_energy / |E|
    pub max_rel_energy_residual: f64,
    pub max_entropy_residual: f64,
}

/// Check E = -d log Z/d beta and S = beta E + log Z over a chi family
/// (fixed psi, f0 renormalized per chi).
pub fn thermo_consistency(ctx: &FunctionalContext, chis: &[f64], form: Form) -> Result<ThermoReport, FunctionalError> {
    let lo = chis.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = chis.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if chis.len() < 2 || !(hi > lo) {
        return Err(FunctionalError::Precondition("thermodynamic checks need at least two distinct chi values".into()));
    }
    let mut rows = Vec::with_capacity(chis.len());
    for &chi in chis {
        let step = 1e-4 * chi;
        if !(step > 0.0) || chi - step == chi {
            return Err(FunctionalError::Precondition(format!("differentiation step underflows at chi = {chi}")));
        }
        let here = evaluate(&ctx.at_chi(chi)?)?;
        let lz = |x: f64| -> Result<f64, FunctionalError> { Ok(evaluate(&ctx.at_chi(x)?)?.log_partition) };
        let (lp, lm) = (lz(chi + step)?, lz(chi - step)?);
        let l0 = here.log_partition;
        let d1 = (lp - lm) / (2.0 * step);
        let d2 = (lp - 2.0 * l0 + lm) / (step * step);
        let vals = here.form(form);
        let e_z = chi * chi * d1;
        rows.push(ThermoRow {
            chi,
            average_energy: vals.average_energy,
            energy_from_partition: e_z,
            residual_energy: (vals.average_energy - e_z).abs(),
            entropy: vals.entropy,
            log_partition: l0,
            residual_entropy: (vals.entropy - (vals.average_energy / chi + l0)).abs(),
            fluctuation: here.fluctuation,
            fluctuation_from_partition: chi.powi(4) * d2 + 2.0 * chi.powi(3) * d1,
        });
    }
    let max_rel_energy_residual = rows.iter().map(|r| r.residual_energy / r.average_energy.abs().max(1e-300)).fold(0.0, f64::max);
    let max_entropy_residual = rows.iter().map(|r| r.residual_entropy).fold(0.0, f64::max);
    Ok(ThermoReport { form, beta: "1/chi".into(), rows, max_rel_energy_residual, max_entropy_residual })
}
