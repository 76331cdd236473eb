//! Testing-function moments, Laplace-type lattice operators, spectral traces
//! and their heat-kernel approximations.

mod heat;
mod moments;
mod operator;

pub use heat::{
    comparison_csv, estimate_from, geometric_series, heat_invariants, heat_kernel_estimate, seeley_dewitt_a2, spectral_series,
    spectral_vs_geometric, Comparison, ComparisonRow, GeometricSeries, HeatContext, HeatInvariants, HeatKernelEstimate, HeatMode,
    Restriction, SpectralSeries,
};
pub use moments::{moments, Moments, TestingFunction};
pub use operator::{
    assemble_operator, spectral_trace, sum_spectrum, AnalyticSpectrum, LatticeOperator, LatticeOptions, OperatorTerms,
    SpectralOperator, Spectrum, TraceValue,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, PointInput};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("testing function: {0}")]
    Function(String),
    #[error("divergent moment: {0}")]
    Divergent(String),
    #[error("lattice operator: {0}")]
    Lattice(String),
    #[error("operator asymmetry {asymmetry:e} exceeds {limit:e}")]
    Asymmetric { asymmetry: f64, limit: f64 },
    #[error("eigen-solve failed: {0}")]
    Eigen(String),
    #[error("eigenvalue budget of {0} exceeded")]
    Budget(usize),
    #[error("truncation tail {tail:e} too large for trace {sum:e}")]
    Tail { tail: f64, sum: f64 },
    #[error("invalid spectral configuration: {0}")]
    Config(String),
    #[error("dimension: {0}")]
    Dimension(String),
    #[error("reports do not match: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceMethod {
    /// Dense eigen-solve of the assembled lattice operator.
    Dense,
    /// Closed-form spectrum stream.
    #[default]
    Analytic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralConfig {
    /// Built-in name or expression in `u`.
    pub function: String,
    pub lambdas: Vec<f64>,
    pub mode: HeatMode,
    pub method: TraceMethod,
    /// Largest number of distinct eigenvalues enumerated for a stream.
    pub budget: usize,
    pub rank: usize,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig { function: "exp".into(), lambdas: vec![4.0, 8.0, 16.0], mode: HeatMode::Scalar, method: TraceMethod::Analytic, budget: 2_000_000, rank: 1 }
    }
}

impl SpectralConfig {
    pub fn validate(&self) -> Result<(), SpectralError> {
        if self.lambdas.is_empty() {
            return Err(SpectralError::Config("no cutoffs given".into()));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(SpectralError::Config(format!("cutoff must be positive, got {l}")));
        }
        if self.rank == 0 || self.budget == 0 {
            return Err(SpectralError::Config("rank and budget must be positive".into()));
        }
        TestingFunction::named(&self.function).map(|_| ())
    }
}

/// Block inverse of the frame metric diag(g, h), row-major.
pub(crate) fn frame_inverse(p: &PointInput) -> Result<Vec<f64>, SpectralError> {
    let (n, m) = (p.n, p.m);
    let d = n + m;
    let gm = DMatrix::from_fn(n, n, |i, j| p.g(i, j).value());
    let hm = DMatrix::from_fn(m, m, |a, b| p.h(a, b).value());
    let gi = gm.try_inverse().ok_or_else(|| SpectralError::Lattice("degenerate g block".into()))?;
    let hi = hm.try_inverse().ok_or_else(|| SpectralError::Lattice("degenerate h block".into()))?;
    let mut out = vec![0.0; d * d];
    for i in 0..n {
        for j in 0..n {
            out[i * d + j] = gi[(i, j)];
        }
    }
    for a in 0..m {
        for b in 0..m {
            out[(n + a) * d + n + b] = hi[(a, b)];
        }
    }
    Ok(out)
}
