use serde::{Deserialize, Serialize};

use super::GeometryError;
use crate::exprlang::SymbolTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AxisKind {
    Periodic,
    Interval,
    /// Polar angle of a sphere factor; a band of width theta0 is cut at both
    /// ends.
    Polar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub kind: AxisKind,
    pub lower: f64,
    pub upper: f64,
    pub samples: usize,
}

impl Axis {
    pub fn periodic(lower: f64, upper: f64, samples: usize) -> Self {
        Axis { kind: AxisKind::Periodic, lower, upper, samples }
    }

    pub fn interval(lower: f64, upper: f64, samples: usize) -> Self {
        Axis { kind: AxisKind::Interval, lower, upper, samples }
    }

    pub fn polar(samples: usize) -> Self {
        Axis { kind: AxisKind::Polar, lower: 0.0, upper: std::f64::consts::PI, samples }
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn is_periodic(&self) -> bool {
        self.kind == AxisKind::Periodic
    }
}

/// Chart with h-dimension n and v-dimension m. Axes 0..n are x1..xn, the
/// rest are y(n+1)..y(n+m).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartGrid {
    pub n: usize,
    pub m: usize,
    pub axes: Vec<Axis>,
    /// Pole exclusion band for polar axes.
    pub theta0: f64,
}

pub const DEFAULT_THETA0: f64 = 0.05;

impl ChartGrid {
    pub fn new(n: usize, m: usize, axes: Vec<Axis>) -> Result<Self, GeometryError> {
        let c = ChartGrid { n, m, axes, theta0: DEFAULT_THETA0 };
        c.validate()?;
        Ok(c)
    }

    pub fn with_theta0(mut self, theta0: f64) -> Result<Self, GeometryError> {
        self.theta0 = theta0;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.n < 2 {
            return Err(GeometryError::Chart(format!("h-dimension n = {} but n >= 2 is required", self.n)));
        }
        if self.m < 1 {
            return Err(GeometryError::Chart(format!("v-dimension m = {} but m >= 1 is required", self.m)));
        }
        if self.dim() > super::MAXD {
            return Err(GeometryError::Chart(format!("n+m = {} exceeds the supported {}", self.dim(), super::MAXD)));
        }
        if self.axes.len() != self.dim() {
            return Err(GeometryError::Chart(format!("{} axes declared for n+m = {}", self.axes.len(), self.dim())));
        }
        for (k, ax) in self.axes.iter().enumerate() {
            if !(ax.upper > ax.lower) || !ax.lower.is_finite() || !ax.upper.is_finite() {
                return Err(GeometryError::Chart(format!("axis {} has empty or invalid bounds", k + 1)));
            }
            let min = if ax.is_periodic() { 4 } else { 5 };
            if ax.samples < min {
                return Err(GeometryError::Chart(format!(
                    "axis {} has {} samples, at least {} needed for order-4 differences",
                    k + 1,
                    ax.samples,
                    min
                )));
            }
            if ax.kind == AxisKind::Polar && !(self.theta0 > 0.0 && 2.0 * self.theta0 < ax.length()) {
                return Err(GeometryError::Chart(format!("pole band theta0 = {} invalid for axis {}", self.theta0, k + 1)));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n + self.m
    }

    pub fn symbols(&self, params: Vec<String>) -> SymbolTable {
        SymbolTable::chart(self.n, self.m, params)
    }

    /// Interval actually covered on an axis (polar axes lose the band).
    pub fn effective_bounds(&self, k: usize, theta0: f64) -> (f64, f64) {
        let ax = &self.axes[k];
        match ax.kind {
            AxisKind::Polar => (ax.lower + theta0, ax.upper - theta0),
            _ => (ax.lower, ax.upper),
        }
    }

    /// Grid node coordinates along axis k.
    pub fn grid_coords(&self, k: usize) -> Vec<f64> {
        let ax = &self.axes[k];
        let (a, b) = self.effective_bounds(k, self.theta0);
        let n = ax.samples;
        if ax.is_periodic() {
            let h = (b - a) / n as f64;
            (0..n).map(|j| a + j as f64 * h).collect()
        } else {
            let h = (b - a) / (n - 1) as f64;
            (0..n).map(|j| if j == n - 1 { b } else { a + j as f64 * h }).collect()
        }
    }

    pub fn grid_spacing(&self, k: usize) -> f64 {
        let ax = &self.axes[k];
        let (a, b) = self.effective_bounds(k, self.theta0);
        if ax.is_periodic() {
            (b - a) / ax.samples as f64
        } else {
            (b - a) / (ax.samples - 1) as f64
        }
    }

    /// Quadrature weights on the grid nodes of axis k: trapezoid on periodic
    /// axes, end-corrected (Gregory) trapezoid on bounded ones.
    pub fn grid_weights(&self, k: usize) -> Vec<f64> {
        let ax = &self.axes[k];
        let h = self.grid_spacing(k);
        let n = ax.samples;
        if ax.is_periodic() {
            return vec![h; n];
        }
        let mut w = vec![h; n];
        if n >= 6 {
            let ends = [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0];
            for (j, c) in ends.iter().enumerate() {
                w[j] = c * h;
                w[n - 1 - j] = c * h;
            }
        } else {
            w[0] = 0.5 * h;
            w[n - 1] = 0.5 * h;
        }
        w
    }

    pub fn grid_shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.samples).collect()
    }

    pub fn has_polar(&self) -> bool {
        self.axes.iter().any(|a| a.kind == AxisKind::Polar)
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Composite Gauss-Legendre rule on [a, b].
pub fn composite_gauss(a: f64, b: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut xs = Vec::with_capacity(panels * order);
    let mut ws = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for (xi, wi) in x.iter().zip(&w) {
            xs.push(lo + 0.5 * h * (xi + 1.0));
            ws.push(0.5 * h * wi);
        }
    }
    (xs, ws)
}
