use std::sync::OnceLock;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::moments::{half_line, TestingFunction};
use super::{frame_inverse, SpectralError};
use crate::geometry::{multi_indices, point_input, AxisKind, ChartGrid, DMetric, Field, NConnection, Site};

const D1: [f64; 5] = [1.0, -8.0, 0.0, 8.0, -1.0];
const D2: [f64; 5] = [-1.0, 16.0, -30.0, 16.0, -1.0];

/// First-order and potential terms of the operator, plus the conformal
/// factor. All default to zero.
#[derive(Debug, Clone, Default)]
pub struct OperatorTerms {
    /// A^nu in the N-adapted frame, one field per frame index.
    pub a: Option<Vec<Field>>,
    pub b: Option<Field>,
    pub phi: Option<Field>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeOptions {
    /// Largest raw relative asymmetry accepted before symmetrizing.
    pub max_asymmetry: f64,
    /// Largest number of lattice sites for the dense path.
    pub max_dof: usize,
}

impl Default for LatticeOptions {
    fn default() -> Self {
        LatticeOptions { max_asymmetry: 1e-8, max_dof: 4096 }
    }
}

/// Assembled lattice operator on the periodic axes `axes` of a chart.
#[derive(Debug)]
pub struct LatticeOperator {
    pub axes: Vec<usize>,
    pub shape: Vec<usize>,
    pub volume: f64,
    pub matrix: DMatrix<f64>,
    /// max |M - M^T| / max |M| before symmetrization.
    pub asymmetry: f64,
    eigen: OnceLock<Vec<f64>>,
}

impl LatticeOperator {
    pub fn dof(&self) -> usize {
        self.matrix.nrows()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Result<&[f64], SpectralError> {
        if self.eigen.get().is_none() {
            let m = &self.matrix;
            let dense = faer::Mat::<f64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
            let mut ev = dense.self_adjoint_eigenvalues(faer::Side::Lower).map_err(|e| SpectralError::Eigen(format!("{e:?}")))?;
            if ev.iter().any(|x| !x.is_finite()) {
                return Err(SpectralError::Eigen("non-finite eigenvalue".into()));
            }
            ev.sort_by(f64::total_cmp);
            let _ = self.eigen.set(ev);
        }
        Ok(self.eigen.get().unwrap())
    }

    pub fn spectrum(&self) -> Result<Spectrum, SpectralError> {
        let ev = self.eigenvalues()?;
        Ok(Spectrum {
            values: ev.to_vec(),
            multiplicities: vec![1; ev.len()],
            dimension: self.axes.len(),
            volume: self.volume,
            cutoff: f64::INFINITY,
        })
    }
}

/// Discretize -{ (1/2) g^{ab} (e_a e_b + e_b e_a) + A^nu e_nu + B } on the
/// grid of the periodic axes `axes` (all axes when `None`). With a conformal
/// factor phi the inverse metric becomes e^{-2 phi} g^{ab}, A^nu becomes
/// e^{-2 phi} (A^nu - 2 g^{nu mu} e_mu phi) and B becomes e^{-2 phi}(B - A^nu e_nu phi).
/// Pure second derivatives use the five-point order-4 stencil, mixed ones
/// products of order-4 first-derivative stencils.
pub fn assemble_operator(
    g: &DMetric,
    nc: &NConnection,
    terms: &OperatorTerms,
    axes: Option<&[usize]>,
    opts: &LatticeOptions,
) -> Result<LatticeOperator, SpectralError> {
    let chart: &ChartGrid = &g.chart;
    let (n, m) = (g.n(), g.m());
    let d = n + m;
    let axes: Vec<usize> = axes.map(|a| a.to_vec()).unwrap_or_else(|| (0..d).collect());
    if axes.is_empty() || axes.iter().any(|&k| k >= d) {
        return Err(SpectralError::Lattice(format!("invalid lattice axes {axes:?}")));
    }
    for &k in &axes {
        if chart.axes[k].kind != AxisKind::Periodic {
            return Err(SpectralError::Lattice(format!("axis {} is not periodic", k + 1)));
        }
        if chart.axes[k].samples < 5 {
            return Err(SpectralError::Lattice(format!("axis {} needs at least 5 samples", k + 1)));
        }
    }
    if let Some(a) = &terms.a {
        if a.len() != d {
            return Err(SpectralError::Lattice(format!("A needs {d} components, got {}", a.len())));
        }
    }
    // coefficients must be functions of the lattice axes only
    let mut fields: Vec<&Field> = g.fields().chain(nc.fields()).collect();
    fields.extend(terms.a.iter().flatten());
    fields.extend(terms.b.iter());
    fields.extend(terms.phi.iter());
    for f in &fields {
        if let Some(k) = f.deps().into_iter().find(|k| !axes.contains(k)) {
            return Err(SpectralError::Lattice(format!("coefficient depends on axis {} outside the lattice", k + 1)));
        }
        if let Some(c) = f.grid_chart() {
            if c.grid_shape() != chart.grid_shape() {
                return Err(SpectralError::Lattice("grid field on a different grid".into()));
            }
        }
    }
    let shape: Vec<usize> = axes.iter().map(|&k| chart.axes[k].samples).collect();
    let dof: usize = shape.iter().product();
    if dof > opts.max_dof {
        return Err(SpectralError::Lattice(format!("{dof} lattice sites exceed the dense limit {}", opts.max_dof)));
    }
    let spacing: Vec<f64> = axes.iter().map(|&k| chart.grid_spacing(k)).collect();
    let coords: Vec<Vec<f64>> = (0..d).map(|k| chart.grid_coords(k)).collect();
    let strides: Vec<usize> = {
        let mut s = vec![1; shape.len()];
        for k in (0..shape.len().saturating_sub(1)).rev() {
            s[k] = s[k + 1] * shape[k + 1];
        }
        s
    };
    let volume: f64 = axes.iter().map(|&k| chart.axes[k].length()).product();
    let la = axes.len();
    let mut mat = DMatrix::<f64>::zeros(dof, dof);
    for (row, lidx) in multi_indices(&shape).into_iter().enumerate() {
        let mut idx = vec![0usize; d];
        for (q, &k) in axes.iter().enumerate() {
            idx[k] = lidx[q];
        }
        let p: Vec<f64> = (0..d).map(|k| coords[k][idx[k]]).collect();
        let site = Site::Node(&idx, &p);
        let pi = point_input(g, nc, site)?;
        let gi = frame_inverse(&pi)?;
        // e_alpha = sum_k c[alpha][k] d_k, dc[alpha][l][k] = d_k c[alpha][l]
        let mut c = vec![vec![0.0; d]; d];
        let mut dc = vec![vec![vec![0.0; d]; d]; d];
        for al in 0..d {
            c[al][al] = 1.0;
        }
        for i in 0..n {
            for a in 0..m {
                let j = pi.nc(i, a);
                c[i][n + a] = -j.value();
                for k in 0..d {
                    dc[i][n + a][k] = -j.grad(k);
                }
            }
        }
        let phi = match &terms.phi {
            Some(f) => f.jet(site)?,
            None => Field::constant(0.0, d).jet(site)?,
        };
        let w = (-2.0 * phi.value()).exp();
        let ephi: Vec<f64> = (0..d).map(|al| (0..d).map(|k| c[al][k] * phi.grad(k)).sum()).collect();
        let a_raw: Vec<f64> = match &terms.a {
            Some(a) => a.iter().map(|f| f.value(site)).collect::<Result<_, _>>()?,
            None => vec![0.0; d],
        };
        let b_raw = match &terms.b {
            Some(b) => b.value(site)?,
            None => 0.0,
        };
        let big_g = |al: usize, be: usize| w * gi[al * d + be];
        let a_eff: Vec<f64> = (0..d).map(|nu| w * a_raw[nu] - 2.0 * (0..d).map(|mu| big_g(nu, mu) * ephi[mu]).sum::<f64>()).collect();
        let b_eff = w * (b_raw - (0..d).map(|nu| a_raw[nu] * ephi[nu]).sum::<f64>());
        // second-order coefficients on lattice axes, first-order on lattice axes
        let mut a2 = vec![0.0; la * la];
        let mut a1 = vec![0.0; la];
        for (q, &k) in axes.iter().enumerate() {
            for (r, &l) in axes.iter().enumerate() {
                let mut s = 0.0;
                for al in 0..d {
                    for be in 0..d {
                        s += big_g(al, be) * c[al][k] * c[be][l];
                    }
                }
                a2[q * la + r] = s;
            }
        }
        for (r, &l) in axes.iter().enumerate() {
            let mut s = 0.0;
            for al in 0..d {
                for be in 0..d {
                    let gab = big_g(al, be);
                    if gab == 0.0 {
                        continue;
                    }
                    for k in 0..d {
                        s += gab * c[al][k] * dc[be][l][k];
                    }
                }
            }
            for nu in 0..d {
                s += a_eff[nu] * c[nu][l];
            }
            a1[r] = s;
        }
        let shifted = |q: usize, o: isize| -> usize {
            let nq = shape[q] as isize;
            let cur = lidx[q] as isize;
            let nxt = (cur + o).rem_euclid(nq) as usize;
            row + nxt * strides[q] - lidx[q] * strides[q]
        };
        mat[(row, row)] -= b_eff;
        for q in 0..la {
            let hq = spacing[q];
            let coef2 = a2[q * la + q] / (12.0 * hq * hq);
            let coef1 = a1[q] / (12.0 * hq);
            for (t, o) in (-2isize..=2).enumerate() {
                let col = shifted(q, o);
                mat[(row, col)] -= coef2 * D2[t] + coef1 * D1[t];
            }
            for r in 0..la {
                if r == q || a2[q * la + r] == 0.0 {
                    continue;
                }
                let coef = a2[q * la + r] / (144.0 * hq * spacing[r]);
                for (t, o) in (-2isize..=2).enumerate() {
                    if D1[t] == 0.0 {
                        continue;
                    }
                    let mid = shifted(q, o);
                    for (s, o2) in (-2isize..=2).enumerate() {
                        if D1[s] == 0.0 {
                            continue;
                        }
                        let nr = shape[r] as isize;
                        let cur = (mid / strides[r]) % shape[r];
                        let nxt = (cur as isize + o2).rem_euclid(nr) as usize;
                        let col = mid + nxt * strides[r] - cur * strides[r];
                        mat[(row, col)] -= coef * D1[t] * D1[s];
                    }
                }
            }
        }
    }
    let big = mat.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let mut asym = 0.0f64;
    for i in 0..dof {
        for j in i + 1..dof {
            asym = asym.max((mat[(i, j)] - mat[(j, i)]).abs());
        }
    }
    let asymmetry = if big > 0.0 { asym / big } else { 0.0 };
    if !(asymmetry <= opts.max_asymmetry) {
        return Err(SpectralError::Asymmetric { asymmetry, limit: opts.max_asymmetry });
    }
    let sym = (&mat + mat.transpose()) * 0.5;
    Ok(LatticeOperator { axes, shape, volume, matrix: sym, asymmetry, eigen: OnceLock::new() })
}

/// Eigenvalues (ascending, distinct up to rounding) with multiplicities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub multiplicities: Vec<u64>,
    pub dimension: usize,
    pub volume: f64,
    /// Every eigenvalue below the cutoff is present.
    pub cutoff: f64,
}

impl Spectrum {
    pub fn count(&self) -> u64 {
        self.multiplicities.iter().sum()
    }

    /// Spectrum of the sum operator on a product space, truncated at `cutoff`.
    pub fn product(&self, other: &Spectrum, cutoff: f64, budget: usize) -> Result<Spectrum, SpectralError> {
        let mut pairs: Vec<(f64, u64)> = Vec::new();
        for (a, ma) in self.values.iter().zip(&self.multiplicities) {
            if *a > cutoff {
                break;
            }
            for (b, mb) in other.values.iter().zip(&other.multiplicities) {
                let s = a + b;
                if s > cutoff {
                    break;
                }
                pairs.push((s, ma * mb));
                if pairs.len() > 8 * budget {
                    return Err(SpectralError::Budget(budget));
                }
            }
        }
        let sp = merge(pairs, self.dimension + other.dimension, self.volume * other.volume, cutoff.min(self.cutoff.min(other.cutoff)));
        if sp.values.len() > budget {
            return Err(SpectralError::Budget(budget));
        }
        Ok(sp)
    }
}

fn merge(mut pairs: Vec<(f64, u64)>, dimension: usize, volume: f64, cutoff: f64) -> Spectrum {
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut values: Vec<f64> = Vec::new();
    let mut multiplicities: Vec<u64> = Vec::new();
    for (v, m) in pairs {
        match values.last() {
            Some(&last) if (v - last).abs() <= 1e-12 * v.abs().max(1.0) => *multiplicities.last_mut().unwrap() += m,
            _ => {
                values.push(v);
                multiplicities.push(m);
            }
        }
    }
    Spectrum { values, multiplicities, dimension, volume, cutoff }
}

/// Closed-form Laplace spectra.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AnalyticSpectrum {
    /// Round 2-sphere: l(l+1)/rho^2 with multiplicity 2l+1.
    Sphere { radius: f64 },
    /// Circle of the given length: (2 pi k / L)^2.
    Circle { length: f64 },
    Product { factors: Vec<AnalyticSpectrum> },
}

impl AnalyticSpectrum {
    pub fn torus(lengths: &[f64]) -> Self {
        AnalyticSpectrum::Product { factors: lengths.iter().map(|&length| AnalyticSpectrum::Circle { length }).collect() }
    }

    pub fn dimension(&self) -> usize {
        match self {
            AnalyticSpectrum::Sphere { .. } => 2,
            AnalyticSpectrum::Circle { .. } => 1,
            AnalyticSpectrum::Product { factors } => factors.iter().map(|f| f.dimension()).sum(),
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            AnalyticSpectrum::Sphere { radius } => 4.0 * std::f64::consts::PI * radius * radius,
            AnalyticSpectrum::Circle { length } => *length,
            AnalyticSpectrum::Product { factors } => factors.iter().map(|f| f.volume()).product(),
        }
    }

    pub fn validate(&self) -> Result<(), SpectralError> {
        match self {
            AnalyticSpectrum::Sphere { radius: x } | AnalyticSpectrum::Circle { length: x } if !(*x > 0.0 && x.is_finite()) => {
                Err(SpectralError::Config(format!("non-positive size {x}")))
            }
            AnalyticSpectrum::Product { factors } if factors.is_empty() => Err(SpectralError::Config("empty product".into())),
            AnalyticSpectrum::Product { factors } => factors.iter().try_for_each(|f| f.validate()),
            _ => Ok(()),
        }
    }

    /// All eigenvalues up to `cutoff`.
    pub fn upto(&self, cutoff: f64, budget: usize) -> Result<Spectrum, SpectralError> {
        self.validate()?;
        let (dimension, volume) = (self.dimension(), self.volume());
        match self {
            AnalyticSpectrum::Sphere { radius } => {
                let mut pairs = Vec::new();
                for l in 0u64.. {
                    let v = (l * (l + 1)) as f64 / (radius * radius);
                    if v > cutoff {
                        break;
                    }
                    pairs.push((v, 2 * l + 1));
                    if pairs.len() > budget {
                        return Err(SpectralError::Budget(budget));
                    }
                }
                Ok(merge(pairs, dimension, volume, cutoff))
            }
            AnalyticSpectrum::Circle { length } => {
                let step = 2.0 * std::f64::consts::PI / length;
                let mut pairs = Vec::new();
                for k in 0u64.. {
                    let v = (k as f64 * step).powi(2);
                    if v > cutoff {
                        break;
                    }
                    pairs.push((v, if k == 0 { 1 } else { 2 }));
                    if pairs.len() > budget {
                        return Err(SpectralError::Budget(budget));
                    }
                }
                Ok(merge(pairs, dimension, volume, cutoff))
            }
            AnalyticSpectrum::Product { factors } => {
                let mut acc = factors[0].upto(cutoff, budget)?;
                for f in &factors[1..] {
                    acc = acc.product(&f.upto(cutoff, budget)?, cutoff, budget)?;
                }
                Ok(acc)
            }
        }
    }
}

/// Either an assembled lattice operator or a closed-form spectrum.
#[derive(Debug)]
pub enum SpectralOperator {
    Lattice(LatticeOperator),
    Analytic(AnalyticSpectrum),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceValue {
    pub lambda: f64,
    pub value: f64,
    /// Estimated size of the omitted eigenvalues (0 for finite spectra).
    pub tail_bound: f64,
    /// Eigenvalues summed, with multiplicity.
    pub eigenvalues: u64,
}

/// Sum of f(lambda / Lambda^2) over a spectrum, in ascending order.
pub fn sum_spectrum(sp: &Spectrum, tf: &TestingFunction, lambda: f64) -> Result<f64, SpectralError> {
    let l2 = lambda * lambda;
    let mut s = 0.0;
    for (v, m) in sp.values.iter().zip(&sp.multiplicities) {
        s += *m as f64 * tf.eval(v / l2)?;
    }
    Ok(s)
}

fn gamma_half(d: usize) -> f64 {
    // Gamma(d/2)
    let mut g = if d % 2 == 0 { 1.0 } else { std::f64::consts::PI.sqrt() };
    let mut x = if d % 2 == 0 { 1.0 } else { 0.5 };
    while x < d as f64 / 2.0 {
        g *= x;
        x += 1.0;
    }
    g
}

/// Weyl-law estimate of the sum over eigenvalues above u_max Lambda^2, with a
/// safety factor 2.
fn weyl_tail(tf: &TestingFunction, dimension: usize, volume: f64, lambda: f64, umax: f64) -> Result<f64, SpectralError> {
    let d = dimension as f64;
    let c = volume / ((4.0 * std::f64::consts::PI).powf(d / 2.0) * gamma_half(dimension)) * lambda.powf(d);
    let (t, _) = half_line(&|u| tf.eval(u).map(f64::abs).unwrap_or(f64::NAN) * u.powf(d / 2.0 - 1.0), umax)?;
    Ok(2.0 * c * t)
}

/// Tr f(D^2 / Lambda^2).
pub fn spectral_trace(op: &SpectralOperator, tf: &TestingFunction, lambda: f64, budget: usize) -> Result<TraceValue, SpectralError> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(SpectralError::Config(format!("cutoff must be positive, got {lambda}")));
    }
    match op {
        SpectralOperator::Lattice(l) => {
            let sp = l.spectrum()?;
            Ok(TraceValue { lambda, value: sum_spectrum(&sp, tf, lambda)?, tail_bound: 0.0, eigenvalues: sp.count() })
        }
        SpectralOperator::Analytic(a) => {
            let (d, vol) = (a.dimension(), a.volume());
            let mut umax = 8.0;
            let main = weyl_tail(tf, d, vol, lambda, 0.0)?.max(1e-300);
            while weyl_tail(tf, d, vol, lambda, umax)? > 1e-13 * main && umax < 1e6 {
                umax *= 2.0;
            }
            let mut sp = a.upto(umax * lambda * lambda, budget);
            while matches!(sp, Err(SpectralError::Budget(_))) && umax > 1.0 {
                umax *= 0.5;
                sp = a.upto(umax * lambda * lambda, budget);
            }
            let sp = sp?;
            let value = sum_spectrum(&sp, tf, lambda)?;
            let tail_bound = weyl_tail(tf, d, vol, lambda, umax)?;
            if tail_bound > 1e-8 * value.abs() {
                return Err(SpectralError::Tail { tail: tail_bound, sum: value });
            }
            Ok(TraceValue { lambda, value, tail_bound, eigenvalues: sp.count() })
        }
    }
}
