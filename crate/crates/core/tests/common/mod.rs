#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use nhrf_core::geometry::{Axis, ChartGrid, DMetric, Field, NConnection};

pub struct Case {
    pub name: &'static str,
    pub chart: Arc<ChartGrid>,
    pub g: DMetric,
    pub nc: NConnection,
    /// Interior sample box per axis, used for random points.
    pub boxes: Vec<(f64, f64)>,
}

pub fn build(name: &'static str, chart: ChartGrid, g: &[&str], h: &[&str], nc: &[&str], params: &[(&str, f64)]) -> Case {
    let chart = Arc::new(chart);
    let p: BTreeMap<String, f64> = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    let table = chart.symbols(p.keys().cloned().collect());
    let f = |s: &&str| Field::parse(s, &table, &p).unwrap();
    let g = DMetric::new(chart.clone(), g.iter().map(f).collect(), h.iter().map(f).collect()).unwrap();
    let nc = NConnection::new(chart.clone(), nc.iter().map(f).collect()).unwrap();
    let boxes = chart
        .axes
        .iter()
        .enumerate()
        .map(|(k, _)| {
            let (a, b) = chart.effective_bounds(k, 0.3);
            (a, b)
        })
        .collect();
    Case { name, chart, g, nc, boxes }
}

pub fn torus4(samples: usize) -> ChartGrid {
    ChartGrid::new(2, 2, (0..4).map(|_| Axis::periodic(0.0, 2.0 * PI, samples)).collect()).unwrap()
}

pub fn sphere_torus(samples: usize) -> ChartGrid {
    ChartGrid::new(
        2,
        2,
        vec![Axis::polar(samples), Axis::periodic(0.0, 2.0 * PI, samples), Axis::periodic(0.0, 2.0 * PI, samples), Axis::periodic(0.0, 2.0 * PI, samples)],
    )
    .unwrap()
}

pub fn sphere_sphere(samples: usize) -> ChartGrid {
    ChartGrid::new(
        2,
        2,
        vec![Axis::polar(samples), Axis::periodic(0.0, 2.0 * PI, samples), Axis::polar(samples), Axis::periodic(0.0, 2.0 * PI, samples)],
    )
    .unwrap()
}

pub fn flat() -> Case {
    build("flat-t4", torus4(8), &["1", "0", "0", "1"], &["1", "0", "0", "1"], &["0", "0", "0", "0"], &[])
}

pub fn sphere_product(rho: f64) -> Case {
    build(
        "sphere-product",
        sphere_torus(9),
        &["rho^2", "0", "0", "rho^2*sin(x1)^2"],
        &["1", "0", "0", "1"],
        &["0", "0", "0", "0"],
        &[("rho", rho)],
    )
}

pub fn einstein(rho: f64) -> Case {
    build(
        "einstein-s2xs2",
        sphere_sphere(9),
        &["rho^2", "0", "0", "rho^2*sin(x1)^2"],
        &["rho^2", "0", "0", "rho^2*sin(y3)^2"],
        &["0", "0", "0", "0"],
        &[("rho", rho)],
    )
}

pub fn twisted(eps: f64) -> Case {
    build("twisted-torus", torus4(8), &["1", "0", "0", "1"], &["1", "0", "0", "1"], &["eps*sin(x2)", "0", "0", "0"], &[("eps", eps)])
}

/// Everything depends on everything: exercises every block.
pub fn generic() -> Case {
    build(
        "generic",
        torus4(8),
        &["1.3 + 0.2*sin(y3)*cos(x2)", "0.1*sin(x1 + y4)", "0.1*sin(x1 + y4)", "1.1 + 0.15*cos(x1)*sin(y4)"],
        &["1.2 + 0.1*cos(x2 + y3)", "0.05*sin(x1)*cos(y4)", "0.05*sin(x1)*cos(y4)", "0.9 + 0.2*sin(y3)^2"],
        &["0.3*sin(x2)*cos(y4)", "0.2*cos(x1 + y3)", "0.1*sin(y3)", "0.25*cos(x1)*sin(y4)"],
        &[],
    )
}

pub fn presets() -> Vec<Case> {
    vec![flat(), sphere_product(1.0), einstein(1.0), twisted(0.3), generic()]
}

/// Deterministic pseudo-random points inside the boxes.
pub fn points(case: &Case, count: usize, seed: u64) -> Vec<Vec<f64>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| case.boxes.iter().map(|(a, b)| rng.gen_range(*a..*b)).collect()).collect()
}

/// Coordinate Christoffel symbols of a metric closure by central differences,
/// [(mu*d + nu)*d + la].
pub fn fd_christoffel(metric: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> Vec<f64> {
    let d = x.len();
    let g = metric(x);
    let inv = invert(&g, d);
    let mut dg = vec![0.0; d * d * d];
    for s in 0..d {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        let mut xp2 = x.to_vec();
        let mut xm2 = x.to_vec();
        xp[s] += h;
        xm[s] -= h;
        xp2[s] += 2.0 * h;
        xm2[s] -= 2.0 * h;
        let (a, b, c, e) = (metric(&xp), metric(&xm), metric(&xp2), metric(&xm2));
        for k in 0..d * d {
            dg[s * d * d + k] = (8.0 * (a[k] - b[k]) - (c[k] - e[k])) / (12.0 * h);
        }
    }
    let mut out = vec![0.0; d * d * d];
    for mu in 0..d {
        for nu in 0..d {
            for la in 0..d {
                let mut acc = 0.0;
                for s in 0..d {
                    acc += inv[mu * d + s] * 0.5 * (dg[nu * d * d + s * d + la] + dg[la * d * d + s * d + nu] - dg[s * d * d + nu * d + la]);
                }
                out[(mu * d + nu) * d + la] = acc;
            }
        }
    }
    out
}

/// Coordinate Ricci tensor R_{bd} = d_a G^a_bd - d_d G^a_ba + G^a_ae G^e_bd - G^a_de G^e_ba.
pub fn fd_ricci(metric: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64]) -> Vec<f64> {
    let d = x.len();
    let h1 = 1e-3;
    let gam = fd_christoffel(metric, x, h1);
    let mut dgam = vec![0.0; d * d * d * d];
    for s in 0..d {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[s] += h1;
        xm[s] -= h1;
        let a = fd_christoffel(metric, &xp, h1);
        let b = fd_christoffel(metric, &xm, h1);
        for k in 0..d * d * d {
            dgam[s * d * d * d + k] = (a[k] - b[k]) / (2.0 * h1);
        }
    }
    let gi = |a: usize, b: usize, c: usize| gam[(a * d + b) * d + c];
    let dg = |s: usize, a: usize, b: usize, c: usize| dgam[s * d * d * d + (a * d + b) * d + c];
    let mut ric = vec![0.0; d * d];
    for b in 0..d {
        for e2 in 0..d {
            let mut s = 0.0;
            for a in 0..d {
                s += dg(a, a, b, e2) - dg(e2, a, b, a);
                for e in 0..d {
                    s += gi(a, a, e) * gi(e, b, e2) - gi(a, e2, e) * gi(e, b, a);
                }
            }
            ric[b * d + e2] = s;
        }
    }
    ric
}

pub fn invert(a: &[f64], n: usize) -> Vec<f64> {
    let m = nalgebra::DMatrix::from_row_slice(n, n, a);
    let inv = m.try_inverse().unwrap();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = inv[(i, j)];
        }
    }
    out
}

pub fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Assembled coordinate metric of a case as a closure.
pub fn assembled(case: &Case) -> impl Fn(&[f64]) -> Vec<f64> + '_ {
    use nhrf_core::geometry::Site;
    move |x: &[f64]| {
        let (n, m) = (case.chart.n, case.chart.m);
        let d = n + m;
        let s = Site::Point(x);
        let g = |i: usize, j: usize| case.g.g(i, j).value(s).unwrap();
        let h = |a: usize, b: usize| case.g.h(a, b).value(s).unwrap();
        let nn = |i: usize, a: usize| case.nc.get(i, a).value(s).unwrap();
        let mut out = vec![0.0; d * d];
        for i in 0..n {
            for j in 0..n {
                let mut v = g(i, j);
                for a in 0..m {
                    for b in 0..m {
                        v += nn(i, a) * nn(j, b) * h(a, b);
                    }
                }
                out[i * d + j] = v;
            }
            for a in 0..m {
                let v: f64 = (0..m).map(|b| nn(i, b) * h(a, b)).sum();
                out[i * d + n + a] = v;
                out[(n + a) * d + i] = v;
            }
        }
        for a in 0..m {
            for b in 0..m {
                out[(n + a) * d + n + b] = h(a, b);
            }
        }
        out
    }
}

/// Same case with every field sampled on the grid.
pub fn gridded(case: &Case, seeded: bool) -> (DMetric, NConnection) {
    let (n, m) = (case.chart.n, case.chart.m);
    let conv = |f: &Field| Field::Grid(f.to_grid(&case.chart, seeded).unwrap());
    let g: Vec<Field> = (0..n * n).map(|k| conv(case.g.g(k / n, k % n))).collect();
    let h: Vec<Field> = (0..m * m).map(|k| conv(case.g.h(k / m, k % m))).collect();
    let nc: Vec<Field> = (0..n * m).map(|k| conv(case.nc.get(k / m, k % m))).collect();
    (DMetric::new(case.chart.clone(), g, h).unwrap(), NConnection::new(case.chart.clone(), nc).unwrap())
}
