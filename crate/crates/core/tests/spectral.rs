mod common;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use common::*;
use nhrf_core::geometry::{Axis, ChartGrid, DMetric, Field, NConnection};
use nhrf_core::spectral::*;
use proptest::prelude::*;

fn tf(name: &str) -> TestingFunction {
    TestingFunction::named(name).unwrap()
}

/// Flat metric on a torus chart (n = 2, m = 1) with the given samples.
fn flat_chart(samples: [usize; 3], nsrc: &str) -> (DMetric, NConnection) {
    let chart = Arc::new(ChartGrid::new(2, 1, samples.iter().map(|&s| Axis::periodic(0.0, 2.0 * PI, s)).collect()).unwrap());
    let t = chart.symbols(vec![]);
    let p = BTreeMap::new();
    let f = |s: &str| Field::parse(s, &t, &p).unwrap();
    let g = DMetric::new(chart.clone(), vec![f("1"), f("0"), f("0"), f("1")], vec![f("1")]).unwrap();
    let nc = NConnection::new(chart, vec![f(nsrc), f("0")]).unwrap();
    (g, nc)
}

/// Eigenvalues of the five-point order-4 second difference on n points.
fn fd_symbol(k: f64, n: usize) -> f64 {
    let h = 2.0 * PI / n as f64;
    (30.0 - 32.0 * (k * h).cos() + 2.0 * (2.0 * k * h).cos()) / (12.0 * h * h)
}

fn fd_torus_spectrum(n: usize) -> Vec<f64> {
    let ks: Vec<f64> = (0..n).map(|j| if j <= n / 2 { j as f64 } else { j as f64 - n as f64 }).collect();
    let mut out: Vec<f64> = ks.iter().flat_map(|a| ks.iter().map(move |b| fd_symbol(*a, n) + fd_symbol(*b, n))).collect();
    out.sort_by(f64::total_cmp);
    out
}

#[test]
fn exponential_moments() {
    let m = moments(&tf("exp"), 3).unwrap();
    assert!((m.f0 - 1.0).abs() < 1e-12 && (m.f2 - 1.0).abs() < 1e-12);
    for v in &m.higher {
        assert!((v - 1.0).abs() < 1e-14);
    }
}

#[test]
fn gaussian_moments() {
    let m = moments(&tf("gauss"), 2).unwrap();
    assert!((m.f0 - 0.5).abs() < 1e-12);
    assert!((m.f2 - PI.sqrt() / 2.0).abs() < 1e-12);
    // f(0) = 1, -f'(0) = 0, f''(0) = -2
    assert_eq!(m.get(4), Some(1.0));
    assert!(m.get(6).unwrap().abs() < 1e-15);
    assert!((m.get(8).unwrap() + 2.0).abs() < 1e-14);
    assert_eq!(m.get(3), None);
}

#[test]
fn rational_moments() {
    let m = moments(&tf("rational"), 1).unwrap();
    assert!((m.f0 - 1.0 / 6.0).abs() < 1e-11, "{}", m.f0);
    assert!((m.f2 - 1.0 / 3.0).abs() < 1e-11);
    assert!((m.get(6).unwrap() - 4.0).abs() < 1e-12);
}

#[test]
fn divergent_and_invalid_functions() {
    assert!(matches!(moments(&tf("1"), 0), Err(SpectralError::Divergent(_))));
    assert!(matches!(moments(&tf("1/(1 + u)"), 0), Err(SpectralError::Divergent(_))));
    assert!(matches!(TestingFunction::parse("cos(u)"), Err(SpectralError::Function(_))));
    assert!(matches!(TestingFunction::parse("exp(-v)"), Err(SpectralError::Function(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn scaled_exponential_moments(a in 0.1f64..5.0, b in 0.2f64..4.0) {
        let m = moments(&TestingFunction::parse(&format!("{a}*exp(-{b}*u)")).unwrap(), 2).unwrap();
        prop_assert!((m.f0 - a / (b * b)).abs() <= 1e-9 * m.f0);
        prop_assert!((m.f2 - a / b).abs() <= 1e-9 * m.f2);
        prop_assert!((m.get(4).unwrap() - a).abs() <= 1e-12 * a);
        prop_assert!((m.get(6).unwrap() - a * b).abs() <= 1e-12 * a * b);
        prop_assert!((m.get(8).unwrap() - a * b * b).abs() <= 1e-12 * a * b * b);
    }

    #[test]
    fn trace_grows_with_cutoff(l1 in 0.5f64..6.0, dl in 0.1f64..3.0) {
        let op = SpectralOperator::Analytic(AnalyticSpectrum::Sphere { radius: 1.0 });
        let a = spectral_trace(&op, &tf("exp"), l1, 1_000_000).unwrap().value;
        let b = spectral_trace(&op, &tf("exp"), l1 + dl, 1_000_000).unwrap().value;
        prop_assert!(b > a);
    }
}

#[test]
fn flat_lattice_matches_fourier_symbol() {
    let (g, nc) = flat_chart([32, 32, 4], "0");
    let op = assemble_operator(&g, &nc, &OperatorTerms::default(), Some(&[0, 1]), &LatticeOptions::default()).unwrap();
    assert_eq!(op.dof(), 1024);
    assert_eq!(op.asymmetry, 0.0);
    let ev = op.eigenvalues().unwrap();
    let oracle = fd_torus_spectrum(32);
    for (a, b) in ev.iter().zip(&oracle) {
        assert!((a - b).abs() <= 1e-9 * b.max(1.0), "{a} vs {b}");
    }
    assert!(ev[0] >= -1e-10 && ev[0].abs() < 1e-10);
    // low modes approximate k1^2 + k2^2
    let exact = [0.0, 1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0, 4.0];
    for (a, b) in ev.iter().zip(exact) {
        assert!((a - b).abs() <= 1e-3 * b.max(1.0), "{a} vs {b}");
    }
}

#[test]
fn lattice_64_low_modes() {
    let (g, nc) = flat_chart([64, 64, 4], "0");
    let op = assemble_operator(&g, &nc, &OperatorTerms::default(), Some(&[0, 1]), &LatticeOptions::default()).unwrap();
    let ev = op.eigenvalues().unwrap();
    let exact = [0.0, 1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0, 4.0, 4.0, 4.0, 4.0, 5.0];
    for (a, b) in ev.iter().zip(exact) {
        assert!((a - b).abs() <= 1e-3 * b.max(1.0), "{a} vs {b}");
    }
}

#[test]
fn constant_potential_shifts_spectrum() {
    let (g, nc) = flat_chart([16, 16, 4], "0");
    let c = 0.7;
    let base = assemble_operator(&g, &nc, &OperatorTerms::default(), Some(&[0, 1]), &LatticeOptions::default()).unwrap();
    let terms = OperatorTerms { b: Some(Field::constant(c, 3)), ..Default::default() };
    let shifted = assemble_operator(&g, &nc, &terms, Some(&[0, 1]), &LatticeOptions::default()).unwrap();
    for (a, b) in base.eigenvalues().unwrap().iter().zip(shifted.eigenvalues().unwrap()) {
        assert!((b - (a - c)).abs() < 1e-10);
    }
}

#[test]
fn constant_conformal_factor_scales_spectrum() {
    for (case_n, axes) in [("0", vec![0usize, 1]), ("0.3*sin(x2)", vec![0, 1, 2])] {
        let (g, nc) = flat_chart([8, 8, 8], case_n);
        let c = 0.4;
        let base = assemble_operator(&g, &nc, &OperatorTerms::default(), Some(&axes), &LatticeOptions::default()).unwrap();
        let terms = OperatorTerms { phi: Some(Field::constant(c, 3)), ..Default::default() };
        let scaled = assemble_operator(&g, &nc, &terms, Some(&axes), &LatticeOptions::default()).unwrap();
        let k = (-2.0 * c).exp();
        for (a, b) in base.eigenvalues().unwrap().iter().zip(scaled.eigenvalues().unwrap()) {
            assert!((b - k * a).abs() <= 1e-12 * a.abs().max(1.0), "{b} vs {}", k * a);
        }
    }
}

#[test]
fn twisted_lattice_is_symmetric_and_nonnegative() {
    let (g, nc) = flat_chart([8, 8, 8], "0.3*sin(x2)");
    let op = assemble_operator(&g, &nc, &OperatorTerms::default(), None, &LatticeOptions::default()).unwrap();
    assert!(op.asymmetry < 1e-12, "{}", op.asymmetry);
    let ev = op.eigenvalues().unwrap();
    assert!(ev[0].abs() < 1e-10);
    assert!(ev.iter().all(|v| *v >= -1e-10));
    // the twist moves modes with fibre dependence
    let (g0, nc0) = flat_chart([8, 8, 8], "0");
    let flat = assemble_operator(&g0, &nc0, &OperatorTerms::default(), None, &LatticeOptions::default()).unwrap();
    assert!(ev.iter().zip(flat.eigenvalues().unwrap()).any(|(a, b)| (a - b).abs() > 1e-3));
}

#[test]
fn lattice_preconditions() {
    let case = sphere_product(1.0);
    let r = assemble_operator(&case.g, &case.nc, &OperatorTerms::default(), None, &LatticeOptions::default());
    assert!(matches!(r, Err(SpectralError::Lattice(_))));
    let (g, nc) = flat_chart([8, 8, 8], "0.3*sin(x2)");
    // the twist depends on x2, which is outside a lattice on x1 alone
    let r = assemble_operator(&g, &nc, &OperatorTerms::default(), Some(&[0, 2]), &LatticeOptions::default());
    assert!(matches!(r, Err(SpectralError::Lattice(_))));
    let (g, nc) = flat_chart([32, 32, 8], "0");
    let r = assemble_operator(&g, &nc, &OperatorTerms::default(), None, &LatticeOptions::default());
    assert!(matches!(r, Err(SpectralError::Lattice(_))));
}

#[test]
fn varying_conformal_factor_breaks_symmetry() {
    let (g, nc) = flat_chart([8, 8, 4], "0");
    let t = g.chart.symbols(vec![]);
    let phi = Field::parse("0.2*sin(x1)", &t, &BTreeMap::new()).unwrap();
    let terms = OperatorTerms { phi: Some(phi), ..Default::default() };
    let r = assemble_operator(&g, &nc, &terms, Some(&[0, 1]), &LatticeOptions::default());
    assert!(matches!(r, Err(SpectralError::Asymmetric { .. })));
    let loose = LatticeOptions { max_asymmetry: 1.0, ..Default::default() };
    let op = assemble_operator(&g, &nc, &terms, Some(&[0, 1]), &loose).unwrap();
    assert!(op.asymmetry > 1e-3);
    let m = &op.matrix;
    assert!((m - m.transpose()).amax() <= 1e-12 * m.amax());
}

#[test]
fn first_order_term_is_antisymmetric() {
    // A = (a, 0, 0) constant: the raw matrix gains a skew part only
    let (g, nc) = flat_chart([8, 8, 4], "0");
    let terms = OperatorTerms { a: Some(vec![Field::constant(0.5, 3), Field::constant(0.0, 3), Field::constant(0.0, 3)]), ..Default::default() };
    let loose = LatticeOptions { max_asymmetry: 10.0, ..Default::default() };
    let op = assemble_operator(&g, &nc, &terms, Some(&[0, 1]), &loose).unwrap();
    let base = assemble_operator(&g, &nc, &OperatorTerms::default(), Some(&[0, 1]), &LatticeOptions::default()).unwrap();
    assert!(op.asymmetry > 0.0);
    assert!((&op.matrix - &base.matrix).amax() < 1e-12);
}

#[test]
fn flat_torus_trace_matches_lattice_sum() {
    let op = SpectralOperator::Analytic(AnalyticSpectrum::torus(&[2.0 * PI, 2.0 * PI]));
    let t = spectral_trace(&op, &tf("exp"), 1.0, 1_000_000).unwrap();
    let theta: f64 = (-50i64..=50).map(|k| (-((k * k) as f64)).exp()).sum();
    assert!((t.value - theta * theta).abs() < 1e-12, "{} vs {}", t.value, theta * theta);
    // Jacobi inversion: theta(e^{-1}) = sqrt(pi) theta(e^{-pi^2})
    let dual: f64 = PI * (1.0 + 2.0 * (-PI * PI).exp() + 2.0 * (-4.0 * PI * PI).exp()).powi(2);
    assert!((t.value - dual).abs() < 1e-12);
    assert!(t.tail_bound <= 1e-8 * t.value);
}

#[test]
fn sphere_heat_trace() {
    let op = SpectralOperator::Analytic(AnalyticSpectrum::Sphere { radius: 1.0 });
    for t in [0.05, 0.01] {
        let v = spectral_trace(&op, &tf("exp"), 1.0 / f64::sqrt(t), 1_000_000).unwrap().value;
        let direct: f64 = (0..4000u64).map(|l| (2 * l + 1) as f64 * (-((l * (l + 1)) as f64) * t).exp()).sum();
        assert!((v - direct).abs() < 1e-10 * direct);
        let expansion = 1.0 / t + 1.0 / 3.0 + t / 15.0;
        assert!((v - expansion).abs() < 1e-3 * t);
    }
}

#[test]
fn large_cutoff_counts_dimension() {
    let (g, nc) = flat_chart([8, 8, 4], "0");
    let op = SpectralOperator::Lattice(assemble_operator(&g, &nc, &OperatorTerms::default(), Some(&[0, 1]), &LatticeOptions::default()).unwrap());
    let t = spectral_trace(&op, &tf("exp"), 1e8, 10).unwrap();
    assert!((t.value - 64.0).abs() < 1e-10);
    assert_eq!(t.eigenvalues, 64);
    assert!(matches!(spectral_trace(&op, &tf("exp"), 0.0, 10), Err(SpectralError::Config(_))));
}

#[test]
fn budget_is_enforced() {
    let op = SpectralOperator::Analytic(AnalyticSpectrum::torus(&[2.0 * PI; 4]));
    assert!(matches!(spectral_trace(&op, &tf("exp"), 16.0, 50), Err(SpectralError::Tail { .. }) | Err(SpectralError::Budget(_))));
}

#[test]
fn product_spectrum_counts() {
    let a = AnalyticSpectrum::Circle { length: 2.0 * PI }.upto(4.0, 100).unwrap();
    assert_eq!(a.values, vec![0.0, 1.0, 4.0]);
    assert_eq!(a.multiplicities, vec![1, 2, 2]);
    let b = a.product(&a, 4.0, 100).unwrap();
    // r_2(n): 1, 4, 4, 0, 4
    assert_eq!(b.values, vec![0.0, 1.0, 2.0, 4.0]);
    assert_eq!(b.multiplicities, vec![1, 4, 4, 4]);
}

#[test]
fn literal_mode_flat_keeps_volume_term() {
    let case = flat();
    let ctx = HeatContext::new(case.g.clone(), case.nc.clone());
    let e = heat_kernel_estimate(&ctx, &tf("exp"), 3.0, HeatMode::Literal).unwrap();
    let [i0, i2, i4] = e.invariants.literal.unwrap();
    assert!((i0 - 16.0 * PI.powi(4)).abs() < 1e-9);
    assert!(i2.abs() < 1e-12 && i4.abs() < 1e-12);
    assert!((e.value - 45.0 / (4.0 * PI * PI) * 16.0 * PI.powi(4)).abs() < 1e-9);
    assert_eq!(e.terms[1], 0.0);
}

#[test]
fn literal_mode_sphere_torus_regression() {
    let case = sphere_product(1.0);
    let ctx = HeatContext::new(case.g.clone(), case.nc.clone());
    let e = heat_kernel_estimate(&ctx, &tf("exp"), 1.0, HeatMode::Literal).unwrap();
    let [i0, i2, i4] = e.invariants.literal.unwrap();
    let vol = 16.0 * PI.powi(3);
    assert!((i0 - vol).abs() < 1e-8 * vol);
    assert!((i2 - 2.0 * vol).abs() < 1e-8 * vol);
    // Euler density 0, |C|^2 = 4/3
    assert!((i4 + 18.0 * 4.0 / 3.0 * vol).abs() < 1e-7 * vol);
    // 180 pi + 30 pi - 3 pi
    assert!((e.value - 207.0 * PI).abs() < 1e-7, "{}", e.value / PI);
    // no cutoff dependence in the literal formula
    let e2 = heat_kernel_estimate(&ctx, &tf("exp"), 10.0, HeatMode::Literal).unwrap();
    assert_eq!(e.value, e2.value);
}

#[test]
fn scalar_mode_weyl_law_on_flat_torus() {
    let case = flat();
    let ctx = HeatContext::new(case.g.clone(), case.nc.clone());
    let op = SpectralOperator::Analytic(AnalyticSpectrum::torus(&[2.0 * PI; 4]));
    for lambda in [8.0, 16.0] {
        let e = heat_kernel_estimate(&ctx, &tf("exp"), lambda, HeatMode::Scalar).unwrap();
        assert!((e.value - PI * PI * lambda.powi(4)).abs() < 1e-9 * e.value);
        let t = spectral_trace(&op, &tf("exp"), lambda, 2_000_000).unwrap();
        assert!((t.value - e.value).abs() <= 1e-3 * e.value, "{} vs {}", t.value, e.value);
    }
}

#[test]
fn scalar_mode_sphere_torus_matches_product_spectrum() {
    let case = sphere_product(1.0);
    let ctx = HeatContext::new(case.g.clone(), case.nc.clone());
    let op = SpectralOperator::Analytic(AnalyticSpectrum::Product {
        factors: vec![AnalyticSpectrum::Sphere { radius: 1.0 }, AnalyticSpectrum::torus(&[2.0 * PI, 2.0 * PI])],
    });
    for lambda in [4.0, 8.0] {
        let e = heat_kernel_estimate(&ctx, &tf("exp"), lambda, HeatMode::Scalar).unwrap();
        let closed = PI * lambda.powi(4) + PI * lambda * lambda / 3.0 + PI / 15.0;
        assert!((e.value - closed).abs() < 1e-8 * closed, "{} vs {closed}", e.value);
        let t = spectral_trace(&op, &tf("exp"), lambda, 2_000_000).unwrap();
        // next sphere term 4t^2/315 times the torus area term
        assert!((t.value - closed).abs() < 0.05 / (lambda * lambda), "{} vs {closed}", t.value);
    }
}

#[test]
fn heat_estimate_needs_four_dimensions() {
    let case = sphere_product(1.0);
    let ctx = HeatContext::new(case.g.clone(), case.nc.clone()).with_restriction(Restriction::Horizontal);
    assert!(matches!(heat_kernel_estimate(&ctx, &tf("exp"), 1.0, HeatMode::Scalar), Err(SpectralError::Dimension(_))));
}

#[test]
fn seeley_dewitt_values() {
    let f = flat();
    assert_eq!(seeley_dewitt_a2(&HeatContext::new(f.g.clone(), f.nc.clone()), 5.0).unwrap(), 0.0);
    let s = sphere_product(1.0);
    let full = seeley_dewitt_a2(&HeatContext::new(s.g.clone(), s.nc.clone()), 2.0).unwrap();
    // (Lambda^2 / 16 pi^2) * (-2/6) * 16 pi^3
    assert!((full + 4.0 * PI / 3.0).abs() < 1e-8, "{full}");
    let rank4 = seeley_dewitt_a2(&HeatContext::new(s.g.clone(), s.nc.clone()).with_rank(4), 2.0).unwrap();
    assert!((rank4 - 4.0 * full).abs() < 1e-12);
    let h = seeley_dewitt_a2(&HeatContext::new(s.g.clone(), s.nc.clone()).with_restriction(Restriction::Horizontal), 7.0).unwrap();
    assert!((h + 1.0 / 3.0).abs() < 1e-9, "{h}");
}

#[test]
fn horizontal_restriction_needs_product() {
    let t = twisted(0.3);
    let ctx = HeatContext::new(t.g.clone(), t.nc.clone()).with_restriction(Restriction::Horizontal);
    assert!(matches!(heat_invariants(&ctx), Err(SpectralError::Dimension(_))));
}

#[test]
fn conformal_factor_in_heat_invariants() {
    // constant phi: volume e^{4 phi}, scalar e^{2 phi}, quartic unchanged
    let s = sphere_product(1.0);
    let c = 0.3;
    let a = heat_invariants(&HeatContext::new(s.g.clone(), s.nc.clone())).unwrap();
    let b = heat_invariants(&HeatContext::new(s.g.clone(), s.nc.clone()).with_phi(Field::constant(c, 4))).unwrap();
    assert!((b.volume - (4.0 * c).exp() * a.volume).abs() < 1e-9 * b.volume);
    assert!((b.scalar - (2.0 * c).exp() * a.scalar).abs() < 1e-9 * b.scalar);
    assert!((b.quartic - a.quartic).abs() < 1e-9 * a.quartic);
    let [p0, p2, p4] = b.literal.unwrap();
    let [q0, q2, q4] = a.literal.unwrap();
    assert!((p0 - (2.0 * c).exp() * q0).abs() < 1e-9 * p0);
    assert!((p2 - q2).abs() < 1e-9 * q2);
    assert!((p4 - (-2.0 * c).exp() * q4).abs() < 1e-9 * q4.abs());
}

#[test]
fn flat_weyl_fit() {
    let case = flat();
    let ctx = HeatContext::new(case.g.clone(), case.nc.clone());
    let lambdas = [4.0, 8.0, 16.0];
    let geo = geometric_series(&ctx, &tf("exp"), &lambdas, "flat").unwrap();
    let op = SpectralOperator::Analytic(AnalyticSpectrum::torus(&[2.0 * PI; 4]));
    let sp = spectral_series(&op, &tf("exp"), &lambdas, 2_000_000, "flat").unwrap();
    let c = spectral_vs_geometric(&sp, &geo).unwrap();
    assert_eq!(c.powers, vec![4, 2, 0]);
    assert!((c.expected[0] - PI * PI).abs() < 1e-9);
    assert!(c.coefficient_error[0] < 5e-3);
    assert!(c.rows.iter().all(|r| r.rel_error < 1e-6));
    let csv = comparison_csv(&c);
    assert!(csv.starts_with("lambda,spectral,geometric,rel_error\n"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn sphere_heat_fit() {
    let s = sphere_product(1.0);
    let ctx = HeatContext::new(s.g.clone(), s.nc.clone()).with_restriction(Restriction::Horizontal);
    let lambdas = [5.0, 7.0, 10.0];
    let geo = geometric_series(&ctx, &tf("exp"), &lambdas, "s2").unwrap();
    assert!((geo.coefficients[0] - 1.0).abs() < 1e-9);
    assert!((geo.coefficients[1] - 1.0 / 3.0).abs() < 1e-9);
    assert!((geo.coefficients[2] - 1.0 / 15.0).abs() < 1e-8);
    let sp = spectral_series(&SpectralOperator::Analytic(AnalyticSpectrum::Sphere { radius: 1.0 }), &tf("exp"), &lambdas, 1_000_000, "s2").unwrap();
    let c = spectral_vs_geometric(&sp, &geo).unwrap();
    assert!((c.fitted[0] - 1.0).abs() < 1e-3);
    assert!((c.fitted[1] - 1.0 / 3.0).abs() < 1e-2);
    // the same constant from a_(2) up to the sign convention
    let a2 = seeley_dewitt_a2(&ctx, 1.0).unwrap();
    assert!((c.fitted[1] + a2).abs() < 1e-2);
}

#[test]
fn mismatched_series_are_refused() {
    let case = flat();
    let ctx = HeatContext::new(case.g.clone(), case.nc.clone());
    let geo = geometric_series(&ctx, &tf("exp"), &[4.0], "one").unwrap();
    let op = SpectralOperator::Analytic(AnalyticSpectrum::torus(&[2.0 * PI; 4]));
    let sp = spectral_series(&op, &tf("exp"), &[4.0], 2_000_000, "two").unwrap();
    assert!(matches!(spectral_vs_geometric(&sp, &geo), Err(SpectralError::Mismatch(_))));
    let sp = spectral_series(&op, &tf("exp"), &[8.0], 2_000_000, "one").unwrap();
    assert!(matches!(spectral_vs_geometric(&sp, &geo), Err(SpectralError::Mismatch(_))));
}

#[test]
fn config_validation() {
    assert!(SpectralConfig::default().validate().is_ok());
    let bad = SpectralConfig { lambdas: vec![1.0, -2.0], ..Default::default() };
    assert!(matches!(bad.validate(), Err(SpectralError::Config(_))));
    let bad = SpectralConfig { function: "-exp(-u)".into(), ..Default::default() };
    assert!(matches!(bad.validate(), Err(SpectralError::Function(_))));
}
