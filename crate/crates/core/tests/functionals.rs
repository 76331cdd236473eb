mod common;

use std::collections::BTreeMap;
use std::f64::consts::PI;

use common::*;
use nhrf_core::connections::{ConformalMode, ConnectionKind};
use nhrf_core::functionals::*;
use nhrf_core::geometry::{Field, QuadratureOptions};
use proptest::prelude::*;

fn psi(case: &Case, src: &str) -> Field {
    Field::parse(src, &case.chart.symbols(vec![]), &BTreeMap::new()).unwrap()
}

fn ctx(case: &Case, src: &str, chi: f64) -> FunctionalContext {
    normalize_context(FunctionalContext::new(case.g.clone(), case.nc.clone(), psi(case, src), chi)).unwrap()
}

/// Trapezoid rule with many nodes on [0, 2 pi).
fn trap(f: impl Fn(f64) -> f64) -> f64 {
    let n = 4096;
    let h = 2.0 * PI / n as f64;
    (0..n).map(|k| f(k as f64 * h)).sum::<f64>() * h
}

const VOL_T4: f64 = 16.0 * PI * PI * PI * PI;
const VOL_S2T2: f64 = 16.0 * PI * PI * PI;

#[test]
fn normalization_closed_form() {
    let c = ctx(&flat(), "0", 1.0);
    assert!((c.f0 - (PI * PI).ln()).abs() < 1e-12);
    let r = evaluate(&c).unwrap();
    assert!((r.mass - 1.0).abs() < 1e-10);
    let c2 = ctx(&sphere_product(1.0), "0.3*cos(x1) + 0.2*sin(x2)", 0.7);
    assert!((evaluate(&c2).unwrap().mass - 1.0).abs() < 1e-10);
}

#[test]
fn nonpositive_chi_is_rejected() {
    let f = flat();
    for chi in [0.0, -1.0, f64::NAN] {
        let raw = FunctionalContext::new(f.g.clone(), f.nc.clone(), psi(&f, "0"), chi);
        assert!(matches!(normalize_context(raw), Err(FunctionalError::Precondition(_))));
    }
    let raw = FunctionalContext::new(f.g.clone(), f.nc.clone(), psi(&f, "0"), 1.0);
    assert!(matches!(evaluate(&raw), Err(FunctionalError::Precondition(_))));
}

#[test]
fn divergent_weight_is_reported() {
    let f = flat();
    let raw = FunctionalContext::new(f.g.clone(), f.nc.clone(), psi(&f, "-800*cos(x1)^2"), 1.0);
    assert!(matches!(normalize_context(raw), Err(FunctionalError::Divergent(_))));
}

#[test]
fn flat_constant_values() {
    for chi in [0.5, 1.0, 2.0] {
        let c = ctx(&flat(), "0", chi);
        let r = evaluate(&c).unwrap();
        let f0 = VOL_T4.ln() - 2.0 * (4.0 * PI * chi).ln();
        assert!((r.f0 - f0).abs() < 1e-12);
        for form in [Form::Standard, Form::Spectral] {
            let v = r.form(form);
            assert!(v.f.abs() <= 1e-12);
            assert!((v.w - (f0 - 4.0)).abs() < 1e-10);
            assert!((v.average_energy - 2.0 * chi).abs() < 1e-10);
            assert!((v.entropy - (4.0 - f0)).abs() < 1e-10);
        }
        assert!((r.fluctuation - 2.0).abs() < 1e-10);
        assert!((r.log_partition - (2.0 - f0)).abs() < 1e-10);
    }
    let r = evaluate(&ctx(&flat(), "0", 1.0)).unwrap();
    assert!((r.log_partition - (2.0 - (VOL_T4).ln() + 2.0 * (4.0 * PI).ln())).abs() < 1e-10);
}

#[test]
fn doubling_chi_shifts_normalization() {
    let a = evaluate(&ctx(&flat(), "0", 1.0)).unwrap();
    let b = evaluate(&ctx(&flat(), "0", 2.0)).unwrap();
    // f0(2 chi) = f0(chi) - (n+m)/2 ln 2
    assert!((b.f0 - (a.f0 - 2.0 * 2f64.ln())).abs() < 1e-12);
    assert!((b.standard.w - (a.standard.w - 2.0 * 2f64.ln())).abs() < 1e-10);
    assert!((b.log_partition - (a.log_partition + 2.0 * 2f64.ln())).abs() < 1e-10);
}

#[test]
fn sphere_torus_constant_values() {
    for chi in [0.5, 1.0, 1.5] {
        let r = evaluate(&ctx(&sphere_product(1.0), "0", chi)).unwrap();
        let f0 = VOL_S2T2.ln() - 2.0 * (4.0 * PI * chi).ln();
        assert!((r.f0 - f0).abs() < 1e-9, "{} vs {f0}", r.f0);
        let s = &r.standard;
        assert!((s.f - 2.0 * (-f0).exp() * VOL_S2T2).abs() < 1e-8 * s.f);
        assert!((s.w - (2.0 * chi + f0 - 4.0)).abs() < 1e-8);
        assert!((s.average_energy - (2.0 * chi - 2.0 * chi * chi)).abs() < 1e-8);
        assert!((s.entropy + (2.0 * chi + f0 - 4.0)).abs() < 1e-8);
        // constant f: sR(e^{-f} g) = e^f sR in both conformal modes
        assert!((r.spectral.f - 2.0 * VOL_S2T2).abs() < 1e-8 * r.spectral.f);
        assert!(r.resolved);
    }
}

#[test]
fn literal_conformal_mode_agrees_for_constant_f() {
    let case = sphere_product(1.0);
    let a = evaluate(&ctx(&case, "0", 1.0)).unwrap();
    let raw = FunctionalContext::new(case.g.clone(), case.nc.clone(), psi(&case, "0"), 1.0).with_conformal(ConformalMode::Literal);
    let b = evaluate(&normalize_context(raw).unwrap()).unwrap();
    assert!((a.spectral.f - b.spectral.f).abs() < 1e-9 * a.spectral.f);
    assert_ne!(a.context_hash, b.context_hash);
}

#[test]
fn flat_gradient_functional_matches_line_oracle() {
    let eps = 0.3;
    let c = ctx(&flat(), &format!("{eps}*sin(x1)"), 1.0);
    let z = trap(|x| (-eps * x.sin()).exp()) * 8.0 * PI * PI * PI;
    let f0 = z.ln() - 2.0 * (4.0 * PI).ln();
    assert!((c.f0 - f0).abs() < 1e-12);
    let oracle = (-f0).exp() * trap(|x| (-eps * x.sin()).exp() * eps * eps * x.cos().powi(2)) * 8.0 * PI * PI * PI;
    let r = evaluate(&c).unwrap();
    assert!((r.standard.f - oracle).abs() <= 1e-8 * oracle, "{} vs {oracle}", r.standard.f);
}

#[test]
fn entropy_gradient_sign() {
    let (eps, chi) = (0.2, 0.8);
    let r = evaluate(&ctx(&flat(), &format!("{eps}*sin(x1)"), chi)).unwrap();
    // S + W = 6 chi * integral of mu e^f |Df|^2 dV
    let expect = 6.0 * chi * (4.0 * PI * chi).powi(-2) * eps * eps * PI * 8.0 * PI * PI * PI;
    let got = r.spectral.entropy + r.spectral.w;
    assert!((got - expect).abs() < 1e-10, "{got} vs {expect}");
    assert!((r.standard.entropy + r.standard.w).abs() < 1e-12);
}

#[test]
fn einstein_soliton_tuning_has_no_fluctuation() {
    // R_ij = g_ij / rho^2 = g_ij / (2 chi) at chi = rho^2 / 2
    for rho in [1.0, 1.5] {
        let r = evaluate(&ctx(&einstein(rho), "0", rho * rho / 2.0)).unwrap();
        assert!(r.fluctuation.abs() < 1e-9, "{}", r.fluctuation);
        let off = evaluate(&ctx(&einstein(rho), "0", rho * rho)).unwrap();
        assert!(off.fluctuation > 0.1);
    }
}

#[test]
fn constant_f_identities() {
    for case in [sphere_product(1.3), einstein(1.0), twisted(0.3)] {
        let r = evaluate(&ctx(&case, "0", 0.9)).unwrap();
        let s = &r.standard;
        assert!((s.w - (0.9 * r.mean_scalar + r.f0 - 4.0)).abs() <= 1e-10, "{}", case.name);
        assert!((s.entropy + s.w).abs() <= 1e-10);
    }
}

#[test]
fn shifting_psi_is_absorbed() {
    let case = twisted(0.3);
    let a = evaluate(&ctx(&case, "0.2*sin(x1)*cos(y3)", 1.1)).unwrap();
    let b = evaluate(&ctx(&case, "0.2*sin(x1)*cos(y3) + 1.7", 1.1)).unwrap();
    assert!((a.f0 - b.f0 - 1.7).abs() < 1e-12);
    for form in [Form::Standard, Form::Spectral] {
        let (x, y) = (a.form(form), b.form(form));
        for (p, q) in [(x.w, y.w), (x.average_energy, y.average_energy), (x.entropy, y.entropy)] {
            assert!((p - q).abs() <= 1e-10, "{p} vs {q}");
        }
        // F carries e^{-f} without the chi factor: invariant as well
        assert!((x.f - y.f).abs() <= 1e-10 * x.f.abs().max(1.0));
    }
    assert!((a.log_partition - b.log_partition).abs() <= 1e-10);
    assert!((a.fluctuation - b.fluctuation).abs() <= 1e-10);
}

#[test]
fn connection_switch_on_holonomic_grid() {
    let case = sphere_product(1.0);
    let (g, nc) = gridded(&case, true);
    let grid_psi = Field::Grid(psi(&case, "0.1*cos(x1)").to_grid(&case.chart, true).unwrap());
    let mk = |kind| normalize_context(FunctionalContext::new(g.clone(), nc.clone(), grid_psi.clone(), 1.0).with_connection(kind)).unwrap();
    let a = evaluate(&mk(ConnectionKind::Canonical)).unwrap();
    let b = evaluate(&mk(ConnectionKind::LeviCivita)).unwrap();
    assert_eq!(a.quadrature, "grid");
    for (p, q) in [
        (a.standard.f, b.standard.f),
        (a.standard.w, b.standard.w),
        (a.standard.entropy, b.standard.entropy),
        (a.fluctuation, b.fluctuation),
    ] {
        assert!((p - q).abs() <= 1e-6, "{p} vs {q}");
    }
    // e^{-f} h picks up horizontal dependence, so the rescaled scalars differ
    assert!((a.spectral.w - b.spectral.w).abs() > 1e-4);
}

#[test]
fn grid_and_closed_form_agree() {
    let case = build("flat-16", torus4(16), &["1", "0", "0", "1"], &["1", "0", "0", "1"], &["0", "0", "0", "0"], &[]);
    let src = "0.3*sin(x1)*cos(y4)";
    let a = evaluate(&ctx(&case, src, 1.0)).unwrap();
    let (g, nc) = gridded(&case, false);
    let grid_psi = Field::Grid(psi(&case, src).to_grid(&case.chart, false).unwrap());
    let b = evaluate(&normalize_context(FunctionalContext::new(g, nc, grid_psi, 1.0)).unwrap()).unwrap();
    assert!((a.f0 - b.f0).abs() < 1e-10);
    // order-4 differences at 16 samples: about 1e-3 relative on |Df|^2
    for (p, q) in [(a.standard.f, b.standard.f), (a.standard.w, b.standard.w), (a.spectral.entropy, b.spectral.entropy), (a.fluctuation, b.fluctuation)] {
        assert!((p - q).abs() < 3e-3 * p.abs(), "{p} vs {q}");
    }
}

#[test]
fn report_is_reproducible() {
    let case = generic();
    let opts = QuadratureOptions { periodic_nodes: 6, ..QuadratureOptions::default() };
    let raw = FunctionalContext::new(case.g.clone(), case.nc.clone(), psi(&case, "0.1*sin(x1 + y3)"), 1.0).with_quadrature(opts);
    let c = normalize_context(raw).unwrap();
    let (a, b) = (evaluate(&c).unwrap(), evaluate(&c).unwrap());
    assert_eq!(a, b);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.context_hash.len(), 64);
}

fn chis() -> Vec<f64> {
    (0..7).map(|k| 0.5 + 0.25 * k as f64).collect()
}

#[test]
fn thermodynamics_flat_family() {
    let t = thermo_consistency(&ctx(&flat(), "0", 1.0), &chis(), Form::Standard).unwrap();
    assert_eq!(t.beta, "1/chi");
    assert!(t.max_rel_energy_residual <= 1e-5, "{}", t.max_rel_energy_residual);
    assert!(t.max_entropy_residual <= 1e-8);
    for row in &t.rows {
        // second beta derivative of log Z is 2 chi^2, the integral formula gives 2
        assert!((row.fluctuation - 2.0).abs() < 1e-10);
        assert!((row.fluctuation_from_partition - 2.0 * row.chi * row.chi).abs() < 1e-4);
    }
}

#[test]
fn thermodynamics_sphere_torus_family() {
    let t = thermo_consistency(&ctx(&sphere_product(1.0), "0", 1.0), &chis(), Form::Standard).unwrap();
    assert!(t.max_entropy_residual <= 1e-8);
    // -d log Z/d beta misses the curvature part: E - chi^2 dlogZ = -2 chi^2
    for row in &t.rows {
        assert!((row.average_energy - row.energy_from_partition + 2.0 * row.chi * row.chi).abs() < 1e-6);
    }
}

#[test]
fn degenerate_family_is_rejected() {
    let c = ctx(&flat(), "0", 1.0);
    assert!(matches!(thermo_consistency(&c, &[1.0], Form::Standard), Err(FunctionalError::Precondition(_))));
    assert!(matches!(thermo_consistency(&c, &[1.0, 1.0], Form::Standard), Err(FunctionalError::Precondition(_))));
}

#[test]
fn average_energy_vanishes_linearly_at_small_chi() {
    for chi in [1e-2, 1e-3] {
        let e = average_energy(&ctx(&flat(), "0", chi), Form::Standard).unwrap();
        assert!((e / chi - 2.0).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn fluctuation_nonnegative_and_f_positive(a in -0.5f64..0.5, b in -0.5f64..0.5, chi in 0.3f64..2.0) {
        let case = sphere_product(1.0);
        let r = evaluate(&ctx(&case, &format!("{a}*cos(x1) + {b}*sin(x2)"), chi)).unwrap();
        prop_assert!(r.fluctuation >= 0.0);
        // sR = 2 > 0 pointwise
        prop_assert!(r.standard.f > 0.0);
        prop_assert!((r.mass - 1.0).abs() < 1e-10);
    }
}
