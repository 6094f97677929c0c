//! End-to-end checks tying families, solvers and identities together.

use nalgebra::{DMatrix, DVector};

use fibercurv::bundle::{einstein_residual, oracle_blocks, residual_study, ricci_blocks};
use fibercurv::families::{
    conformal_base, flat_product, kasner, power_law, random_bundle, semiflat, Conformal,
    FamilySpec, RandomParams,
};
use fibercurv::grid::{
    field_norms, field_norms_on_region, inset_box, refinement_difference, Chart, FdConfig,
    TensorField,
};
use fibercurv::identities::{
    check_kahler_potential, check_ricci_form, fit_twist_mixed, order_estimate, twist_density,
    KahlerInput,
};
use fibercurv::solver::{integrate_base_ode, solve_semiflat_conformal, EllipticOptions, OdeBranch, OdeProblem};
use fibercurv::tau::{ComplexChartData, TauSpec, HOLOMORPHY_TOL};

fn sup_diff(a: &TensorField, b: &TensorField) -> f64 {
    field_norms(&a.sub(b).unwrap()).unwrap().sup
}

#[test]
fn block_formulas_track_generic_oracle_under_refinement() {
    let cfg = FdConfig::fourth();
    for (n, big_n) in [(1, 3), (2, 2), (3, 1)] {
        let d = |p: usize| {
            let c = Chart::new(&vec![(0.0, 1.0); n], &vec![p; n]).unwrap();
            let bm = random_bundle(3, big_n, &c, &RandomParams::default()).unwrap();
            let (b, o) = (ricci_blocks(&bm, &cfg).unwrap(), oracle_blocks(&bm, &cfg).unwrap());
            [
                sup_diff(&b.fiber, &o.fiber),
                sup_diff(&b.mixed, &o.mixed),
                sup_diff(&b.base, &o.base),
                sup_diff(&b.scalar, &o.scalar),
            ]
        };
        let (coarse, fine) = (d(17), d(33));
        for (c, f) in coarse.iter().zip(&fine) {
            assert!(c / f > 8.0, "(n={n}, N={big_n}) {c:e} -> {f:e}");
        }
    }
}

#[test]
fn second_order_stencils_converge_at_second_order() {
    let cfg = FdConfig::second();
    let sup = |p: usize| {
        let c = Chart::new(&[(0.0, 1.0), (0.0, 1.0)], &[p, p]).unwrap();
        let bm = random_bundle(5, 2, &c, &RandomParams::default()).unwrap();
        let (b, o) = (ricci_blocks(&bm, &cfg).unwrap(), oracle_blocks(&bm, &cfg).unwrap());
        sup_diff(&b.base, &o.base)
    };
    let o = order_estimate(sup(17), sup(33)).unwrap();
    assert!((o - 2.0).abs() < 0.4, "{o}");
}

#[test]
fn flat_product_in_every_shape() {
    for (n, big_n) in [(1, 1), (1, 3), (2, 2), (3, 1), (3, 3)] {
        let c = Chart::new(&vec![(0.0, 1.0); n], &vec![9; n]).unwrap();
        let r = einstein_residual(&flat_product(big_n, &c).unwrap(), 0.0, &FdConfig::fourth()).unwrap();
        assert_eq!(r.max_sup(), 0.0);
    }
}

#[test]
fn integrated_ode_trajectory_is_ricci_flat() {
    let a: DMatrix<f64> = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 0.5, 0.5, 0.0, 0.5, 0.5]);
    assert!((a.trace() - 2.0).abs() < 1e-15 && ((&a * &a).trace() - 4.0).abs() > 1.0);
    // A traceless-square violation gives a non-Einstein trajectory; the
    // Kasner matrix from the family gives an Einstein one.
    let kasner_a = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0 / 3.0, 4.0 / 3.0, -2.0 / 3.0]));
    for (mat, einstein) in [(kasner_a, true), (a, false)] {
        let sol = integrate_base_ode(&OdeProblem {
            s0: 1.0,
            s1: 2.0,
            g0: DMatrix::identity(3, 3),
            gs0: mat.clone(),
            step: 1.0 / 256.0,
            branch: OdeBranch::QuadraticDet,
        })
        .unwrap();
        let g = sol.fiber_field().unwrap();
        let chart = g.chart().clone();
        let closed = power_law(&mat, &chart).unwrap();
        let dev = sup_diff(&g, closed.fiber_metric());
        assert!(dev < 1e-8, "{dev}");
        let r = einstein_residual(&closed, 0.0, &FdConfig::fourth()).unwrap();
        if einstein {
            assert!(r.max_sup() < 1e-6, "{r:?}");
            assert!(kasner(&mat, &chart).is_ok());
        } else {
            assert!(r.max_sup() > 1e-2, "{r:?}");
            assert!(kasner(&mat, &chart).is_err());
        }
    }
}

#[test]
fn semiflat_exp_tau_closed_loop() {
    let cfg = FdConfig::fourth();
    let tau = TauSpec::Exp;
    let level = |p: usize| {
        let c = Chart::new(&[(-0.5, 0.5), (0.5, 1.5)], &[p, p]).unwrap();
        let data = ComplexChartData::from_spec(&tau, &c).unwrap();
        let sol = solve_semiflat_conformal(&data, &EllipticOptions::default(), &cfg).unwrap();
        let rf = check_ricci_form(&data, &conformal_base(&sol.phi).unwrap(), &cfg).unwrap();
        let bm = semiflat(&data, &sol.phi, HOLOMORPHY_TOL, &cfg).unwrap();
        (c, rf, bm)
    };
    let (c, rf_c, bm_c) = level(33);
    let (_, rf_f, bm_f) = level(65);
    let (lo, hi) = inset_box(&c, 0.25);
    let e_c = field_norms_on_region(&rf_c.residual().unwrap(), &lo, &hi).unwrap().sup;
    let e_f = field_norms_on_region(&rf_f.residual().unwrap(), &lo, &hi).unwrap().sup;
    assert!(order_estimate(e_c, e_f).unwrap() > 3.5, "{e_c:e} {e_f:e}");

    let reports = residual_study(&[bm_c.clone(), bm_f], 0.0, &cfg, Some((lo, hi))).unwrap();
    for (a, b) in reports[0].block_sups().iter().zip(reports[1].block_sups()) {
        if *a > 1e-10 {
            assert!(a / b > 12.0, "{a:e} -> {b:e}");
        }
    }
    let tw = twist_density(&bm_c, &cfg).unwrap();
    assert_eq!(tw.dt_sup, 0.0);
}

#[test]
fn family_spec_solve_matches_direct_pipeline() {
    let cfg = FdConfig::fourth();
    let c = Chart::new(&[(-1.0, 1.0), (1.0, 2.0)], &[17, 17]).unwrap();
    let spec: FamilySpec = serde_json::from_str(
        r#"{"name": "semiflat", "tau": {"kind": "identity"}, "conformal": {"kind": "solve"}}"#,
    )
    .unwrap();
    assert!(matches!(spec, FamilySpec::Semiflat { conformal: Conformal::Solve { .. }, .. }));
    let from_spec = spec.build(&c, &cfg).unwrap();
    let data = ComplexChartData::from_spec(&TauSpec::Identity, &c).unwrap();
    let phi = solve_semiflat_conformal(&data, &EllipticOptions::default(), &cfg).unwrap().phi;
    let direct = semiflat(&data, &phi, HOLOMORPHY_TOL, &cfg).unwrap();
    assert_eq!(from_spec.base().field().values(), direct.base().field().values());
    assert_eq!(spec.default_region(&c), Some((vec![-0.5, 1.25], vec![0.5, 1.75])));
}

#[test]
fn deformed_tau_is_rejected_everywhere() {
    let cfg = FdConfig::fourth();
    let c = Chart::new(&[(-1.0, 1.0), (1.0, 2.0)], &[17, 17]).unwrap();
    let data = ComplexChartData::from_spec(&TauSpec::Deformed { epsilon: 0.3 }, &c).unwrap();
    assert!(solve_semiflat_conformal(&data, &EllipticOptions::default(), &cfg).is_err());
    let spec = FamilySpec::Semiflat {
        tau: TauSpec::Deformed { epsilon: 0.3 },
        conformal: Conformal::Zero,
    };
    assert!(spec.build(&c, &cfg).is_err());
}

fn kahler_chart(points: usize) -> Chart {
    Chart::new(&[(-0.3, 0.3), (0.6, 1.2), (0.0, 0.5), (0.0, 0.5)], &[points; 4]).unwrap()
}

#[test]
fn kahler_potential_exp_tau_converges() {
    let cfg = FdConfig::fourth();
    let input = KahlerInput {
        tau: &TauSpec::Exp,
        potential: &|b: &[f64]| 0.5 * (b[0] * b[0] + b[1] * b[1]),
        base_form: &|_: &[f64]| 1.0,
        perturbation: 0.0,
    };
    let coarse = check_kahler_potential(&input, &kahler_chart(11), &cfg).unwrap();
    let fine = check_kahler_potential(&input, &kahler_chart(21), &cfg).unwrap();
    let r = coarse.potential.compare(&fine.potential, "kahler", &cfg).unwrap();
    assert!(r.passed(), "{r:?}");
    assert!(r.residual.sup < 1e-9, "{r:?}");
    let closed = coarse.closedness.compare(&fine.closedness, "closed", &cfg).unwrap();
    assert!(closed.passed(), "{closed:?}");
}

#[test]
fn kahler_perturbation_residual_is_linear() {
    let cfg = FdConfig::fourth();
    let res = |eps: f64| {
        let input = KahlerInput {
            tau: &TauSpec::Identity,
            potential: &|b: &[f64]| 0.5 * (b[0] * b[0] + b[1] * b[1]),
            base_form: &|_: &[f64]| 1.0,
            perturbation: eps,
        };
        let k = check_kahler_potential(&input, &kahler_chart(11), &cfg).unwrap();
        field_norms(&k.potential.residual().unwrap()).unwrap().sup
    };
    assert!(res(0.0) < 1e-12);
    let (a, b) = (res(1e-3), res(2e-3));
    assert!(a > 1e-5);
    assert!((b / a - 2.0).abs() < 1e-6, "{a:e} {b:e}");
}

#[test]
fn twist_fit_rejects_empty_and_non_surface_input() {
    assert!(fit_twist_mixed(&[], &FdConfig::fourth()).is_err());
    let c = Chart::new(&[(0.0, 1.0)], &[17]).unwrap();
    let bm = random_bundle(1, 2, &c, &RandomParams::default()).unwrap();
    assert!(fit_twist_mixed(&[bm], &FdConfig::fourth()).is_err());
}

#[test]
fn random_einstein_violation_moves_twist_density() {
    let c = Chart::new(&[(0.0, 1.0), (0.0, 1.0)], &[17, 17]).unwrap();
    let bm = random_bundle(11, 2, &c, &RandomParams::default()).unwrap();
    let tw = twist_density(&bm, &FdConfig::fourth()).unwrap();
    assert!(tw.dt_sup > 1e-2);
    let fine = random_bundle(11, 2, &c.refined(), &RandomParams::default()).unwrap();
    let twf = twist_density(&fine, &FdConfig::fourth()).unwrap();
    // converges to a nonzero field rather than to zero
    assert!(refinement_difference(&tw.dt, &twf.dt).unwrap() < 1e-3 * tw.dt_sup.max(1.0) * 10.0);
}
