//! Property tests for the invariants of the model, the integrator, both
//! certificate families and the tuner.

mod common;

use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use common::random_history;
use delaycert::bench::{build_example, compare, preset, reproduce_table, CompareConfig, ExampleSpec};
use delaycert::integrator::{default_step, integrate, integrate_streaming};
use delaycert::krasovskii::{mixed_power_l1, even_power_l1, solve_delta_krasovskii, KrasovskiiCertificate};
use delaycert::model::{estimate_growth_constants_with, validate_lyapunov, GrowthSampling};
use delaycert::power::Exponent;
use delaycert::razumikhin::{compute_kappa_k, solve_delta_razumikhin, RazumikhinCertificate, RazumikhinParams};
use delaycert::tuner::{tune, TuningMethod, TuningProblem, TuningTarget};
use delaycert::DelaySystem;

fn ex1(alpha1: f64, alpha2: f64, h: f64) -> DelaySystem {
    build_example(&ExampleSpec::Ex1 { alpha1, alpha2, h }).unwrap()
}

fn ex2(mu: i64, zeta: f64, h: f64) -> DelaySystem {
    build_example(&ExampleSpec::Ex2 { mu: Exponent::integer(mu), zeta, h }).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn polynomial_rhs_is_homogeneous(
        c in 0.01f64..50.0,
        x in prop::collection::vec(-3.0f64..3.0, 2),
        y in prop::collection::vec(-3.0f64..3.0, 2),
        zeta in 0.01f64..0.24,
    ) {
        let s = ex2(3, zeta, 1.0);
        let fx = s.rhs.eval(&x, &y).unwrap();
        let norm = fx.iter().map(|v| v * v).sum::<f64>().sqrt();
        let defect = s.rhs.homogeneity_defect(c, &x, &y).unwrap();
        prop_assert!(defect <= 1e-9 * (1.0 + c.powf(3.0)) * norm.max(1e-300) + 1e-300);

        let s = ex1(-1.0, zeta, 10.0);
        let fx = s.rhs.eval(&x[..1], &y[..1]).unwrap();
        let defect = s.rhs.homogeneity_defect(c, &x[..1], &y[..1]).unwrap();
        prop_assert!(defect <= 1e-9 * (1.0 + c.powf(3.0)) * fx[0].abs() + 1e-300);
    }

    #[test]
    fn razumikhin_delta_monotone(
        delta in 1e-4f64..0.04,
        bump in 1.01f64..2.0,
        m in 0.2f64..3.0,
        h in 0.1f64..20.0,
    ) {
        let lc = ex1(-1.0, 0.5, 10.0).lyapunov.constants;
        let solve = |m: f64, h: f64, delta: f64| {
            let (kappa, big_k) = compute_kappa_k(&lc, m, h, 3.0, delta);
            let d = solve_delta_razumikhin(m, h, 3.0, kappa, big_k, delta);
            let target = kappa * delta / big_k;
            assert!((d + m * h * d.powi(3) - target).abs() < 1e-12 * target);
            d
        };
        let base = solve(m, h, delta);
        prop_assert!(solve(m, h, delta * bump) > base);
        prop_assert!(solve(m * bump, h, delta) < base);
        prop_assert!(solve(m, h * bump, delta) < base);
    }

    #[test]
    fn krasovskii_delta_monotone(
        a1 in 0.01f64..2.0,
        beta in 0.01f64..100.0,
        delta in 1e-4f64..0.5,
        bump in 1.01f64..2.0,
        gamma in 2.0f64..4.0,
        mu in 1.2f64..5.0,
    ) {
        let d = solve_delta_krasovskii(1.0, beta, a1, delta, gamma, mu);
        let target = a1 * delta.powf(gamma);
        prop_assert!((d.powf(gamma) + beta * d.powf(gamma + mu - 1.0) - target).abs() < 1e-12 * target);
        prop_assert!(solve_delta_krasovskii(1.0, beta, a1 * bump, delta, gamma, mu) > d);
        prop_assert!(solve_delta_krasovskii(1.0, beta * bump, a1, delta, gamma, mu) < d);
    }

    #[test]
    fn razumikhin_certificate_invariants(
        alpha1 in -3.0f64..-0.2,
        ratio in -0.9f64..0.9,
        h in 0.1f64..20.0,
        frac in 0.05f64..0.999,
        alpha in 1.2f64..4.0,
    ) {
        let s = ex1(alpha1, ratio * alpha1.abs(), h);
        let first = RazumikhinCertificate::build(&s, &RazumikhinParams { alpha: Some(alpha), delta: None, rho: None }).unwrap();
        let cert = RazumikhinCertificate::build(
            &s,
            &RazumikhinParams { alpha: Some(alpha), delta: Some(frac * first.big_h), rho: None },
        ).unwrap();
        prop_assert!(cert.check().is_ok());
        prop_assert!(cert.delta > 0.0 && cert.delta < cert.big_h);
        prop_assert!(cert.k5 > 0.0);
        prop_assert!(cert.root_residual() < 1e-12);
        prop_assert!(cert.rho_conditions().holds());
        prop_assert!(((cert.a - cert.delta / cert.big_delta) / cert.a).abs() < 1e-9);
        prop_assert!(cert.c1 >= cert.a);
    }

    #[test]
    fn krasovskii_certificate_invariants(
        alpha1 in -3.0f64..-0.2,
        ratio in -0.9f64..0.9,
        h in 0.1f64..20.0,
    ) {
        let s = ex1(alpha1, ratio * alpha1.abs(), h);
        for path in [None, Some(delaycert::krasovskii::KrasovskiiPath::General)] {
            let cert = KrasovskiiCertificate::build(&s, &delaycert::krasovskii::KrasovskiiParams { path, ..Default::default() }).unwrap();
            prop_assert!(cert.check().is_ok());
            prop_assert!(cert.root_residual() < 1e-12);
            prop_assert!(((cert.c1_hat - cert.delta / cert.big_delta) / cert.c1_hat).abs() < 1e-9);
            let w = &cert.weights;
            prop_assert!(w.w0 > 0.0);
            prop_assert!((w.w0 + w.w1 + h * w.w2 - s.lyapunov.constants.w).abs() <= 1e-12 * s.lyapunov.constants.w);
        }
    }

    #[test]
    fn power_constants_are_ordered_where_provable(k in 2u32..6, h in 1.0f64..50.0) {
        // the even-power constant is the smaller one exactly when (1 + 1/h)^(k-1) <= 2.
        let k = k as f64;
        let even = even_power_l1(k, h).unwrap();
        let mixed = mixed_power_l1(2.0 * k, 2.0, h).unwrap();
        let provable = (1.0 + 1.0 / h).powf(k - 1.0) <= 2.0;
        prop_assert_eq!(even <= mixed * (1.0 + 1e-12), provable || (even - mixed).abs() <= 1e-12 * mixed);
    }
}

#[test]
fn even_power_constant_can_exceed_mixed_power_at_unit_delay() {
    // k = 3, h = 1: 2 * 2^2 = 8 against (2 * 1)^2 = 4.
    assert_relative_eq!(even_power_l1(3.0, 1.0).unwrap(), 8.0);
    assert_relative_eq!(mixed_power_l1(6.0, 2.0, 1.0).unwrap(), 4.0);
    // k = 2 is always ordered for h >= 1
    for h in [1.0, 1.5, 10.0, 100.0] {
        assert!(even_power_l1(2.0, h).unwrap() <= mixed_power_l1(4.0, 2.0, h).unwrap());
    }
}

#[test]
fn example_lyapunov_inequalities_hold() {
    for s in [ex1(-1.0, 0.5, 10.0), ex1(-2.0, -1.0, 1.0), ex2(3, 0.1, 1.0), ex2(5, 0.05, 1.0)] {
        let report = validate_lyapunov(&s.lyapunov, &s.rhs, 100_000).unwrap();
        assert!(report.passes(), "{report:?}");
    }
}

#[test]
fn growth_estimate_monotone_and_certifying() {
    for s in [ex1(-1.0, 0.5, 10.0), ex2(3, 0.1, 1.0)] {
        let at = |safety_factor: f64| {
            estimate_growth_constants_with(
                &s.rhs,
                &GrowthSampling { samples: 10_000, safety_factor, skip: 0 },
            )
            .unwrap()
        };
        let (lo, hi) = (at(1.0), at(1.05));
        assert!(lo.m <= hi.m && lo.m1 <= hi.m1 && lo.m2 <= hi.m2);
        let fresh = hi.check(&s.rhs, 10_000, 1_000_003).unwrap();
        assert!(fresh.f <= 1.0 && fresh.dfdx <= 1.0 && fresh.dfdy <= 1.0, "{fresh:?}");
        // the analytic constants of the examples certify as well
        let analytic = s.growth.check(&s.rhs, 10_000, 7).unwrap();
        assert!(analytic.f <= 1.0 + 1e-12 && analytic.dfdx <= 1.0 + 1e-12 && analytic.dfdy <= 1.0 + 1e-12);
    }
}

#[test]
fn trajectories_are_bit_reproducible() {
    let s = ex2(3, 0.1, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let phi = random_history(&mut rng, 1.0, 2, 5e-4, 1000);
    let a = integrate(&s.rhs, &phi, 50.0, default_step(1.0)).unwrap();
    let b = integrate(&s.rhs, &phi, 50.0, default_step(1.0)).unwrap();
    for i in 0..a.len() {
        assert_eq!(a.state(i), b.state(i));
    }
}

/// Random admissible histories stay inside the delta-ball and below both
/// envelopes over `[0, 1e4 h]`.
#[test]
fn envelopes_dominate_random_admissible_solutions() {
    let cases: Vec<(u8, f64, u64)> = (0..10)
        .map(|i| (2u8, 0.05, i))
        .chain((0..10).map(|i| (3u8, 0.01, 100 + i)))
        .collect();
    let failures: Vec<String> = cases
        .par_iter()
        .filter_map(|&(table, step, seed)| {
            let p = preset(table).unwrap();
            let s = build_example(&p.example).unwrap();
            let lk = KrasovskiiCertificate::build(&s, &p.krasovskii).unwrap();
            let lr = RazumikhinCertificate::build(&s, &p.razumikhin).unwrap();
            let h = s.delay();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = lk.big_delta.min(lr.big_delta) * rng.gen_range(0.05..0.999);
            let phi = random_history(&mut rng, h, s.rhs.dim(), r, (h / step).round() as usize);
            let norm = phi.sup_norm();
            let (lr_curve, lk_curve) = (lr.curve(), lk.curve());
            let mut bad = None;
            let radius = lk.delta.min(lr.delta);
            integrate_streaming(&s.rhs, &phi, 1e4 * h, step, |node| {
                if bad.is_some() {
                    return;
                }
                let x = node.x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if x > radius {
                    bad = Some(format!("left the delta-ball at t = {}", node.t));
                } else if x > lr_curve.bound(norm, node.t) || x > lk_curve.bound(norm, node.t) {
                    bad = Some(format!("above an envelope at t = {}", node.t));
                }
            })
            .unwrap();
            bad.map(|b| format!("table {table} seed {seed}: {b}"))
        })
        .collect();
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn comparison_reports_both_identities() {
    for ex in [ExampleSpec::ex1(), ExampleSpec::ex2()] {
        let mut cfg = CompareConfig::reference(&ex).unwrap();
        cfg.horizon = Some(100.0 * ex.delay());
        let rep = compare(&ex, &cfg).unwrap();
        assert!(rep.krasovskii_identity < 1e-9, "{}", rep.krasovskii_identity);
        assert!(rep.razumikhin_identity < 1e-9, "{}", rep.razumikhin_identity);
    }
}

#[test]
fn table_reproduction_is_deterministic() {
    for t in 1..=3 {
        let mut a = Vec::new();
        let mut b = Vec::new();
        reproduce_table(t).unwrap().write_csv(&mut a, true).unwrap();
        reproduce_table(t).unwrap().write_csv(&mut b, true).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn tuner_replays_and_beats_grid() {
    let s = ex1(-1.0, 0.5, 10.0);
    for method in [TuningMethod::Razumikhin, TuningMethod::KrasovskiiGeneral] {
        let mut problem = TuningProblem::new(TuningTarget::MaximizeDelta, method);
        problem.budget = 1500;
        problem.seed = 42;
        let a = tune(&s, &problem).unwrap();
        let b = tune(&s, &problem).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(a.score >= a.grid_score);
        assert!(a.certificate.big_delta() > 0.0);
        match &a.certificate {
            delaycert::tuner::TunedCertificate::Razumikhin(c) => assert!(c.check().is_ok()),
            delaycert::tuner::TunedCertificate::Krasovskii(c) => assert!(c.check().is_ok()),
        }
    }
}

/// The tuned Krasovskii certificate must still satisfy the functional
/// bounds along solutions starting inside its radius.
#[test]
fn tuned_certificate_survives_simulation() {
    use delaycert::krasovskii::{functional_derivative_trace, sandwich, Functional};
    use delaycert::tuner::TunedCertificate;

    let s = ex1(-1.0, 0.5, 10.0);
    let problem = TuningProblem::new(TuningTarget::MaximizeDelta, TuningMethod::KrasovskiiScalar);
    let result = tune(&s, &problem).unwrap();
    let TunedCertificate::Krasovskii(cert) = result.certificate else { panic!("wrong family") };
    let f = Functional::new(&s, &cert);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let r = cert.delta * rng.gen_range(0.01..1.0);
        let phi = random_history(&mut rng, 10.0, 1, r, 200);
        let w = sandwich(&f, &cert, &phi).unwrap();
        assert!(w.holds(1e-8 * w.upper_b.min(w.upper_beta)), "{w:?}");
    }
    for _ in 0..5 {
        let r = cert.big_delta * rng.gen_range(0.5..0.999);
        let phi = random_history(&mut rng, 10.0, 1, r, 1000);
        let traj = integrate(&s.rhs, &phi, 200.0, 0.01).unwrap();
        let trace = functional_derivative_trace(&traj, &cert, &f, 25).unwrap();
        let scale = trace.power_bound.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(trace.holds(1e-8 * scale), "worst excess {}", trace.worst_excess());
        let norm = phi.sup_norm();
        let curve = cert.curve();
        for i in 0..traj.len() {
            let x = traj.state(i)[0].abs();
            assert!(x <= curve.bound(norm, traj.time(i)));
        }
    }
}
