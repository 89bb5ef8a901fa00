use std::f64::consts::PI;

use peakonlab::curve_flows::*;
use peakonlab::peakon_dynamics::*;
use peakonlab::phase_plane::*;
use peakonlab::wave_builder::*;
use peakonlab::weak_verifier::*;
use proptest::prelude::*;

fn cheap() -> ProptestConfig {
    ProptestConfig {
        cases: 24,
        ..ProptestConfig::default()
    }
}

proptest! {
    #[test]
    fn level_samples_lie_on_their_level(k in -1.5f64..1.5, c in -2.0f64..3.0, g in -2.0f64..2.0, h in -3.0f64..6.0) {
        let p = ModelParams::line(k, c, g);
        for s in sample_level_set(&p, h, 40, 4.0) {
            let hv = hamiltonian(&p, PhasePoint::new(s.phi, s.v));
            let scale = 1.0 + s.phi.powi(4) + s.v.powi(4) + h.abs();
            prop_assert!((hv - h).abs() <= 1e-9 * scale, "H = {hv} on level {h} at {:?}", s);
        }
    }

    #[test]
    fn branches_are_even_for_zero_g(k in -1.5f64..1.5, c in -2.0f64..3.0, h in -3.0f64..6.0, phi in -3.0f64..3.0) {
        let p = ModelParams::line(k, c, 0.0);
        for b in [Branch::Plus, Branch::Minus] {
            let l = branch_value(&p, h, b, phi);
            let r = branch_value(&p, h, b, -phi);
            prop_assert_eq!(l.is_ok(), r.is_ok());
            if let (Ok(l), Ok(r)) = (l, r) {
                prop_assert!((l - r).abs() <= 1e-12 * (1.0 + l.abs()));
            }
        }
    }

    #[test]
    fn critical_points_are_stationary(k in -1.5f64..1.5, c in -2.0f64..3.0, g in -2.0f64..2.0) {
        let p = ModelParams::line(k, c, g);
        for cp in classify_critical_points(&p) {
            let (a, b) = gradient(&p, cp.location);
            let s = 1.0 + cp.location.phi.abs().powi(3) + g.abs();
            prop_assert!(a.abs() <= 1e-9 * s && b.abs() <= 1e-9 * s, "{:?}: {a} {b}", cp);
        }
    }

    #[test]
    fn patched_joints_satisfy_kinematic_condition(k in prop::sample::select(vec![-1.0, 0.0, 1.0]), c in 0.5f64..3.0, g in 0.0f64..2.0, dh in 0.1f64..5.0) {
        let p = ModelParams::line(k, c, g);
        let h = if k > 0.0 { find_h0(&p) + dh } else { dh };
        let w = build_patched_solution(&p, h).unwrap();
        prop_assert!(!w.joints.is_empty());
        for j in &w.joints {
            prop_assert!(j.kinematic_residual(c) <= 1e-10, "{:?}", j);
        }
    }

    #[test]
    fn finite_line_speed_approaches_whole_line(p in 0.2f64..4.0, e1 in 1.0f64..5.0, de in 0.1f64..3.0) {
        let (l1, l2) = (10f64.powf(e1 / 2.0), 10f64.powf((e1 + de) / 2.0));
        let lim = p * p / 6.0;
        let d1 = single_peakon_speed(l1, 0.0, p).unwrap() - lim;
        let d2 = single_peakon_speed(l2, 0.0, p).unwrap() - lim;
        prop_assert!(d1 >= d2 && d2 >= 0.0, "{d1} {d2}");
    }

    #[test]
    fn angle_cocycle(s in 0.0f64..6.0, q in 0u32..4) {
        let c = CurvatureData::cusped_loop();
        let lhs = angle_function(&c, s + q as f64 * 2.0);
        let rhs = angle_function(&c, s) + q as f64 * c.total_angle();
        prop_assert!((lhs - rhs).abs() <= 1e-12, "{lhs} {rhs}");
        prop_assert!((gauss_bonnet(&c, q) - q as f64 * 2.0 * PI / 3.0).abs() <= 1e-13 * (1 + q) as f64);
    }

    #[test]
    fn rationals_are_recovered(m in -40i64..40, n in 1i64..=64) {
        let g = num_gcd(m.abs(), n);
        let (mr, nr) = (m / g, n / g);
        prop_assert_eq!(rational_approx(m as f64 / n as f64, 64, 1e-9), Some((mr, nr)));
    }

    #[test]
    fn uniform_stretch_energy(chi in 0.2f64..3.0, a in prop::sample::select(vec![-3.0, -2.0, -0.5, 0.5, 2.0]), n in 3usize..40) {
        let xi: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let v: Vec<[f64; 2]> = xi.iter().map(|&x| [chi * x * 0.6, chi * x * 0.8]).collect();
        let e = elastic_energy(&v, &xi, &vec![a; n], None).unwrap();
        prop_assert!((e - (chi - 1.0) / a).abs() <= 1e-12);
    }

    #[test]
    fn helmholtz_solves_modes(m in 0usize..12, amp in -2.0f64..2.0, len in 1.0f64..20.0) {
        let n = 64;
        let w = 2.0 * PI * m as f64 / len;
        let s: Vec<f64> = (0..n).map(|i| len * i as f64 / n as f64).collect();
        let kappa: Vec<f64> = s.iter().map(|&x| amp * (w * x).sin()).collect();
        let (u, us) = helmholtz_periodic(&kappa, len);
        for i in 0..n {
            prop_assert!((u[i] - amp * (w * s[i]).sin() / (1.0 + w * w)).abs() <= 1e-12);
            prop_assert!((us[i] - amp * w * (w * s[i]).cos() / (1.0 + w * w)).abs() <= 1e-11);
        }
    }
}

fn num_gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.max(1)
    } else {
        num_gcd(b, a % b)
    }
}

fn ensemble(n: usize, raw: &[(f64, f64)]) -> (Vec<f64>, Vec<f64>) {
    let mut x = Vec::new();
    let mut acc = 0.0;
    for &(gap, _) in raw.iter().take(n) {
        acc += gap;
        x.push(acc);
    }
    (x, raw.iter().take(n).map(|r| r.1).collect())
}

proptest! {
    #![proptest_config(cheap())]

    #[test]
    fn ch_energy_is_conserved(n in 1usize..=5, raw in prop::collection::vec((0.5f64..3.0, 0.3f64..2.0), 5)) {
        let (x, p) = ensemble(n, &raw);
        let e = PeakonEnsemble::new(Model::Ch, f64::INFINITY, 0.0, x, p).unwrap();
        let tr = evolve(&e, 5.0, &EvolveOptions::default()).unwrap();
        prop_assert!(tr.h0_drift() <= 1e-8, "{}", tr.h0_drift());
    }

    #[test]
    fn trajectories_commute_with_translation(shift in -20.0f64..20.0, raw in prop::collection::vec((0.5f64..3.0, 0.3f64..2.0), 3)) {
        let (x, p) = ensemble(3, &raw);
        let opts = EvolveOptions { outputs: Some(8), ..EvolveOptions::default() };
        let a = evolve(&PeakonEnsemble::new(Model::Ch, f64::INFINITY, 0.0, x.clone(), p.clone()).unwrap(), 2.0, &opts).unwrap();
        let xs: Vec<f64> = x.iter().map(|v| v + shift).collect();
        let b = evolve(&PeakonEnsemble::new(Model::Ch, f64::INFINITY, 0.0, xs, p).unwrap(), 2.0, &opts).unwrap();
        for (ra, rb) in a.positions.iter().zip(&b.positions) {
            for (ya, yb) in ra.iter().zip(rb) {
                prop_assert!((yb - ya - shift).abs() <= 1e-8 * (1.0 + shift.abs()));
            }
        }
    }

    #[test]
    fn mch_ordering_holds_until_contact(raw in prop::collection::vec((0.3f64..2.0, 0.3f64..2.5), 4)) {
        let (x, p) = ensemble(4, &raw);
        let e = PeakonEnsemble::new(Model::Mch, f64::INFINITY, 0.0, x, p).unwrap();
        let tr = evolve(&e, 3.0, &EvolveOptions { outputs: Some(30), ..EvolveOptions::default() }).unwrap();
        for row in &tr.positions {
            for w in row.windows(2) {
                prop_assert!(w[1] - w[0] >= -1e-9, "{:?}", row);
            }
        }
        if tr.collision.is_none() {
            prop_assert!((tr.times.last().unwrap() - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn weak_residual_is_linear_in_the_test(a in 0.1f64..10.0, x0 in -2.0f64..2.0, t0 in 0.5f64..1.2, rx in 0.5f64..1.5) {
        let cand = PeakonCandidate::new(2.0 * 3f64.sqrt(), 2.3, 0.0, 0.0, f64::INFINITY);
        let test = TestFunction::new(x0, t0, rx, 0.4).unwrap();
        let r = weak_residual(&cand, &test, 2.0).unwrap().value;
        let ra = weak_residual_scaled(&cand, &test.scaled(a), 2.0).unwrap();
        prop_assert!((ra - a * r).abs() <= 1e-8 * (a * r.abs()).max(1e-6), "{ra} vs {}", a * r);
    }

    #[test]
    fn weak_residual_is_translation_invariant(d in -3.0f64..3.0, x0 in -1.0f64..1.0, t0 in 0.5f64..1.2) {
        let p = 2.0 * 3f64.sqrt();
        let c1 = PeakonCandidate::new(p, 2.3, 0.0, 0.0, f64::INFINITY);
        let c2 = PeakonCandidate::new(p, 2.3, d, 0.0, f64::INFINITY);
        let r1 = weak_residual(&c1, &TestFunction::new(x0, t0, 1.0, 0.4).unwrap(), 2.0).unwrap().value;
        let r2 = weak_residual(&c2, &TestFunction::new(x0 + d, t0, 1.0, 0.4).unwrap(), 2.0).unwrap().value;
        prop_assert!((r1 - r2).abs() <= 1e-8 * r1.abs().max(1e-6), "{r1} {r2}");
    }

    #[test]
    fn exact_peakons_pass_for_any_amplitude(p in 0.3f64..3.0, x0 in -1.0f64..1.0) {
        let c = single_peakon_speed(f64::INFINITY, 0.0, p).unwrap();
        let cand = PeakonCandidate::new(p, c, x0, 0.0, f64::INFINITY);
        let rep = residual_suite(&cand, 11, 4).unwrap();
        prop_assert!(rep.max_residual <= 1e-9, "{}", rep.max_residual);
    }
}
