use peakonlab::peakon_dynamics::single_peakon_speed;
use peakonlab::phase_plane::*;
use peakonlab::wave_builder::*;
use peakonlab::weak_verifier::*;

const SQRT3: f64 = 1.7320508075688772;

#[test]
fn zero_candidate_has_zero_residual() {
    let zero = FnCandidate {
        f: |_: f64, _: f64| (0.0, 0.0),
        lines: vec![],
        ell: f64::INFINITY,
        k: 0.0,
    };
    let t = TestFunction::new(0.3, 0.9, 1.0, 0.5).unwrap();
    assert_eq!(weak_residual(&zero, &t, 2.0).unwrap().value, 0.0);
}

#[test]
fn exact_peakon_passes_and_wrong_speed_fails() {
    let good = PeakonCandidate::new(2.0 * SQRT3, 2.0, 0.0, 0.0, f64::INFINITY);
    let bad = PeakonCandidate::new(2.0 * SQRT3, 2.3, 0.0, 0.0, f64::INFINITY);
    // the defect is ∝ ∫ φ_x along the crest line, which vanishes by symmetry
    // for a bump centred on it, so the bump straddles the line off-centre
    let t = TestFunction::new(2.3 + 0.4, 1.0, 1.0, 0.5).unwrap();
    let r = weak_residual(&good, &t, 2.0).unwrap();
    assert!(r.value.abs() <= 1e-6 * r.scale, "{r:?}");
    let r = weak_residual(&bad, &t, 2.0).unwrap();
    assert!(r.value.abs() >= 1e-3 * r.scale, "{r:?}");

    let rep = residual_suite(&good, 7, 10).unwrap();
    assert_eq!(rep.n_tests, 10);
    assert!(rep.max_residual <= 1e-5, "{}", rep.max_residual);
    assert!(rep.per_test.iter().any(|t| t.straddles));
    let rep = residual_suite(&bad, 7, 10).unwrap();
    assert!(rep.max_residual >= 1e-3, "{}", rep.max_residual);
}

#[test]
fn suite_is_reproducible() {
    let c = PeakonCandidate::new(2.0 * SQRT3, 2.3, 0.0, 0.0, f64::INFINITY);
    let a = residual_suite(&c, 99, 6).unwrap();
    let b = residual_suite(&c, 99, 6).unwrap();
    assert_eq!(a, b);
    let d = residual_suite(&c, 100, 6).unwrap();
    assert_ne!(a.per_test[0].test, d.per_test[0].test);
}

#[test]
fn patched_k1_profile_is_a_weak_solution() {
    let p = ModelParams::line(1.0, 2.0, 2.0);
    for h in [0.0, 5.0] {
        let w = build_patched_solution(&p, h).unwrap();
        let rep = residual_suite(&TravelingCandidate::new(w), 7, 10).unwrap();
        assert!(rep.max_residual <= 1e-5, "h={h}: {}", rep.max_residual);
    }
}

#[test]
fn negative_k_and_periodic_peakons_pass() {
    let c = single_peakon_speed(f64::INFINITY, -1.0, 1.5).unwrap();
    let cand = PeakonCandidate::new(1.5, c, 0.0, -1.0, f64::INFINITY);
    assert!(residual_suite(&cand, 7, 10).unwrap().max_residual <= 1e-5);
    let c = single_peakon_speed(8.0, 0.0, 2.0).unwrap();
    let cand = PeakonCandidate::new(2.0, c, 0.0, 0.0, 8.0);
    assert!(residual_suite(&cand, 7, 10).unwrap().max_residual <= 1e-5);
}

#[test]
fn joint_off_the_patch_hyperbola_is_detected() {
    // scaling √3 e^{-|ξ|} keeps the smooth equation but moves the crest to
    // φ² - v²/3 = 2.25 · 2
    let w = build_patched_solution(&ModelParams::line(0.0, 2.0, 0.0), 0.0).unwrap();
    let a = 1.5;
    let cand = FnCandidate {
        f: move |x: f64, t: f64| {
            let (f, v) = w.eval(x - 2.0 * t).unwrap_or((0.0, 0.0));
            (a * f, a * v)
        },
        lines: vec![Line { x0: 0.0, speed: 2.0 }],
        ell: f64::INFINITY,
        k: 0.0,
    };
    let rep = residual_suite(&cand, 7, 10).unwrap();
    assert!(rep.max_residual >= 1e-2, "{}", rep.max_residual);
}

#[test]
fn smooth_traveling_wave_sits_at_noise_floor() {
    let p = ModelParams::line(1.0, 4.0, 0.3);
    let center = classify_critical_points(&p)
        .into_iter()
        .find(|c| c.kind == CriticalKind::Center && c.location.phi > 0.0)
        .unwrap();
    let h = hamiltonian(&p, center.location) + 0.05;
    let iv = branch_domain(&p, h, Branch::Plus)
        .into_iter()
        .find(|iv| iv.contains(center.location.phi))
        .unwrap();
    let orbit = level_orbit(&p, h, Branch::Plus, iv, HalfPlane::Upper).unwrap();
    let Traced::Single(w) = trace_orbit(&orbit, 0.0).unwrap() else {
        panic!("expected a single-valued oval")
    };
    let opts = SuiteOptions {
        rx: (0.3, 0.45 * w.period.min(3.0)),
        ..SuiteOptions::default()
    };
    let rep = residual_suite_with(&TravelingCandidate::new(w), 3, 8, &opts).unwrap();
    assert!(rep.max_residual <= 1e-9, "{}", rep.max_residual);
}

#[test]
fn support_past_the_horizon_is_rejected() {
    let c = PeakonCandidate::new(1.0, 1.0 / 6.0, 0.0, 0.0, f64::INFINITY);
    let t = TestFunction::new(0.0, 1.9, 1.0, 0.5).unwrap();
    assert!(matches!(weak_residual(&c, &t, 2.0), Err(VerifyError::InvalidTest(_))));
}
