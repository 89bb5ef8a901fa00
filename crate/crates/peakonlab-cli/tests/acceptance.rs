//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs without the libtest harness so the lines are printed in
//! order and the timings are those of the checks alone.

use std::f64::consts::PI;
use std::fs;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use peakonlab::curve_flows::*;
use peakonlab::peakon_dynamics::*;
use peakonlab::phase_plane::*;
use peakonlab::wave_builder::*;
use peakonlab::weak_verifier::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

const SQRT3: f64 = 1.7320508075688772;

fn c1_peakon_profile() -> Outcome {
    let t0 = Instant::now();
    let w = match build_patched_solution(&ModelParams::line(0.0, 2.0, 0.0), 0.0) {
        Ok(w) => w,
        Err(e) => return outcome(false, format!("build failed: {e}")),
    };
    let n = 20_001;
    let mut err = 0.0f64;
    for i in 0..n {
        let xi = -5.0 + 10.0 * i as f64 / (n - 1) as f64;
        let phi = w.phi(xi).unwrap_or(f64::NAN);
        err = err.max((phi - SQRT3 * (-xi.abs()).exp()).abs());
    }
    let dt = t0.elapsed();
    outcome(
        err <= 1e-6 && dt < Duration::from_secs(1),
        format!("sup |φ - √3 e^-|ξ|| on [-5, 5] = {err:.2e} (≤ 1e-6), {:.3} s (< 1 s)", dt.as_secs_f64()),
    )
}

fn c2_speeds() -> Outcome {
    // closed forms written out with cosh/sinh
    let coth = |l: f64| (0.5 * l).cosh() / (0.5 * l).sinh();
    let mut worst = 0.0f64;
    for &p in &[0.3, 1.0, 2.0 * SQRT3, 5.0] {
        for &l in &[0.5, 1.0, 3.0, 8.0, 20.0] {
            let c = coth(l);
            let k0 = 0.25 * p * p * (c * c - 1.0 / 3.0);
            let km = (0.5 * p * c - 1.0).powi(2) - p * p / 12.0;
            let ch = 0.5 * p * c;
            for (got, want) in [
                (single_peakon_speed(l, 0.0, p).unwrap(), k0),
                (single_peakon_speed(l, -1.0, p).unwrap(), km),
                (single_ch_peakon_speed(l, p), ch),
            ] {
                worst = worst.max((got - want).abs() / want.abs().max(1e-300));
            }
        }
        for (got, want) in [
            (single_peakon_speed(f64::INFINITY, 0.0, p).unwrap(), p * p / 6.0),
            (single_peakon_speed(f64::INFINITY, -1.0, p).unwrap(), (0.5 * p - 1.0).powi(2) - p * p / 12.0),
            (single_ch_peakon_speed(f64::INFINITY, p), 0.5 * p),
        ] {
            worst = worst.max((got - want).abs() / want.abs().max(1e-300));
        }
    }
    // monotone approach to p²/6 on a log grid up to ℓ = 10³
    let p = 2.0;
    let lim = p * p / 6.0;
    let gaps: Vec<f64> = (0..=60)
        .map(|j| single_peakon_speed(10f64.powf(j as f64 / 20.0), 0.0, p).unwrap() - lim)
        .collect();
    let monotone = gaps.windows(2).all(|w| w[1] <= w[0]) && gaps.iter().all(|&g| g >= 0.0);
    let last = gaps[gaps.len() - 1];
    outcome(
        worst <= 1e-14 && monotone && last <= 1e-14,
        format!("max rel. error vs closed forms {worst:.1e} (≤ 1e-14); c(ℓ) - p²/6 nonincreasing on 61 log-spaced ℓ ∈ [1, 1e3]: {monotone}, final gap {last:.1e}"),
    )
}

fn c3_weak_form() -> Outcome {
    let t0 = Instant::now();
    let good = PeakonCandidate::new(2.0 * SQRT3, 2.0, 0.0, 0.0, f64::INFINITY);
    let bad = PeakonCandidate::new(2.0 * SQRT3, 2.3, 0.0, 0.0, f64::INFINITY);
    let mut g_max = 0.0f64;
    let mut b_min = f64::INFINITY;
    for seed in [7u64, 11, 2024] {
        match (residual_suite(&good, seed, 10), residual_suite(&bad, seed, 10)) {
            (Ok(a), Ok(b)) => {
                g_max = g_max.max(a.max_residual);
                b_min = b_min.min(b.max_residual);
            }
            (Err(e), _) | (_, Err(e)) => return outcome(false, format!("suite failed: {e}")),
        }
    }
    let dt = t0.elapsed();
    outcome(
        g_max <= 1e-5 && b_min > 1e-3 && dt < Duration::from_secs(60),
        format!(
            "c = 2: max normalized residual {g_max:.2e} (≤ 1e-5); c = 2.3: {b_min:.2e} (> 1e-3); seeds 7, 11, 2024 × 10 bumps, {:.2} s (< 60 s)",
            dt.as_secs_f64()
        ),
    )
}

fn c4_jump_conditions() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let mut joints = 0;
    let mut failures = Vec::new();
    for i in 0..50 {
        let k = [-1.0, 0.0, 1.0][i % 3];
        let c = rng.gen_range(0.5..3.0);
        let g = rng.gen_range(-2.0..2.0);
        let p = ModelParams::line(k, c, g);
        let dh = rng.gen_range(0.1..8.0);
        let h = if k > 0.0 { find_h0(&p) + dh } else { dh };
        match build_patched_solution(&p, h) {
            Ok(w) => {
                for r in verify_jump_conditions(&w) {
                    worst = worst.max(r.residual1);
                    joints += 1;
                }
            }
            Err(e) => failures.push(format!("(k={k}, c={c:.3}, g={g:.3}, h={h:.3}): {e}")),
        }
    }
    outcome(
        failures.is_empty() && worst <= 1e-10 && joints > 0,
        format!(
            "50 seeded (k, c, g, h), k ∈ {{-1, 0, 1}}: {joints} joints, max residual₁ {worst:.1e} (≤ 1e-10), {} build failures{}",
            failures.len(),
            failures.first().map(|f| format!(", first {f}")).unwrap_or_default()
        ),
    )
}

fn c5_critical_points() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    let mut banded = 0;
    let mut wrong = Vec::new();
    let mut dichotomy = 0;
    let mut stationary = 0.0f64;
    for _ in 0..1000 {
        let p = ModelParams::line(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..3.0), rng.gen_range(-2.0..2.0));
        let pts = classify_critical_points(&p);
        for cp in &pts {
            let (f, v) = (cp.location.phi, cp.location.v);
            let e = 1e-4;
            let hh = |a: f64, b: f64| hamiltonian(&p, PhasePoint::new(f + a, v + b));
            let h0 = hh(0.0, 0.0);
            let hpp = (hh(e, 0.0) - 2.0 * h0 + hh(-e, 0.0)) / (e * e);
            let hvv = (hh(0.0, e) - 2.0 * h0 + hh(0.0, -e)) / (e * e);
            let hpv = (hh(e, e) - hh(e, -e) - hh(-e, e) + hh(-e, -e)) / (4.0 * e * e);
            let gp = (hh(e, 0.0) - hh(-e, 0.0)) / (2.0 * e);
            let gv = (hh(0.0, e) - hh(0.0, -e)) / (2.0 * e);
            stationary = stationary.max(gp.abs().max(gv.abs()) / (1.0 + f.abs().powi(3) + v.abs().powi(3)));
            let d = hpv * hpv - hpp * hvv;
            let norm2 = hpp * hpp + 2.0 * hpv * hpv + hvv * hvv;
            // finite differences carry ~1e-8 relative error; inside this band
            // the sign of D is not decided by the oracle
            if d.abs() <= 1e-6 * (1.0 + norm2) {
                banded += 1;
                continue;
            }
            checked += 1;
            let expect = if d > 0.0 { CriticalKind::Saddle } else { CriticalKind::Center };
            if cp.kind != expect {
                wrong.push(format!("{:?} at ({f:.4}, {v:.4}) for {:?}: D_fd = {d:.3e}", cp.kind, p));
            }
        }
        if p.k != 0.0 && p.g * p.g - 4.0 * p.k * p.k * p.c > 0.0 {
            let off: Vec<_> = pts.iter().filter(|c| c.on_c_hyperbola).collect();
            let want = if p.k > 0.0 { CriticalKind::Center } else { CriticalKind::Saddle };
            if off.len() != 2 || off.iter().any(|c| c.kind != want) {
                wrong.push(format!("hyperbola pair for {p:?}: {off:?}"));
            }
            dichotomy += 1;
        }
    }
    outcome(
        wrong.is_empty() && stationary <= 1e-6,
        format!(
            "1000 triples: {checked} points checked against FD Hessians, {banded} in the degeneracy band, {dichotomy} hyperbola pairs, {} misclassified{}; max FD gradient {stationary:.1e}",
            wrong.len(),
            wrong.first().map(|w| format!(", first {w}")).unwrap_or_default()
        ),
    )
}

fn c6_periods() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut accepted = 0;
    let mut draws = 0;
    let mut worst = 0.0f64;
    let mut errors = Vec::new();
    while accepted < 20 && draws < 2000 {
        draws += 1;
        let p = ModelParams::line(rng.gen_range(0.3..2.0), rng.gen_range(0.5..3.0), rng.gen_range(-2.0..2.0));
        let Some(center) = classify_critical_points(&p).into_iter().find(|c| c.kind == CriticalKind::Center) else {
            continue;
        };
        let pt = PhasePoint::new(
            center.location.phi + rng.gen_range(-1.0..1.0),
            (center.location.v + rng.gen_range(-1.0..1.0)).abs().max(0.05),
        );
        let h = hamiltonian(&p, pt);
        let branch = [Branch::Plus, Branch::Minus].into_iter().find(|&b| {
            branch_value(&p, h, b, pt.phi).is_ok_and(|v2| (v2.sqrt() - pt.v).abs() <= 1e-9 * (1.0 + pt.v))
        });
        let Some(branch) = branch else { continue };
        let Some(iv) = branch_domain(&p, h, branch).into_iter().find(|iv| iv.contains(pt.phi)) else {
            continue;
        };
        let Ok(orbit) = level_orbit(&p, h, branch, iv, HalfPlane::Upper) else { continue };
        if !orbit.closed {
            continue;
        }
        let Ok(t_quad) = orbit.period() else { continue };
        if !t_quad.is_finite() {
            continue;
        }
        match ode_loop_xi(&p, pt, 1e-12) {
            Ok(t_ode) => {
                worst = worst.max((t_quad - t_ode).abs() / t_ode.abs());
                accepted += 1;
            }
            Err(e) => errors.push(format!("{p:?} h={h}: {e}")),
        }
    }
    outcome(
        accepted == 20 && worst <= 1e-6 && errors.is_empty(),
        format!(
            "{accepted} closed k > 0 loops ({draws} draws): max rel. |T_quad - T_ode| {worst:.1e} (≤ 1e-6), {} ODE failures",
            errors.len()
        ),
    )
}

fn c7_ch_energy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut x = vec![0.0];
    for _ in 0..2 {
        let last = x[x.len() - 1];
        x.push(last + rng.gen_range(0.5..3.0));
    }
    let p: Vec<f64> = (0..3).map(|_| rng.gen_range(0.3..2.0)).collect();
    let e = match PeakonEnsemble::new(Model::Ch, f64::INFINITY, 0.0, x.clone(), p.clone()) {
        Ok(e) => e,
        Err(e) => return outcome(false, e.to_string()),
    };
    let opts = EvolveOptions {
        tol: 1e-10,
        ..EvolveOptions::default()
    };
    match evolve(&e, 10.0, &opts) {
        Ok(tr) => {
            let drift = tr.h0_drift();
            let reached = tr.times[tr.times.len() - 1];
            outcome(
                drift <= 1e-8 && (reached - 10.0).abs() < 1e-12,
                format!("N = 3, x0 = {x:.3?}, p = {p:.3?}: H0 relative drift {drift:.1e} (≤ 1e-8) over t ∈ [0, {reached}]"),
            )
        }
        Err(e) => outcome(false, format!("integration failed: {e}")),
    }
}

fn c8_cusped_loop() -> Outcome {
    let c = CurvatureData::cusped_loop();
    let theta2 = angle_function(&c, 2.0);
    let exact = theta2 == 2.0 * PI / 3.0;
    let poly = reconstruct_curve(&c, 3, 256);
    let gap = poly.gap();
    let turning = gauss_bonnet(&c, 3);
    let closure = closure_check(&c);
    // markers modulo one traversal of the closed curve
    let mut cusps: Vec<f64> = Vec::new();
    let mut singular: Vec<f64> = Vec::new();
    for m in &poly.markers {
        let s = m.s.rem_euclid(6.0);
        let list = if m.kind == AtomKind::Cusp { &mut cusps } else { &mut singular };
        if !list.iter().any(|&x| (x - s).abs() < 1e-9) {
            list.push(s);
        }
    }
    cusps.sort_by(f64::total_cmp);
    singular.sort_by(f64::total_cmp);
    let d = tempfile::tempdir().expect("temp dir");
    let code = peakonlab_cli::main_with(
        ["peakonlab", "--out", d.path().to_str().unwrap(), "--plot", "curve", "--source", "cusped-loop"],
        None,
    );
    let svg = fs::read_to_string(d.path().join("curve.svg")).unwrap_or_default();
    let (nc, ns) = (svg.matches(r#"class="cusp""#).count(), svg.matches(r#"class="singular""#).count());
    let pass = exact
        && gap <= 1e-8
        && (turning - 2.0 * PI).abs() <= 1e-12
        && closure.status == ClosureStatus::Closed
        && closure.n == 3
        && cusps == [0.0, 2.0, 4.0]
        && singular == [1.0, 3.0, 5.0]
        && code == 0
        && (nc, ns) == (3, 3);
    outcome(
        pass,
        format!(
            "θ(2) == 2π/3: {exact}; gap over 3 periods {gap:.1e} (≤ 1e-8); 3θ(T) = {turning:.15} (2π); closure {:?} m/n = {}/{}; cusps at s = {cusps:?}, singular at {singular:?}; SVG markers {nc} cusps, {ns} singular",
            closure.status, closure.m, closure.n
        ),
    )
}

fn c9_sweep() -> Outcome {
    let t0 = Instant::now();
    let p = ModelParams::line(1.0, 2.0, 2.0);
    let h0 = find_h0(&p);
    let run = |n: usize| theta_sweep(&p, h0, 30.0, n);
    let (a, b) = match (run(200), run(400)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return outcome(false, format!("sweep failed: {e}")),
    };
    let dt = t0.elapsed();
    let finite = a.iter().all(|s| s.theta_total.is_finite() && s.period.is_finite());
    let agree = a.iter().map(|s| (s.theta_total - s.theta_alt).abs()).fold(0.0, f64::max);
    let th: Vec<f64> = a.iter().map(|s| s.theta_total).collect();
    let spread = th.iter().copied().fold(f64::NEG_INFINITY, f64::max) - th.iter().copied().fold(f64::INFINITY, f64::min);
    let jump = |v: &[SweepPoint]| v.windows(2).map(|w| (w[1].theta_total - w[0].theta_total).abs()).fold(0.0, f64::max);
    // continuity: the largest step is a small part of the range and shrinks
    // when the grid is refined
    let (j200, j400) = (jump(&a), jump(&b));
    let continuous = j200 <= 0.05 * spread && j400 <= 0.75 * j200;
    let ends = (a[0].h > h0) && a[a.len() - 1].h == 30.0;
    outcome(
        finite && agree <= 1e-7 && spread > 0.1 && continuous && ends && dt < Duration::from_secs(120),
        format!(
            "h ∈ ({h0:.12}, 30], |h0 - (1 + 2√2)| = {:.1e}; 200 points finite: {finite}; expressions agree to {agree:.1e} (≤ 1e-7); max - min {spread:.3} (> 0.1); largest step {j200:.2e} → {j400:.2e} at 400 points; {:.2} s for both grids (< 120 s)",
            (h0 - (1.0 + 2.0 * 2f64.sqrt())).abs(),
            dt.as_secs_f64()
        ),
    )
}

fn c10_curve_flow() -> Outcome {
    let eps = 0.1;
    let curv = CurvatureData::new(2.0 * PI, Arc::new(move |s: f64| 1.0 + 5.0 * eps * (2.0 * s).cos()), vec![], vec![])
        .expect("curvature data")
        .with_primitive(Arc::new(move |s: f64| s + 2.5 * eps * (2.0 * s).sin()));
    let poly = reconstruct_curve(&curv, 1, 256);
    let closure = closure_check(&curv);
    let drift = |dt: f64, n: usize| {
        evolve_closed_curve(&poly, &FlowLaw::MchSelfConsistent, dt, n, Stepper::Euler)
            .map(|t| (t.max_length_drift(), t.max_area_defect()))
    };
    let r = (drift(1e-4, 100), drift(5e-5, 200), drift(2.5e-5, 400));
    let ((l1, a1), (l2, a2), (l3, a3)) = match r {
        (Ok(a), Ok(b), Ok(c)) => (a, b, c),
        (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => return outcome(false, format!("evolution failed: {e}")),
    };
    let ol = [(l1 / l2).log2(), (l2 / l3).log2()];
    let oa = [(a1 / a2).log2(), (a2 / a3).log2()];
    let first_order = ol.iter().chain(&oa).all(|o| (o - 1.0).abs() < 0.2);
    outcome(
        closure.closes() && poly.gap() <= 1e-10 && l1 <= 1e-4 && a1 <= 1e-4 && first_order,
        format!(
            "κ = 1 + 0.5 cos 2s, 256 vertices, Euler dt = 1e-4 × 100: length drift {l1:.2e} (≤ 1e-4), |ΔA + ∮b| {a1:.2e} (≤ 1e-4); observed orders under dt/2, dt/4: length {:.2}, {:.2}; area {:.2}, {:.2} (1 ± 0.2)",
            ol[0], ol[1], oa[0], oa[1]
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("peakon profile exactness", c1_peakon_profile),
        ("speed formulas", c2_speeds),
        ("weak-form verification", c3_weak_form),
        ("jump conditions", c4_jump_conditions),
        ("critical-point oracle", c5_critical_points),
        ("period cross-check", c6_periods),
        ("CH Hamiltonian conservation", c7_ch_energy),
        ("cusped-loop closure", c8_cusped_loop),
        ("θ-sweep", c9_sweep),
        ("curve-flow preservation", c10_curve_flow),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let o = f();
        let dt = t0.elapsed().as_secs_f64();
        if !o.pass {
            failed += 1;
        }
        println!("{} [{}] {name}: {} ({dt:.2} s)", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
