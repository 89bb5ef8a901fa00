//! One function per subcommand; each returns the artifacts to write.

use std::f64::consts::PI;

use peakonlab::curve_flows::{
    closure_check, evolve_closed_curve, gauss_bonnet, profile_to_curvature, reconstruct_curve, theta_sweep, AtomKind,
    ClosureStatus, CurvatureData, FlowLaw, PlanarPolyline, Stepper,
};
use peakonlab::peakon_dynamics::{evolve, EvolveOptions, Method, Model, PeakonEnsemble};
use peakonlab::phase_plane::{classify_critical_points, hamiltonian, sample_level_set, CriticalKind, ModelParams, PhasePoint};
use peakonlab::wave_builder::{build_patched_solution, build_patched_solution_with, find_h0, verify_jump_conditions, ProfileKind, WaveProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use crate::config::{CurveSource, LawName, MethodName, ModelName, RunConfig, StepperName, Task};
use crate::format::{csv_bytes, jf, jfs, json_bytes, num, obj};
use crate::svg::{render_svg, CurveData, Dataset, LevelCurve, PhaseData, SeriesData, Style};
use crate::{ingest, Artifact, CliError};

pub fn dispatch(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    match &cfg.task {
        Task::Phase { levels, resolution, phi_max } => phase(cfg, levels, *resolution, *phi_max),
        Task::Wave { h, pair, window } => wave(cfg, *h, *pair, *window),
        Task::Peakons { .. } => peakons(cfg),
        Task::Verify { .. } => ingest::verify(cfg),
        Task::Curve { .. } => curve(cfg),
        Task::Sweep { h_min, h_max, points, jobs } => sweep(cfg, *h_min, *h_max, *points, *jobs),
    }
}

pub fn params_json(p: &ModelParams) -> Value {
    obj([("k", jf(p.k)), ("c", jf(p.c)), ("g", jf(p.g)), ("ell", jf(p.ell))])
}

fn kind_name(k: CriticalKind) -> &'static str {
    match k {
        CriticalKind::Center => "center",
        CriticalKind::Saddle => "saddle",
        CriticalKind::Degenerate => "degenerate",
    }
}

fn profile_kind_name(k: ProfileKind) -> &'static str {
    match k {
        ProfileKind::SmoothPeriodic => "smooth_periodic",
        ProfileKind::PatchedPeriodic => "patched_periodic",
        ProfileKind::Unbounded => "unbounded",
        ProfileKind::CompactSupportComposite => "compact_support_composite",
    }
}

fn atom_name(k: AtomKind) -> &'static str {
    match k {
        AtomKind::Cusp => "cusp",
        AtomKind::Singular => "singular",
    }
}

// ---------------------------------------------------------------------------
// phase

/// Levels through every critical point in the window plus the deciles of H
/// over a 41×41 grid of the window.
pub fn default_levels(p: &ModelParams, phi_max: f64) -> Vec<f64> {
    let n = 41;
    let mut hs = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let phi = -phi_max + 2.0 * phi_max * i as f64 / (n - 1) as f64;
            let v = -phi_max + 2.0 * phi_max * j as f64 / (n - 1) as f64;
            hs.push(hamiltonian(p, PhasePoint::new(phi, v)));
        }
    }
    hs.sort_by(|a, b| a.total_cmp(b));
    let mut levels: Vec<f64> = (1..10).map(|d| hs[d * (hs.len() - 1) / 10]).collect();
    for cp in classify_critical_points(p) {
        if cp.location.phi.abs() <= phi_max && cp.location.v.abs() <= phi_max {
            levels.push(hamiltonian(p, cp.location));
        }
    }
    levels.sort_by(|a, b| a.total_cmp(b));
    levels.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
    levels
}

/// The phase portrait as a renderable dataset.
pub fn phase_dataset(p: &ModelParams, levels: &[f64], resolution: usize, phi_max: f64) -> PhaseData {
    let n = resolution.max(2);
    let levels = levels
        .iter()
        .map(|&h| {
            let samples = sample_level_set(p, h, n, phi_max);
            // the sampler emits runs of n points per interval and half plane
            let paths = samples.chunks(n).map(|c| c.iter().map(|s| (s.phi, s.v)).collect()).collect();
            LevelCurve { h, paths }
        })
        .collect();
    PhaseData {
        params: *p,
        levels,
        critical: classify_critical_points(p),
        phi_max,
        v_max: phi_max,
    }
}

fn phase(cfg: &RunConfig, levels: &[f64], resolution: usize, phi_max: f64) -> Result<Vec<Artifact>, CliError> {
    let p = cfg.params;
    let levels = if levels.is_empty() { default_levels(&p, phi_max) } else { levels.to_vec() };
    let mut rows = Vec::new();
    for &h in &levels {
        for s in sample_level_set(&p, h, resolution, phi_max) {
            rows.push(vec![num(s.phi), num(s.v), num(s.h), s.sign.label().to_string()]);
        }
    }
    let crit: Vec<Value> = classify_critical_points(&p)
        .iter()
        .map(|c| {
            obj([
                ("phi", jf(c.location.phi)),
                ("v", jf(c.location.v)),
                ("kind", kind_name(c.kind).into()),
                ("on_c_hyperbola", c.on_c_hyperbola.into()),
                ("discriminant", jf(c.discriminant)),
                ("h", jf(hamiltonian(&p, c.location))),
            ])
        })
        .collect();
    let meta = obj([
        ("params", params_json(&p)),
        // outputs are in the caller's frame; the flag records that the
        // computation used the φ ↦ -φ mirror
        ("normalized", (p.g < 0.0).into()),
        ("levels", jfs(&levels)),
        ("critical_points", Value::Array(crit)),
    ]);
    let mut out = vec![
        Artifact::new("level_set.csv", csv_bytes(&["phi", "v", "h", "sign"], rows)),
        Artifact::new("critical_points.json", json_bytes(&meta)),
    ];
    if cfg.plot {
        let d = phase_dataset(&p, &levels, resolution.min(400), phi_max);
        let style = Style {
            title: format!("H levels, k = {}, c = {}, g = {}", num(p.k), num(p.c), num(p.g)),
            ..Style::default()
        };
        out.push(Artifact::new("phase.svg", render_svg(&Dataset::Phase(d), &style).into_bytes()));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// wave

pub fn profile_json(w: &WaveProfile) -> Value {
    let joints: Vec<Value> = w
        .joints
        .iter()
        .map(|j| obj([("xi", jf(j.xi)), ("phi", jf(j.phi)), ("v_left", jf(j.v_left)), ("v_right", jf(j.v_right))]))
        .collect();
    let tails: Vec<Value> = w
        .tails
        .iter()
        .map(|t| {
            obj([
                ("xi_end", jf(t.xi_end)),
                ("direction", jf(t.direction)),
                ("phi_end", jf(t.phi_end)),
                ("base", jf(t.base)),
                ("rate", jf(t.rate)),
            ])
        })
        .collect();
    obj([
        ("params", params_json(&w.params)),
        ("h", jf(w.h)),
        ("period", jf(w.period)),
        ("joints", Value::Array(joints)),
        ("kind", profile_kind_name(w.kind).into()),
        ("xi_range", jfs(&[w.xi_range.lo, w.xi_range.hi])),
        ("mirrored", w.mirrored.into()),
        ("tails", Value::Array(tails)),
    ])
}

pub fn profile_csv(w: &WaveProfile) -> Vec<u8> {
    let rows = w
        .csv_rows()
        .into_iter()
        .map(|r| vec![num(r.xi), num(r.phi), num(r.v), r.segment_id.to_string()]);
    csv_bytes(&["xi", "phi", "v", "segment_id"], rows)
}

fn wave(cfg: &RunConfig, h: f64, pair: Option<usize>, window: f64) -> Result<Vec<Artifact>, CliError> {
    let w = build_patched_solution_with(&cfg.params, h, pair, window)?;
    let tol = cfg.tol("joint");
    let res = verify_jump_conditions(&w);
    let joints: Vec<Value> = res
        .iter()
        .map(|r| {
            obj([
                ("xi", jf(r.xi)),
                ("phi", jf(r.phi)),
                ("residual1", jf(r.residual1)),
                ("residual2", jf(r.residual2)),
                ("a_left", jf(r.a_left)),
                ("a_right", jf(r.a_right)),
                ("pass", (r.residual1 <= tol).into()),
            ])
        })
        .collect();
    let report = obj([
        ("tolerance", jf(tol)),
        ("all_pass", res.iter().all(|r| r.residual1 <= tol).into()),
        ("max_residual1", jf(res.iter().map(|r| r.residual1).fold(0.0, f64::max))),
        ("joints", Value::Array(joints)),
    ]);
    let mut out = vec![
        Artifact::new("profile.csv", profile_csv(&w)),
        Artifact::new("profile.json", json_bytes(&profile_json(&w))),
        Artifact::new("joints.json", json_bytes(&report)),
    ];
    if cfg.plot {
        let lines = w
            .segments
            .iter()
            .map(|s| s.samples.iter().map(|q| (q.xi, q.phi)).collect())
            .collect();
        let d = SeriesData {
            x_label: "ξ".into(),
            y_label: "φ".into(),
            lines,
            points: w.joints.iter().map(|j| (j.xi, j.phi)).collect(),
        };
        let style = Style {
            title: format!("profile at h = {}", num(h)),
            ..Style::default()
        };
        out.push(Artifact::new("profile.svg", render_svg(&Dataset::Series(d), &style).into_bytes()));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// peakons

/// Seeded initial data: amplitudes in [0.5, 2], positions with gaps in
/// [1, 3] on the line or jittered equal spacing on the circle.
pub fn random_ensemble(seed: u64, n: usize, ell: f64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..=2.0)).collect();
    let x = if ell.is_finite() {
        (0..n).map(|i| ell * (i as f64 + rng.gen_range(0.0..0.5)) / n as f64).collect()
    } else {
        let mut acc = 0.0;
        (0..n)
            .map(|i| {
                if i > 0 {
                    acc += rng.gen_range(1.0..=3.0);
                }
                acc
            })
            .collect()
    };
    (x, p)
}

fn peakons(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let Task::Peakons { model, n, p, x, t_end, method, dt, outputs, collision_eps } = &cfg.task else {
        unreachable!()
    };
    let (rx, rp) = random_ensemble(cfg.seed, *n, cfg.params.ell);
    let p = match p.len() {
        0 => rp,
        1 => vec![p[0]; *n],
        _ => p.clone(),
    };
    let x = if x.is_empty() { rx } else { x.clone() };
    let model = match model {
        ModelName::Mch => Model::Mch,
        ModelName::Ch => Model::Ch,
    };
    let e = PeakonEnsemble::new(model, cfg.params.ell, cfg.params.k, x, p)?;
    let opts = EvolveOptions {
        tol: cfg.tol("ode"),
        method: match method {
            MethodName::Dp => Method::DormandPrince,
            MethodName::Midpoint => Method::ImplicitMidpoint { dt: *dt },
        },
        collision_eps: *collision_eps,
        outputs: Some((*outputs).max(1)),
    };
    let tr = evolve(&e, *t_end, &opts)?;
    let mut header: Vec<String> = vec!["t".into()];
    header.extend((1..=*n).map(|i| format!("x_{i}")));
    header.extend((1..=*n).map(|i| format!("p_{i}")));
    header.push("H0".into());
    let rows = (0..tr.times.len()).map(|k| {
        let mut r = vec![num(tr.times[k])];
        r.extend(tr.positions[k].iter().map(|&v| num(v)));
        r.extend(tr.amplitudes[k].iter().map(|&v| num(v)));
        r.push(num(tr.h0[k]));
        r
    });
    let hdr: Vec<&str> = header.iter().map(String::as_str).collect();
    let events: Vec<Value> = tr
        .collision
        .iter()
        .map(|c| {
            obj([
                ("type", "collision".into()),
                ("t", jf(c.t)),
                ("pair", Value::Array(vec![c.pair.0.into(), c.pair.1.into()])),
            ])
        })
        .collect();
    let mut out = vec![
        Artifact::new("trajectory.csv", csv_bytes(&hdr, rows)),
        Artifact::new("events.json", json_bytes(&Value::Array(events))),
    ];
    if cfg.plot {
        let lines = (0..*n)
            .map(|i| tr.times.iter().zip(&tr.positions).map(|(&t, x)| (t, x[i])).collect())
            .collect();
        let d = SeriesData {
            x_label: "t".into(),
            y_label: "x".into(),
            lines,
            points: vec![],
        };
        let style = Style {
            title: "peakon positions".into(),
            ..Style::default()
        };
        out.push(Artifact::new("trajectory.svg", render_svg(&Dataset::Series(d), &style).into_bytes()));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// curve

pub fn curve_source(cfg: &RunConfig, source: CurveSource, h: Option<f64>) -> Result<CurvatureData, CliError> {
    Ok(match source {
        CurveSource::CuspedLoop => CurvatureData::cusped_loop(),
        CurveSource::Circle => CurvatureData::circle(2.0 * PI),
        CurveSource::Profile => {
            let h = h.ok_or_else(|| CliError::Config("--source profile needs --h".into()))?;
            profile_to_curvature(&build_patched_solution(&cfg.params, h)?)?
        }
    })
}

/// Markers with the closing duplicate of vertex 0 removed.
pub fn distinct_markers(poly: &PlanarPolyline) -> Vec<(usize, AtomKind)> {
    let last = poly.vertices.len() - 1;
    let has_first = poly.markers.iter().any(|m| m.index == 0);
    poly.markers
        .iter()
        .filter(|m| !(poly.closed && m.index == last && has_first))
        .map(|m| (m.index, m.kind))
        .collect()
}

/// `n` vertices at uniform arclength along the polyline, plus the closing
/// duplicate.
pub fn resample_uniform(poly: &PlanarPolyline, n: usize) -> PlanarPolyline {
    let (s0, len) = (poly.s[0], poly.length());
    let mut vertices = Vec::with_capacity(n + 1);
    let mut s = Vec::with_capacity(n + 1);
    let mut j = 0;
    for i in 0..n {
        let target = s0 + len * i as f64 / n as f64;
        while j + 2 < poly.s.len() && poly.s[j + 1] <= target {
            j += 1;
        }
        let (a, b) = (poly.s[j], poly.s[j + 1]);
        let t = if b > a { (target - a) / (b - a) } else { 0.0 };
        let (p, q) = (poly.vertices[j], poly.vertices[j + 1]);
        vertices.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        s.push(len * i as f64 / n as f64);
    }
    vertices.push(vertices[0]);
    s.push(len);
    PlanarPolyline {
        vertices,
        s,
        closed: true,
        rotation_fraction: None,
        markers: vec![],
    }
}

fn curve(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let Task::Curve { source, h, periods, resolution, evolve_steps, dt, law, stepper } = &cfg.task else {
        unreachable!()
    };
    let curv = curve_source(cfg, *source, *h)?;
    let closure = closure_check(&curv);
    let periods = periods.unwrap_or(match closure.status {
        ClosureStatus::Closed => closure.n.max(1) as usize,
        _ => 1,
    });
    let poly = reconstruct_curve(&curv, periods, *resolution);
    let markers = distinct_markers(&poly);
    let count = |k: AtomKind| markers.iter().filter(|m| m.1 == k).count();
    let gb = gauss_bonnet(&curv, periods as u32);
    let status = match closure.status {
        ClosureStatus::Closed => "closed",
        ClosureStatus::NotClosed => "not_closed",
        ClosureStatus::Inconclusive => "inconclusive",
    };
    let opt = |x: Option<f64>| x.map(jf).unwrap_or(Value::Null);
    let meta = obj([
        ("period", jf(curv.period)),
        ("total_angle", jf(curv.total_angle())),
        ("periods", periods.into()),
        ("gauss_bonnet", jf(gb)),
        ("turning_number", jf(gb / (2.0 * PI))),
        (
            "closure",
            obj([
                ("status", status.into()),
                ("m", closure.m.into()),
                ("n", closure.n.into()),
                ("total_length", jf(closure.total_length)),
                ("fallback_closed", closure.fallback_closed.map(Value::from).unwrap_or(Value::Null)),
                ("fallback_gap", opt(closure.fallback_gap)),
            ]),
        ),
        ("closed", poly.closed.into()),
        ("gap", jf(poly.gap())),
        ("length", jf(poly.length())),
        (
            "rotation_fraction",
            poly.rotation_fraction
                .map(|(m, n)| Value::Array(vec![m.into(), n.into()]))
                .unwrap_or(Value::Null),
        ),
        (
            "markers",
            Value::Array(
                poly.markers
                    .iter()
                    .map(|m| obj([("index", m.index.into()), ("s", jf(m.s)), ("kind", atom_name(m.kind).into()), ("jump", jf(m.jump))]))
                    .collect(),
            ),
        ),
        ("cusp_count", count(AtomKind::Cusp).into()),
        ("singular_count", count(AtomKind::Singular).into()),
    ]);
    let rows = poly
        .s
        .iter()
        .zip(&poly.vertices)
        .map(|(&s, v)| vec![num(s), num(v[0]), num(v[1])]);
    let mut out = vec![
        Artifact::new("curve.csv", csv_bytes(&["s", "x", "y"], rows)),
        Artifact::new("curve.json", json_bytes(&meta)),
    ];
    if cfg.plot {
        let d = CurveData {
            vertices: poly.vertices.clone(),
            markers: poly.markers.iter().map(|m| (m.index, m.kind)).collect(),
            closed: poly.closed,
        };
        let style = Style {
            title: format!("reconstructed curve, {periods} period(s)"),
            ..Style::default()
        };
        out.push(Artifact::new("curve.svg", render_svg(&Dataset::Curve(d), &style).into_bytes()));
    }
    if *evolve_steps > 0 {
        if !poly.closed {
            return Err(CliError::Config(format!(
                "the curve does not close after {periods} period(s) (gap {:e}); evolution needs a closed curve",
                poly.gap()
            )));
        }
        let start = resample_uniform(&poly, *resolution);
        let law = match law {
            LawName::Mch => FlowLaw::MchSelfConsistent,
            LawName::Mkdv => FlowLaw::Mkdv,
        };
        let stepper = match stepper {
            StepperName::Euler => Stepper::Euler,
            StepperName::Rk4 => Stepper::Rk4,
        };
        let tr = evolve_closed_curve(&start, &law, *dt, *evolve_steps, stepper)?;
        let rows = tr.diagnostics.iter().map(|d| {
            vec![
                d.step.to_string(),
                num(d.t),
                num(d.length),
                num(d.area),
                num(d.length_drift),
                num(d.area_drift),
                num(d.predicted_area_drift),
                num(d.curvature_residual),
            ]
        });
        let header = ["step", "t", "length", "area", "length_drift", "area_drift", "predicted_area_drift", "curvature_residual"];
        out.push(Artifact::new("flow.csv", csv_bytes(&header, rows)));
        let last = tr.frames.last().expect("at least the initial frame");
        let rows = tr.labels.iter().zip(last).map(|(&s, v)| vec![num(s), num(v[0]), num(v[1])]);
        out.push(Artifact::new("curve_final.csv", csv_bytes(&["s", "x", "y"], rows)));
        out.push(Artifact::new(
            "flow.json",
            json_bytes(&obj([
                ("steps", (*evolve_steps).into()),
                ("dt", jf(*dt)),
                ("vertices", start.vertices.len().saturating_sub(1).into()),
                ("max_length_drift", jf(tr.max_length_drift())),
                ("max_area_defect", jf(tr.max_area_defect())),
            ])),
        ));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// sweep

fn sweep(cfg: &RunConfig, h_min: Option<f64>, h_max: f64, points: usize, jobs: Option<usize>) -> Result<Vec<Artifact>, CliError> {
    let p = cfg.params;
    let lo = match h_min {
        Some(x) => x,
        None => find_h0(&p),
    };
    if !(lo < h_max) {
        return Err(CliError::Config(format!("empty h-range ({lo}, {h_max}]")));
    }
    let pts = match jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| CliError::Config(format!("worker pool: {e}")))?
            .install(|| theta_sweep(&p, lo, h_max, points))?,
        None => theta_sweep(&p, lo, h_max, points)?,
    };
    let rows = pts.iter().map(|s| vec![num(s.h), num(s.theta_total), num(s.period)]);
    let th: Vec<f64> = pts.iter().map(|s| s.theta_total).collect();
    let gap = pts.iter().map(|s| (s.theta_total - s.theta_alt).abs()).fold(0.0, f64::max);
    let grid: Vec<Value> = pts
        .iter()
        .map(|s| {
            obj([
                ("h", jf(s.h)),
                ("theta_total", jf(s.theta_total)),
                ("theta_alt", jf(s.theta_alt)),
                ("T", jf(s.period)),
                ("near_m", s.near_m.into()),
                ("near_n", s.near_n.into()),
                ("near_err", jf(s.near_err)),
            ])
        })
        .collect();
    let meta = obj([
        ("params", params_json(&p)),
        ("h_min", jf(lo)),
        ("h_max", jf(h_max)),
        ("points", pts.len().into()),
        ("theta_min", jf(th.iter().copied().fold(f64::INFINITY, f64::min))),
        ("theta_max", jf(th.iter().copied().fold(f64::NEG_INFINITY, f64::max))),
        ("max_expression_gap", jf(gap)),
        ("grid", Value::Array(grid)),
    ]);
    let mut out = vec![
        Artifact::new("sweep.csv", csv_bytes(&["h", "theta_total", "T"], rows)),
        Artifact::new("sweep.json", json_bytes(&meta)),
    ];
    if cfg.plot {
        let d = SeriesData {
            x_label: "h".into(),
            y_label: "θ_h(T_h)".into(),
            lines: vec![pts.iter().map(|s| (s.h, s.theta_total)).collect()],
            points: vec![],
        };
        let style = Style {
            title: "total turning over one period".into(),
            ..Style::default()
        };
        out.push(Artifact::new("sweep.svg", render_svg(&Dataset::Series(d), &style).into_bytes()));
    }
    Ok(out)
}
