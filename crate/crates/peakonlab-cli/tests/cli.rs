use std::fs;
use std::path::{Path, PathBuf};

use peakonlab_cli::format::parse_num;
use peakonlab_cli::main_with;
use serde_json::Value;
use sha2::{Digest, Sha256};

fn run(out: &Path, args: &[&str]) -> i32 {
    let mut v: Vec<String> = vec!["peakonlab".into(), "--out".into(), out.display().to_string()];
    v.extend(args.iter().map(|s| s.to_string()));
    main_with(v, None)
}

fn json(p: PathBuf) -> Value {
    serde_json::from_slice(&fs::read(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))).unwrap()
}

fn csv_rows(p: PathBuf) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(&p).unwrap();
    let h = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|x| x.unwrap().iter().map(|c| parse_num(c).unwrap_or(f64::NAN)).collect())
        .collect();
    (h, rows)
}

#[test]
fn wave_example_is_the_exponential_peakon() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(d.path(), &["wave", "--k", "0", "--c", "2", "--g", "0", "--h", "0"]), 0);
    let (h, rows) = csv_rows(d.path().join("profile.csv"));
    assert_eq!(h, ["xi", "phi", "v", "segment_id"]);
    let mut checked = 0;
    for r in rows.iter().filter(|r| r[0].abs() <= 5.0) {
        let exact = 3f64.sqrt() * (-r[0].abs()).exp();
        assert!((r[1] - exact).abs() <= 1e-6, "ξ = {}: {} vs {exact}", r[0], r[1]);
        checked += 1;
    }
    assert!(checked > 100);
    let j = json(d.path().join("joints.json"));
    assert_eq!(j["all_pass"], Value::Bool(true));
    assert_eq!(j["joints"].as_array().unwrap().len(), 1);
    let m = json(d.path().join("profile.json"));
    assert_eq!(m["period"], Value::String("inf".into()));
}

#[test]
fn single_ch_peakon_travels_at_half_its_amplitude() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(d.path(), &["peakons", "--model", "ch", "--n", "1", "--p", "1", "--ell", "inf", "--t-end", "4"]), 0);
    let (h, rows) = csv_rows(d.path().join("trajectory.csv"));
    assert_eq!(h, ["t", "x_1", "p_1", "H0"]);
    let (first, last) = (&rows[0], &rows[rows.len() - 1]);
    assert_eq!(last[0], 4.0);
    assert!((last[1] - first[1] - 2.0).abs() <= 1e-9, "{}", last[1] - first[1]);
    assert_eq!(json(d.path().join("events.json")), Value::Array(vec![]));
}

#[test]
fn sweep_example_has_the_expected_shape() {
    let d = tempfile::tempdir().unwrap();
    let args = ["sweep", "--k", "1", "--g", "2", "--c", "2", "--h-min", "3.9", "--h-max", "30", "--points", "200"];
    assert_eq!(run(d.path(), &args), 0);
    let (h, rows) = csv_rows(d.path().join("sweep.csv"));
    assert_eq!(h, ["h", "theta_total", "T"]);
    assert_eq!(rows.len(), 200);
    assert_eq!(rows[199][0], 30.0);
    assert!(rows.iter().all(|r| r[1].is_finite() && r[2] > 0.0));
    let th: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let spread = th.iter().copied().fold(f64::NEG_INFINITY, f64::max) - th.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(spread > 0.1, "{spread}");
    let m = json(d.path().join("sweep.json"));
    assert!(m["max_expression_gap"].as_f64().unwrap() <= 1e-7);
}

fn dir_bytes(d: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(d)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn identical_configs_give_identical_bytes() {
    let cases: [&[&str]; 6] = [
        &["--plot", "phase", "--resolution", "60"],
        &["--plot", "wave", "--h", "5"],
        &["--seed", "9", "peakons", "--n", "3", "--t-end", "2"],
        &["--plot", "curve", "--source", "circle", "--evolve-steps", "5"],
        &["verify", "--tests", "4"],
        &["sweep", "--points", "12", "--h-max", "12"],
    ];
    for args in cases {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        assert_eq!(run(a.path(), args), 0, "{args:?}");
        assert_eq!(run(b.path(), args), 0, "{args:?}");
        let (fa, fb) = (dir_bytes(a.path()), dir_bytes(b.path()));
        assert!(fa.len() >= 2);
        assert_eq!(fa, fb, "{args:?}");
        // the manifest lists every other file with its checksum
        let m = json(a.path().join("manifest.json"));
        let files = m["files"].as_array().unwrap();
        assert_eq!(files.len(), fa.len() - 1);
        for f in files {
            let name = f["name"].as_str().unwrap();
            let bytes = fs::read(a.path().join(name)).unwrap();
            let hex: String = Sha256::digest(&bytes).iter().map(|x| format!("{x:02x}")).collect();
            assert_eq!(f["sha256"].as_str().unwrap(), hex);
            assert_eq!(f["bytes"].as_u64().unwrap() as usize, bytes.len());
        }
    }
}

#[test]
fn worker_count_does_not_change_the_sweep() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(run(a.path(), &["sweep", "--points", "16", "--jobs", "1"]), 0);
    assert_eq!(run(b.path(), &["sweep", "--points", "16", "--jobs", "4"]), 0);
    let f = |d: &Path| (fs::read(d.join("sweep.csv")).unwrap(), fs::read(d.join("sweep.json")).unwrap());
    assert_eq!(f(a.path()), f(b.path()));
}

#[test]
fn seed_controls_random_initial_data() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = |s: &'static str| ["--seed", s, "peakons", "--n", "2", "--t-end", "1"];
    assert_eq!(run(a.path(), &args("1")), 0);
    assert_eq!(run(b.path(), &args("1")), 0);
    assert_eq!(run(c.path(), &args("2")), 0);
    let t = |d: &Path| fs::read(d.join("trajectory.csv")).unwrap();
    assert_eq!(t(a.path()), t(b.path()));
    assert_ne!(t(a.path()), t(c.path()));
}

#[test]
fn environment_overrides_the_out_flag() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["peakonlab", "--out", a.path().to_str().unwrap(), "wave", "--h", "5"];
    assert_eq!(main_with(args, Some(b.path().to_path_buf())), 0);
    assert!(b.path().join("profile.csv").exists());
    assert!(fs::read_dir(a.path()).unwrap().next().is_none());
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    // no patch point: a domain error
    assert_eq!(run(d.path(), &["wave", "--h", "-100"]), 1);
    let e = json(d.path().join("error.json"));
    assert_eq!(e["error"], Value::String("wave_builder".into()));
    assert_eq!(e["exit_code"], Value::from(1));
    let m = json(d.path().join("manifest.json"));
    assert_eq!(m["status"], Value::String("error".into()));

    assert_eq!(run(d.path(), &["--tol", "ode=-1", "phase"]), 1);
    assert_eq!(run(d.path(), &["sweep", "--h-min", "40", "--h-max", "30"]), 1);
    assert_eq!(run(d.path(), &["peakons", "--k", "1"]), 1);
    assert_eq!(run(d.path(), &["no-such-command"]), 1);

    // the output path is a regular file
    let f = d.path().join("file");
    fs::write(&f, b"x").unwrap();
    assert_eq!(run(&f.join("sub"), &["wave", "--h", "5"]), 2);
    // unreadable input
    assert_eq!(run(d.path(), &["verify", "--input", d.path().join("missing.csv").to_str().unwrap()]), 2);
}

fn verify_pass(dir: &Path, csv: &str) -> Value {
    let input = dir.join(csv);
    assert_eq!(run(dir, &["verify", "--input", input.to_str().unwrap()]), 0, "{csv}");
    let r = json(dir.join("verify_report.json"));
    assert_eq!(r["pass"], Value::Bool(true), "{csv}: {r}");
    r
}

#[test]
fn every_csv_is_accepted_by_verify() {
    let runs: [(&[&str], &str, &str); 7] = [
        (&["wave", "--k", "0", "--c", "2", "--g", "0", "--h", "0"], "profile.csv", "profile"),
        (&["wave", "--h", "5"], "profile.csv", "profile"),
        (&["--seed", "4", "peakons", "--n", "3", "--t-end", "2"], "trajectory.csv", "trajectory"),
        (&["peakons", "--model", "ch", "--n", "3", "--t-end", "2"], "trajectory.csv", "trajectory_energy"),
        (&["phase", "--resolution", "50"], "level_set.csv", "level_set"),
        (&["curve"], "curve.csv", "curve"),
        (&["sweep", "--points", "10"], "sweep.csv", "sweep"),
    ];
    for (args, csv, kind) in runs {
        let d = tempfile::tempdir().unwrap();
        assert_eq!(run(d.path(), args), 0, "{args:?}");
        let r = verify_pass(d.path(), csv);
        assert_eq!(r["kind"], Value::String(kind.into()));
    }
}

#[test]
fn profile_csv_preserves_every_bit() {
    use peakonlab::phase_plane::ModelParams;
    use peakonlab::wave_builder::build_patched_solution;
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(d.path(), &["wave", "--h", "5"]), 0);
    let (_, rows) = csv_rows(d.path().join("profile.csv"));
    let w = build_patched_solution(&ModelParams::line(1.0, 2.0, 2.0), 5.0).unwrap();
    let lib = w.csv_rows();
    assert_eq!(rows.len(), lib.len());
    for (a, b) in rows.iter().zip(&lib) {
        assert_eq!(a[0].to_bits(), b.xi.to_bits());
        assert_eq!(a[1].to_bits(), b.phi.to_bits());
        assert_eq!(a[2].to_bits(), b.v.to_bits());
    }
}

#[test]
fn wrong_speed_peakon_fails_verification() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(d.path(), &["verify", "--speed", "2.3"]), 0);
    let r = json(d.path().join("verify_report.json"));
    assert_eq!(r["pass"], Value::Bool(false));
    assert!(r["max_residual"].as_f64().unwrap() > 1e-3);
}

#[test]
fn cusped_loop_plot_marks_three_cusps_and_three_singular_points() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(d.path(), &["--plot", "curve", "--source", "cusped-loop"]), 0);
    let svg = fs::read_to_string(d.path().join("curve.svg")).unwrap();
    assert_eq!(svg.matches(r#"class="cusp""#).count(), 3);
    assert_eq!(svg.matches(r#"class="singular""#).count(), 3);
    let m = json(d.path().join("curve.json"));
    assert_eq!(m["periods"], Value::from(3));
    assert!(m["gap"].as_f64().unwrap() <= 1e-8);
    assert!(!svg.contains("NaN") && !svg.contains("inf"));
}

#[test]
fn curve_flow_reports_drift() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(d.path(), &["curve", "--source", "circle", "--evolve-steps", "20"]), 0);
    let (h, rows) = csv_rows(d.path().join("flow.csv"));
    assert_eq!(h[0], "step");
    assert_eq!(rows.len(), 21);
    let f = json(d.path().join("flow.json"));
    assert!(f["max_length_drift"].as_f64().unwrap() <= 1e-4);
    // the cusped loop cannot be evolved by the smooth flow after one period
    assert_eq!(run(d.path(), &["curve", "--periods", "1", "--evolve-steps", "2"]), 1);
}

// Phase portraits across the parameter families; pinned so that changes to
// the sampler or the renderer are noticed.
const PORTRAITS: [(&str, &str, &str, &str); 9] = [
    ("1", "2", "2", "4ef34fca5b3744f9e0c36c6ed443923675341504a505bbc0d7b777efc6cc31db"),
    ("1", "1", "0", "96e20b5c5f0563f7005e957f1851916d40e7e5e6d27d4036984fd9b99b8d7000"),
    ("1", "-1", "0.5", "83e0029061c43a620d6de9d2d9dce8c3b09fc0cc6171caa079ec70b43db29e00"),
    ("0", "1", "0", "b7a878d80ff96056efafcb35975bc95a4380b00722f6172d3c33e01ab6f3adee"),
    ("0", "1", "1", "a753e1fb28579584bf9df9446ac362368caa78c48f439aa49b62400b233b8f8d"),
    ("0", "2", "0", "cb0f2d0019058703bcd6177c2366aa1ad3fef6c604b1bcae8d4dcb5c0f6a70dc"),
    ("-1", "1", "0", "69733a76c21a33fbcd15d425464eddfe9ad5d945ae7edae353f4ddeab1e0f94b"),
    ("-1", "1", "1", "00c71121b98c256918b3848531da9028be04670b12811677205cfb96e7fb014b"),
    ("-1", "-1", "0.5", "76ee43f844551249a43913d7e62600171ecb0368dee1137a8ad52e4647507ae0"),
];

#[test]
fn phase_portraits_are_pinned() {
    let mut mismatches = Vec::new();
    for (k, c, g, pin) in PORTRAITS {
        let d = tempfile::tempdir().unwrap();
        assert_eq!(run(d.path(), &["--plot", "phase", "--k", k, "--c", c, "--g", g, "--resolution", "200"]), 0);
        let svg = fs::read(d.path().join("phase.svg")).unwrap();
        let text = String::from_utf8_lossy(&svg);
        assert!(text.contains("patch-hyperbola") && text.contains("jump-hyperbola"));
        let hex: String = Sha256::digest(&svg).iter().map(|x| format!("{x:02x}")).collect();
        if hex != pin {
            mismatches.push(format!("(\"{k}\", \"{c}\", \"{g}\", \"{hex}\")"));
        }
    }
    assert!(mismatches.is_empty(), "portrait hashes changed:\n{}", mismatches.join("\n"));
}

#[test]
fn level_through_the_origin_portrait() {
    // h = 0 for k = 0, g = 0, c = 2 passes through the peakon's level
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(d.path(), &["--plot", "phase", "--k", "0", "--c", "2", "--g", "0", "--h", "0"]), 0);
    let m = json(d.path().join("critical_points.json"));
    assert_eq!(m["levels"], serde_json::json!([0.0]));
    let svg = fs::read_to_string(d.path().join("phase.svg")).unwrap();
    assert!(svg.contains(r#"data-h="0.0""#));
}
