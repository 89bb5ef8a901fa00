//! The verify subcommand: reads back any CSV written by the other
//! subcommands (recognized by its header) and checks it, or runs the weak
//! suite on the built-in peakon.

use std::fs;
use std::path::Path;

use peakonlab::curve_flows::theta_total;
use peakonlab::peakon_dynamics::{
    ch_rhs, fundamental_derivative, fundamental_solution, mch_rhs, single_peakon_speed, Model, PeakonEnsemble,
};
use peakonlab::phase_plane::{hamiltonian, xi_field, ModelParams, PhasePoint};
use peakonlab::weak_verifier::{residual_suite_with, Candidate, Line, PeakonCandidate, SuiteOptions, SuiteReport};
use serde_json::Value;

use crate::commands::params_json;
use crate::config::{RunConfig, Task};
use crate::format::{from_jf, jf, json_bytes, obj, parse_num};
use crate::{Artifact, CliError};

/// What a CSV header identifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    Profile,
    Trajectory,
    LevelSet,
    Curve,
    Sweep,
}

pub fn detect(header: &[String]) -> Option<InputKind> {
    let h: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    match h.as_slice() {
        ["xi", "phi", "v", "segment_id"] => Some(InputKind::Profile),
        ["phi", "v", "h", "sign"] => Some(InputKind::LevelSet),
        ["s", "x", "y"] => Some(InputKind::Curve),
        ["h", "theta_total", "T"] => Some(InputKind::Sweep),
        ["t", rest @ .., "H0"] if !rest.is_empty() && rest.len() % 2 == 0 => {
            let n = rest.len() / 2;
            let ok = (0..n).all(|i| rest[i] == format!("x_{}", i + 1) && rest[n + i] == format!("p_{}", i + 1));
            ok.then_some(InputKind::Trajectory)
        }
        _ => None,
    }
}

pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes.as_slice());
        let header = r
            .headers()
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            rows.push(rec.iter().map(str::to_string).collect());
        }
        Ok(Self { header, rows })
    }

    fn col(&self, name: &str) -> Result<usize, CliError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Input(format!("missing column {name}")))
    }

    fn f(&self, row: usize, col: usize) -> Result<f64, CliError> {
        let s = &self.rows[row][col];
        parse_num(s).ok_or_else(|| CliError::Input(format!("row {}: {s:?} is not a number", row + 1)))
    }
}

/// Parameters and options recorded by the run that wrote `input`.
struct Provenance {
    params: Option<ModelParams>,
    options: Value,
}

fn provenance(input: &Path) -> Result<Provenance, CliError> {
    let path = input.with_file_name("manifest.json");
    let Ok(bytes) = fs::read(&path) else {
        return Ok(Provenance {
            params: None,
            options: Value::Null,
        });
    };
    let m: Value = serde_json::from_slice(&bytes).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let c = &m["config"];
    let get = |k: &str| from_jf(&c["params"][k]);
    let params = match (get("k"), get("c"), get("g"), get("ell")) {
        (Some(k), Some(cc), Some(g), Some(l)) => Some(ModelParams::new(k, cc, g, l)?),
        _ => None,
    };
    Ok(Provenance {
        params,
        options: c["options"].clone(),
    })
}

fn hermite(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, x: f64) -> f64 {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let (t2, t3) = (t * t, t * t * t);
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * h * d0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * h * d1
}

// ---------------------------------------------------------------------------
// sampled traveling profile

#[derive(Debug, Clone, Copy)]
struct TailSpec {
    xi_end: f64,
    direction: f64,
    phi_end: f64,
    base: f64,
    rate: f64,
}

/// `u(x, t) = φ(x - ct)` from profile samples: cubic Hermite in ξ with
/// `φ' = v` and `v'` from the traveling-wave field, periodic extension when
/// the period is known, exponential tails when recorded, zero otherwise.
pub struct SampledProfile {
    params: ModelParams,
    /// Per segment, samples sorted by ξ.
    segments: Vec<Vec<(f64, f64, f64)>>,
    lo: f64,
    period: f64,
    tails: Vec<TailSpec>,
    boundaries: Vec<f64>,
}

impl SampledProfile {
    fn phi_v(&self, xi: f64) -> (f64, f64) {
        let mut x = xi;
        if self.period.is_finite() {
            x = self.lo + (xi - self.lo).rem_euclid(self.period);
        }
        for s in &self.segments {
            let (a, b) = (s[0].0, s[s.len() - 1].0);
            if x < a || x > b {
                continue;
            }
            let i = s.partition_point(|q| q.0 < x).clamp(1, s.len() - 1);
            let (p, q) = (s[i - 1], s[i]);
            if x == p.0 {
                return (p.1, p.2);
            }
            let dp = xi_field(&self.params, PhasePoint::new(p.1, p.2)).1;
            let dq = xi_field(&self.params, PhasePoint::new(q.1, q.2)).1;
            let phi = hermite(p.0, q.0, p.1, q.1, p.2, q.2, x);
            let v = if dp.is_finite() && dq.is_finite() {
                hermite(p.0, q.0, p.2, q.2, dp, dq, x)
            } else {
                p.2 + (x - p.0) / (q.0 - p.0) * (q.2 - p.2)
            };
            return (phi, v);
        }
        for t in &self.tails {
            if (x - t.xi_end) * t.direction >= 0.0 {
                let d = (t.phi_end - t.base) * (-t.rate * (x - t.xi_end).abs()).exp();
                return (t.base + d, -t.direction * t.rate * d);
            }
        }
        (0.0, 0.0)
    }
}

impl Candidate for SampledProfile {
    fn eval(&self, x: f64, t: f64) -> (f64, f64) {
        self.phi_v(x - self.params.c * t)
    }
    fn lines(&self) -> Vec<Line> {
        self.boundaries
            .iter()
            .map(|&x0| Line {
                x0,
                speed: self.params.c,
            })
            .collect()
    }
    fn ell(&self) -> f64 {
        self.period
    }
    fn k(&self) -> f64 {
        self.params.k
    }
}

pub fn load_profile(input: &Path, fallback: &ModelParams) -> Result<SampledProfile, CliError> {
    let t = Table::read(input)?;
    let prov = provenance(input)?;
    let params = prov.params.unwrap_or(*fallback);
    let (cx, cp, cv, cs) = (t.col("xi")?, t.col("phi")?, t.col("v")?, t.col("segment_id")?);
    let mut segments: Vec<Vec<(f64, f64, f64)>> = Vec::new();
    let mut ids: Vec<String> = Vec::new();
    for r in 0..t.rows.len() {
        let id = &t.rows[r][cs];
        if ids.last() != Some(id) {
            ids.push(id.clone());
            segments.push(Vec::new());
        }
        segments.last_mut().unwrap().push((t.f(r, cx)?, t.f(r, cp)?, t.f(r, cv)?));
    }
    segments.retain(|s| s.len() >= 2);
    if segments.is_empty() {
        return Err(CliError::Input("profile has no segment with two samples".into()));
    }
    for s in &mut segments {
        s.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let lo = segments.iter().map(|s| s[0].0).fold(f64::INFINITY, f64::min);
    // period and tails come from the profile metadata next to the CSV
    let mut period = f64::INFINITY;
    let mut tails = Vec::new();
    if let Ok(b) = fs::read(input.with_file_name("profile.json")) {
        let m: Value = serde_json::from_slice(&b).map_err(|e| CliError::Input(format!("profile.json: {e}")))?;
        if let Some(p) = from_jf(&m["period"]) {
            if p.is_finite() && p > 0.0 {
                period = p;
            }
        }
        if let Some(ts) = m["tails"].as_array() {
            for t in ts {
                let g = |k: &str| from_jf(&t[k]).ok_or_else(|| CliError::Input(format!("profile.json: tail field {k}")));
                tails.push(TailSpec {
                    xi_end: g("xi_end")?,
                    direction: g("direction")?,
                    phi_end: g("phi_end")?,
                    base: g("base")?,
                    rate: g("rate")?,
                });
            }
        }
    }
    let mut boundaries: Vec<f64> = segments.iter().flat_map(|s| [s[0].0, s[s.len() - 1].0]).collect();
    if period.is_finite() {
        for b in &mut boundaries {
            *b = lo + (*b - lo).rem_euclid(period);
        }
    }
    boundaries.sort_by(|a, b| a.total_cmp(b));
    boundaries.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
    if period.is_finite() && boundaries.len() > 1 && (boundaries[boundaries.len() - 1] - boundaries[0] - period).abs() <= 1e-9 * period {
        boundaries.pop();
    }
    Ok(SampledProfile {
        params,
        segments,
        lo,
        period,
        tails,
        boundaries,
    })
}

// ---------------------------------------------------------------------------
// sampled peakon trajectory

/// mCH peakons `u = Σ p_i G(x - x_i(t)) + b` with positions interpolated by
/// cubic Hermite in t from the recorded states and their exact velocities.
pub struct SampledPeakons {
    ell: f64,
    k: f64,
    background: f64,
    times: Vec<f64>,
    x: Vec<Vec<f64>>,
    dx: Vec<Vec<f64>>,
    p: Vec<f64>,
}

impl SampledPeakons {
    fn positions(&self, t: f64) -> Vec<f64> {
        let i = self.times.partition_point(|&s| s < t).clamp(1, self.times.len() - 1);
        let (a, b) = (self.times[i - 1], self.times[i]);
        (0..self.p.len())
            .map(|j| hermite(a, b, self.x[i - 1][j], self.x[i][j], self.dx[i - 1][j], self.dx[i][j], t))
            .collect()
    }
}

impl Candidate for SampledPeakons {
    fn eval(&self, x: f64, t: f64) -> (f64, f64) {
        let pos = self.positions(t);
        let mut u = self.background;
        let mut ux = 0.0;
        for (xi, pi) in pos.iter().zip(&self.p) {
            u += pi * fundamental_solution(self.ell, x - xi);
            ux += pi * fundamental_derivative(self.ell, x - xi).1;
        }
        (u, ux)
    }
    fn lines(&self) -> Vec<Line> {
        (0..self.p.len())
            .map(|j| Line {
                x0: self.x[0][j],
                speed: self.dx[0][j],
            })
            .collect()
    }
    fn ell(&self) -> f64 {
        self.ell
    }
    fn k(&self) -> f64 {
        self.k
    }
    fn breaks(&self, t: f64, lo: f64, hi: f64) -> Vec<f64> {
        let mut out = Vec::new();
        for x in self.positions(t) {
            if self.ell.is_finite() {
                let mut y = x + self.ell * ((lo - x) / self.ell).ceil();
                while y < hi {
                    if y > lo {
                        out.push(y);
                    }
                    y += self.ell;
                }
            } else if x > lo && x < hi {
                out.push(x);
            }
        }
        out.sort_by(|a, b| a.total_cmp(b));
        out.dedup();
        out
    }
}

struct TrajectoryData {
    model: Model,
    ell: f64,
    k: f64,
    times: Vec<f64>,
    x: Vec<Vec<f64>>,
    p: Vec<Vec<f64>>,
    h0: Vec<f64>,
}

fn load_trajectory(input: &Path, fallback: &ModelParams) -> Result<TrajectoryData, CliError> {
    let t = Table::read(input)?;
    let prov = provenance(input)?;
    let params = prov.params.unwrap_or(*fallback);
    let model = match prov.options["model"].as_str() {
        Some("ch") => Model::Ch,
        _ => Model::Mch,
    };
    let n = (t.header.len() - 2) / 2;
    let mut d = TrajectoryData {
        model,
        ell: params.ell,
        k: params.k,
        times: vec![],
        x: vec![],
        p: vec![],
        h0: vec![],
    };
    for r in 0..t.rows.len() {
        d.times.push(t.f(r, 0)?);
        d.x.push((0..n).map(|j| t.f(r, 1 + j)).collect::<Result<_, _>>()?);
        d.p.push((0..n).map(|j| t.f(r, 1 + n + j)).collect::<Result<_, _>>()?);
        d.h0.push(t.f(r, 1 + 2 * n)?);
    }
    if d.times.len() < 2 {
        return Err(CliError::Input("trajectory needs at least two rows".into()));
    }
    Ok(d)
}

fn sampled_peakons(d: &TrajectoryData) -> Result<SampledPeakons, CliError> {
    let mut dx = Vec::with_capacity(d.times.len());
    let mut background = 0.0;
    for (x, p) in d.x.iter().zip(&d.p) {
        let e = PeakonEnsemble::new(Model::Mch, d.ell, d.k, x.clone(), p.clone())?;
        background = e.background();
        dx.push(mch_rhs(&e)?);
    }
    Ok(SampledPeakons {
        ell: d.ell,
        k: d.k,
        background,
        times: d.times.clone(),
        x: d.x.clone(),
        dx,
        p: d.p[0].clone(),
    })
}

// ---------------------------------------------------------------------------
// reports

fn weak_report(kind: &str, rep: &SuiteReport, tol: f64, extra: Vec<(&'static str, Value)>) -> Value {
    let per: Vec<Value> = rep
        .per_test
        .iter()
        .map(|r| {
            obj([
                ("x0", jf(r.test.x0)),
                ("t0", jf(r.test.t0)),
                ("rx", jf(r.test.rx)),
                ("rt", jf(r.test.rt)),
                ("residual", jf(r.residual)),
                ("scale", jf(r.scale)),
                ("sup_scale", jf(r.sup_scale)),
                ("normalized", jf(r.normalized)),
                ("straddles", r.straddles.into()),
            ])
        })
        .collect();
    let mut items = vec![
        ("kind", Value::from(kind)),
        ("n_tests", rep.n_tests.into()),
        ("seed", rep.seed.into()),
        ("max_residual", jf(rep.max_residual)),
        ("median_residual", jf(rep.median_residual)),
        ("tolerance", jf(tol)),
        ("pass", (rep.max_residual <= tol).into()),
        ("per_test", Value::Array(per)),
    ];
    items.extend(extra);
    obj(items)
}

/// Report for the non-weak checks: one record per check.
fn check_report(kind: &str, seed: u64, checks: Vec<(String, f64)>, tol: f64, extra: Vec<(&'static str, Value)>) -> Value {
    let mut vals: Vec<f64> = checks.iter().map(|c| c.1).collect();
    vals.sort_by(|a, b| a.total_cmp(b));
    let max = vals.last().copied().unwrap_or(0.0);
    let median = if vals.is_empty() {
        0.0
    } else if vals.len() % 2 == 1 {
        vals[vals.len() / 2]
    } else {
        0.5 * (vals[vals.len() / 2 - 1] + vals[vals.len() / 2])
    };
    let per: Vec<Value> = checks
        .into_iter()
        .map(|(name, v)| obj([("check", name.into()), ("residual", jf(v))]))
        .collect();
    let mut items = vec![
        ("kind", Value::from(kind)),
        ("n_tests", per.len().into()),
        ("seed", seed.into()),
        ("max_residual", jf(max)),
        ("median_residual", jf(median)),
        ("tolerance", jf(tol)),
        ("pass", (max <= tol).into()),
        ("per_test", Value::Array(per)),
    ];
    items.extend(extra);
    obj(items)
}

pub fn verify(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let Task::Verify { input, p, speed, tests, t_end } = &cfg.task else {
        unreachable!()
    };
    let tol = cfg.tol("verify");
    let mut opts = SuiteOptions {
        t_end: *t_end,
        ..SuiteOptions::default()
    };
    opts.weak.rtol = cfg.tol("weak");
    let report = match input {
        None => {
            let pr = cfg.params;
            let c = match speed {
                Some(s) => *s,
                None => single_peakon_speed(pr.ell, pr.k, *p)?,
            };
            let cand = PeakonCandidate::new(*p, c, 0.0, pr.k, pr.ell);
            let rep = residual_suite_with(&cand, cfg.seed, *tests, &opts)?;
            weak_report(
                "peakon",
                &rep,
                tol,
                vec![("params", params_json(&pr)), ("p", jf(*p)), ("speed", jf(c))],
            )
        }
        Some(path) => {
            let header = Table::read(path)?.header;
            let kind = detect(&header).ok_or_else(|| CliError::Input(format!("unrecognized CSV header {:?}", header.join(","))))?;
            match kind {
                InputKind::Profile => {
                    let cand = load_profile(path, &cfg.params)?;
                    if cand.period.is_finite() {
                        opts.rx.1 = opts.rx.1.min(0.45 * cand.period);
                        opts.rx.0 = opts.rx.0.min(0.5 * opts.rx.1);
                    }
                    let rep = residual_suite_with(&cand, cfg.seed, *tests, &opts)?;
                    weak_report("profile", &rep, tol, vec![("params", params_json(&cand.params))])
                }
                InputKind::Trajectory => {
                    let d = load_trajectory(path, &cfg.params)?;
                    let span = d.times[d.times.len() - 1] - d.times[0];
                    match d.model {
                        Model::Mch => {
                            let cand = sampled_peakons(&d)?;
                            opts.t_end = opts.t_end.min(span);
                            let rep = residual_suite_with(&cand, cfg.seed, *tests, &opts)?;
                            weak_report("trajectory", &rep, tol, vec![])
                        }
                        Model::Ch => {
                            // the weak form is that of mCH; CH runs are checked
                            // through their Hamiltonian instead
                            let h0 = d.h0[0];
                            let mut recompute = 0.0f64;
                            for ((x, p), h) in d.x.iter().zip(&d.p).zip(&d.h0) {
                                let e = PeakonEnsemble::new(Model::Ch, d.ell, 0.0, x.clone(), p.clone())?;
                                recompute = recompute.max((e.h0() - h).abs() / h.abs().max(f64::MIN_POSITIVE));
                                ch_rhs(&e)?;
                            }
                            let drift = d.h0.iter().map(|h| (h - h0).abs() / h0.abs().max(f64::MIN_POSITIVE)).fold(0.0, f64::max);
                            check_report(
                                "trajectory_energy",
                                cfg.seed,
                                vec![("h0_recompute".into(), recompute), ("h0_drift".into(), drift)],
                                tol,
                                vec![],
                            )
                        }
                    }
                }
                InputKind::LevelSet => {
                    let t = Table::read(path)?;
                    let pr = provenance(path)?.params.unwrap_or(cfg.params);
                    let (a, b, c) = (t.col("phi")?, t.col("v")?, t.col("h")?);
                    let mut worst = 0.0f64;
                    for r in 0..t.rows.len() {
                        let (phi, v, h) = (t.f(r, a)?, t.f(r, b)?, t.f(r, c)?);
                        let hv = hamiltonian(&pr, PhasePoint::new(phi, v));
                        worst = worst.max((hv - h).abs() / (1.0 + h.abs() + phi.powi(4) + v.powi(4)));
                    }
                    check_report("level_set", cfg.seed, vec![("level_residual".into(), worst)], tol, vec![("rows", t.rows.len().into())])
                }
                InputKind::Curve => {
                    let t = Table::read(path)?;
                    let (a, b, c) = (t.col("s")?, t.col("x")?, t.col("y")?);
                    let mut worst = 0.0f64;
                    let mut prev: Option<(f64, f64, f64)> = None;
                    let mut first = None;
                    for r in 0..t.rows.len() {
                        let q = (t.f(r, a)?, t.f(r, b)?, t.f(r, c)?);
                        first.get_or_insert(q);
                        if let Some(p) = prev {
                            let ds = q.0 - p.0;
                            if !(ds > 0.0) {
                                return Err(CliError::Input(format!("row {}: s is not increasing", r + 1)));
                            }
                            let chord = (q.1 - p.1).hypot(q.2 - p.2);
                            // a unit-speed curve has chord ≤ arclength
                            worst = worst.max((chord - ds).max(0.0) / ds);
                        }
                        prev = Some(q);
                    }
                    let (f, l) = (first.unwrap_or_default(), prev.unwrap_or_default());
                    let gap = (f.1 - l.1).hypot(f.2 - l.2);
                    check_report("curve", cfg.seed, vec![("speed_excess".into(), worst)], tol, vec![("gap", jf(gap))])
                }
                InputKind::Sweep => {
                    let t = Table::read(path)?;
                    let pr = provenance(path)?.params.unwrap_or(cfg.params);
                    let (a, b, c) = (t.col("h")?, t.col("theta_total")?, t.col("T")?);
                    let mut checks = Vec::new();
                    let mut worst = (0.0f64, 0.0f64);
                    for r in 0..t.rows.len() {
                        let (h, th, per) = (t.f(r, a)?, t.f(r, b)?, t.f(r, c)?);
                        let x = theta_total(&pr, h)?;
                        worst.0 = worst.0.max((x.theta - th).abs() / (1.0 + th.abs()));
                        worst.1 = worst.1.max((x.period - per).abs() / (1.0 + per.abs()));
                    }
                    checks.push(("theta_recompute".into(), worst.0));
                    checks.push(("period_recompute".into(), worst.1));
                    check_report("sweep", cfg.seed, checks, tol, vec![("rows", t.rows.len().into())])
                }
            }
        }
    };
    Ok(vec![Artifact::new("verify_report.json", json_bytes(&report))])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(s: &str) -> Vec<String> {
        s.split(',').map(str::to_string).collect()
    }

    #[test]
    fn headers_are_recognized() {
        assert_eq!(detect(&h("xi,phi,v,segment_id")), Some(InputKind::Profile));
        assert_eq!(detect(&h("t,x_1,x_2,p_1,p_2,H0")), Some(InputKind::Trajectory));
        assert_eq!(detect(&h("t,x_1,p_2,H0")), None);
        assert_eq!(detect(&h("phi,v,h,sign")), Some(InputKind::LevelSet));
        assert_eq!(detect(&h("s,x,y")), Some(InputKind::Curve));
        assert_eq!(detect(&h("h,theta_total,T")), Some(InputKind::Sweep));
        assert_eq!(detect(&h("a,b")), None);
    }
}
