//! Weak-form residuals of candidate mCH solutions.
//!
//! For a test function φ the residual is
//!
//! ```text
//! ∬ u(φ_t - φ_xxt) + (2ku + u³ + u u_x²) φ_x - u³φ_xxx/3 - u_x³φ_xx/3  dx dt
//!   + ∫ u(x,0) (φ - φ_xx)(x,0) dx
//! ```
//!
//! The x-integral at each time is split at the candidate's slope
//! discontinuities, so every panel sees a smooth integrand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::numerics::quad::gl20;
use crate::peakon_dynamics::{fundamental_derivative, fundamental_solution};
use crate::wave_builder::WaveProfile;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("quadrature stalled on [{a}, {b}] (error {err:e})")]
    Quadrature { a: f64, b: f64, err: f64 },
    #[error("invalid test function: {0}")]
    InvalidTest(String),
}

/// `exp(-1/(1-s²))` and its first three derivatives (zero for |s| ≥ 1).
pub fn mollifier(s: f64) -> [f64; 4] {
    let w = 1.0 - s * s;
    if w <= 0.0 {
        return [0.0; 4];
    }
    let b = (-1.0 / w).exp();
    let f1 = -2.0 * s / (w * w);
    let f2 = -2.0 / (w * w) - 8.0 * s * s / (w * w * w);
    let f3 = -24.0 * s / (w * w * w) - 48.0 * s * s * s / (w * w * w * w);
    [b, f1 * b, (f2 + f1 * f1) * b, (f3 + 3.0 * f1 * f2 + f1 * f1 * f1) * b]
}

/// Product bump `B((x-x0)/rx) B((t-t0)/rt)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestFunction {
    pub x0: f64,
    pub t0: f64,
    pub rx: f64,
    pub rt: f64,
}

/// Values of the test function and the derivatives the weak form uses.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BumpJet {
    pub phi: f64,
    pub x: f64,
    pub xx: f64,
    pub xxx: f64,
    pub t: f64,
    pub xxt: f64,
}

impl TestFunction {
    pub fn new(x0: f64, t0: f64, rx: f64, rt: f64) -> Result<Self, VerifyError> {
        if !(rx > 0.0 && rt > 0.0 && x0.is_finite() && t0.is_finite()) {
            return Err(VerifyError::InvalidTest(format!("x0={x0}, t0={t0}, rx={rx}, rt={rt}")));
        }
        Ok(Self { x0, t0, rx, rt })
    }

    pub fn jet(&self, x: f64, t: f64) -> BumpJet {
        let (bt, dbt) = self.time_factor(t);
        self.jet_with(x, bt, dbt)
    }

    /// Time profile and its derivative at `t`.
    pub fn time_factor(&self, t: f64) -> (f64, f64) {
        let bt = mollifier((t - self.t0) / self.rt);
        (bt[0], bt[1] / self.rt)
    }

    /// Jet at `x` for given values of the time profile and its derivative.
    pub fn jet_with(&self, x: f64, bt: f64, dbt: f64) -> BumpJet {
        let bx = mollifier((x - self.x0) / self.rx);
        let ix = 1.0 / self.rx;
        BumpJet {
            phi: bx[0] * bt,
            x: bx[1] * ix * bt,
            xx: bx[2] * ix * ix * bt,
            xxx: bx[3] * ix * ix * ix * bt,
            t: bx[0] * dbt,
            xxt: bx[2] * ix * ix * dbt,
        }
    }

    pub fn x_support(&self) -> (f64, f64) {
        (self.x0 - self.rx, self.x0 + self.rx)
    }

    pub fn t_support(&self) -> (f64, f64) {
        (self.t0 - self.rt, self.t0 + self.rt)
    }

    /// Scales the bump by a constant, for linearity checks.
    pub fn scaled(&self, a: f64) -> ScaledTest {
        ScaledTest { base: *self, a }
    }
}

/// `a·φ`, used to check linearity without a general test-function algebra.
#[derive(Debug, Clone, Copy)]
pub struct ScaledTest {
    pub base: TestFunction,
    pub a: f64,
}

/// Straight slope discontinuity `x = x0 + speed·t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Line {
    pub x0: f64,
    pub speed: f64,
}

impl Line {
    pub fn at(&self, t: f64) -> f64 {
        self.x0 + self.speed * t
    }
}

/// A piecewise smooth candidate solution.
pub trait Candidate: Sync {
    /// `(u, u_x)` at `(x, t)`; only called away from discontinuities.
    fn eval(&self, x: f64, t: f64) -> (f64, f64);
    /// Discontinuity lines within one period (or all of them on the line).
    fn lines(&self) -> Vec<Line>;
    /// Spatial period, infinite on the line.
    fn ell(&self) -> f64;
    fn k(&self) -> f64;

    /// Sorted discontinuity positions inside `(lo, hi)` at time `t`,
    /// including periodic images.
    fn breaks(&self, t: f64, lo: f64, hi: f64) -> Vec<f64> {
        let ell = self.ell();
        let mut out = Vec::new();
        for l in self.lines() {
            let x = l.at(t);
            if ell.is_finite() {
                let mut y = x + ell * ((lo - x) / ell).ceil();
                while y < hi {
                    if y > lo {
                        out.push(y);
                    }
                    y += ell;
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

/// `u = p G(x - x0 - c t) + b` with the constant background `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakonCandidate {
    pub p: f64,
    pub speed: f64,
    pub x0: f64,
    pub k: f64,
    pub ell: f64,
    pub background: f64,
}

impl PeakonCandidate {
    pub fn new(p: f64, speed: f64, x0: f64, k: f64, ell: f64) -> Self {
        let background = if k < 0.0 { -(-k).sqrt() } else { 0.0 };
        Self {
            p,
            speed,
            x0,
            k,
            ell,
            background,
        }
    }
}

impl Candidate for PeakonCandidate {
    fn eval(&self, x: f64, t: f64) -> (f64, f64) {
        let y = x - self.x0 - self.speed * t;
        let (_, d) = fundamental_derivative(self.ell, y);
        (self.p * fundamental_solution(self.ell, y) + self.background, self.p * d)
    }
    fn lines(&self) -> Vec<Line> {
        vec![Line {
            x0: self.x0,
            speed: self.speed,
        }]
    }
    fn ell(&self) -> f64 {
        self.ell
    }
    fn k(&self) -> f64 {
        self.k
    }
}

/// `u(x, t) = φ(x - c t - shift)` for a built profile.
#[derive(Debug, Clone)]
pub struct TravelingCandidate {
    pub profile: WaveProfile,
    pub speed: f64,
    pub shift: f64,
}

impl TravelingCandidate {
    pub fn new(profile: WaveProfile) -> Self {
        let speed = profile.params.c;
        Self {
            profile,
            speed,
            shift: 0.0,
        }
    }

    pub fn with_speed(mut self, speed: f64) -> Self {
        self.speed = speed;
        self
    }

    pub fn with_shift(mut self, shift: f64) -> Self {
        self.shift = shift;
        self
    }
}

impl Candidate for TravelingCandidate {
    fn eval(&self, x: f64, t: f64) -> (f64, f64) {
        self.profile
            .eval(x - self.speed * t - self.shift)
            .unwrap_or((f64::NAN, f64::NAN))
    }
    fn lines(&self) -> Vec<Line> {
        self.profile
            .joints
            .iter()
            .map(|j| Line {
                x0: j.xi + self.shift,
                speed: self.speed,
            })
            .collect()
    }
    fn ell(&self) -> f64 {
        self.profile.period.abs()
    }
    fn k(&self) -> f64 {
        self.profile.params.k
    }
}

/// Candidate given by a closure.
pub struct FnCandidate<F> {
    pub f: F,
    pub lines: Vec<Line>,
    pub ell: f64,
    pub k: f64,
}

impl<F: Fn(f64, f64) -> (f64, f64) + Sync> Candidate for FnCandidate<F> {
    fn eval(&self, x: f64, t: f64) -> (f64, f64) {
        (self.f)(x, t)
    }
    fn lines(&self) -> Vec<Line> {
        self.lines.clone()
    }
    fn ell(&self) -> f64 {
        self.ell
    }
    fn k(&self) -> f64 {
        self.k
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residual {
    /// Signed value of the weak form.
    pub value: f64,
    /// `∬ Σ|term|` plus the initial-data mass: the size the terms cancel from.
    pub scale: f64,
    /// `(1 + sup|u|)³ · sup|∂φ| · support area`.
    pub sup_scale: f64,
}

impl Residual {
    pub fn normalized(&self) -> f64 {
        if self.scale > 0.0 {
            self.value.abs() / self.scale
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct WeakOptions {
    /// Relative tolerance of the time integral.
    pub rtol: f64,
    /// Relative tolerance of each spatial integral; kept well below `rtol`
    /// so inner noise does not drive outer refinement.
    pub inner_rtol: f64,
    pub max_depth: usize,
}

impl Default for WeakOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            inner_rtol: 1e-12,
            max_depth: 30,
        }
    }
}

fn gl_panel<F: Fn(f64) -> [f64; 2]>(f: &F, a: f64, b: f64) -> [f64; 2] {
    let mut s = [0.0; 2];
    for (x, w) in gl20().mapped(a, b) {
        let v = f(x);
        s[0] += w * v[0];
        s[1] += w * v[1];
    }
    s
}

// Adaptive GL20 on a pair (signed, absolute). A panel of width h passes once
// its signed error is below `rtol · mass · h / span`, where `mass` is the
// absolute integral over the whole split range of length `span`; exact
// cancellation in the signed part then cannot force refinement to
// round-off. The absolute channel has kinks where terms change sign and only
// sets the scale, so it is not refined on. `noise` is the relative accuracy
// of the integrand itself.
#[allow(clippy::too_many_arguments)]
fn adapt2<F: Fn(f64) -> [f64; 2]>(
    f: &F,
    a: f64,
    b: f64,
    mass: f64,
    span: f64,
    rtol: f64,
    noise: f64,
    max_depth: usize,
) -> Result<[f64; 2], VerifyError> {
    let mut total = [0.0; 2];
    let mut stack = vec![(a, b, gl_panel(f, a, b), 0usize)];
    while let Some((lo, hi, est, depth)) = stack.pop() {
        let m = 0.5 * (lo + hi);
        let l = gl_panel(f, lo, m);
        let r = gl_panel(f, m, hi);
        let both = [l[0] + r[0], l[1] + r[1]];
        let err = (both[0] - est[0]).abs();
        let tol = rtol * mass * (hi - lo) / span;
        if err <= tol || err <= noise * both[1].abs() || err < 1e-280 {
            total[0] += both[0];
            total[1] += both[1];
            continue;
        }
        if depth >= max_depth || m <= lo || m >= hi {
            return Err(VerifyError::Quadrature { a: lo, b: hi, err });
        }
        stack.push((lo, m, l, depth + 1));
        stack.push((m, hi, r, depth + 1));
    }
    Ok(total)
}

fn split_integral<F: Fn(f64) -> [f64; 2]>(
    f: &F,
    lo: f64,
    hi: f64,
    cuts: &[f64],
    rtol: f64,
    noise: f64,
    max_depth: usize,
) -> Result<[f64; 2], VerifyError> {
    let mut pts = vec![lo];
    pts.extend(cuts.iter().copied().filter(|&c| c > lo && c < hi));
    pts.push(hi);
    // coarse mass estimate: four panels per piece
    let mut mass = 0.0;
    for w in pts.windows(2) {
        let h = 0.25 * (w[1] - w[0]);
        for i in 0..4 {
            mass += gl_panel(f, w[0] + i as f64 * h, w[0] + (i + 1) as f64 * h)[1].abs();
        }
    }
    if mass == 0.0 {
        return Ok([0.0; 2]);
    }
    let mut s = [0.0; 2];
    for w in pts.windows(2) {
        let v = adapt2(f, w[0], w[1], mass, hi - lo, rtol, noise, max_depth)?;
        s[0] += v[0];
        s[1] += v[1];
    }
    Ok(s)
}

fn integrand(u: f64, ux: f64, k: f64, j: &BumpJet) -> [f64; 2] {
    let u3 = u * u * u;
    let terms = [
        u * (j.t - j.xxt),
        (2.0 * k * u + u3 + u * ux * ux) * j.x,
        -u3 * j.xxx / 3.0,
        -ux * ux * ux * j.xx / 3.0,
    ];
    [terms.iter().sum(), terms.iter().map(|v| v.abs()).sum()]
}

/// Weak-form residual of `cand` against `test` on `[0, t_end)`.
pub fn weak_residual<C: Candidate + ?Sized>(cand: &C, test: &TestFunction, t_end: f64) -> Result<Residual, VerifyError> {
    weak_residual_with(cand, test, t_end, &WeakOptions::default())
}

pub fn weak_residual_with<C: Candidate + ?Sized>(
    cand: &C,
    test: &TestFunction,
    t_end: f64,
    opts: &WeakOptions,
) -> Result<Residual, VerifyError> {
    let (xl, xr) = test.x_support();
    let (tl, tr) = test.t_support();
    if tr > t_end {
        return Err(VerifyError::InvalidTest(format!(
            "support reaches t = {tr} beyond t_end = {t_end}"
        )));
    }
    if tr <= 0.0 {
        return Err(VerifyError::InvalidTest("support lies before t = 0".into()));
    }
    let ell = cand.ell();
    if ell.is_finite() && 2.0 * test.rx >= ell {
        return Err(VerifyError::InvalidTest(format!(
            "radius {} not below half the period {ell}",
            test.rx
        )));
    }
    let k = cand.k();
    // the time profile is factored out so each spatial integral is O(1)
    // even where the bump is near underflow
    let inner = |t: f64| -> Result<[f64; 2], VerifyError> {
        let (bt, dbt) = test.time_factor(t);
        let scale = bt.abs() + dbt.abs();
        if scale == 0.0 {
            return Ok([0.0; 2]);
        }
        let (bt, dbt) = (bt / scale, dbt / scale);
        let cuts = cand.breaks(t, xl, xr);
        let v = split_integral(
            &|x| {
                let (u, ux) = cand.eval(x, t);
                integrand(u, ux, k, &test.jet_with(x, bt, dbt))
            },
            xl,
            xr,
            &cuts,
            opts.inner_rtol,
            4.0 * f64::EPSILON,
            opts.max_depth,
        )?;
        Ok([v[0] * scale, v[1] * scale])
    };
    let t_lo = tl.max(0.0);
    // the outer integrand is smooth, so errors from the inner solves are
    // written into a cell and surfaced after the sweep
    let failure = std::sync::Mutex::new(None);
    let outer = |t: f64| match inner(t) {
        Ok(v) => v,
        Err(e) => {
            *failure.lock().unwrap() = Some(e);
            [0.0; 2]
        }
    };
    let mut total = split_integral(&outer, t_lo, tr, &[], opts.rtol, 10.0 * opts.inner_rtol, opts.max_depth)?;
    if let Some(e) = failure.lock().unwrap().take() {
        return Err(e);
    }
    if tl < 0.0 {
        let cuts = cand.breaks(0.0, xl, xr);
        let init = split_integral(
            &|x| {
                let (u, _) = cand.eval(x, 0.0);
                let j = test.jet(x, 0.0);
                let v = u * (j.phi - j.xx);
                [v, (u * j.phi).abs() + (u * j.xx).abs()]
            },
            xl,
            xr,
            &cuts,
            opts.inner_rtol,
            4.0 * f64::EPSILON,
            opts.max_depth,
        )?;
        total[0] += init[0];
        total[1] += init[1];
    }
    Ok(Residual {
        value: total[0],
        scale: total[1],
        sup_scale: sup_scale(cand, test, t_lo, tr),
    })
}

fn sup_scale<C: Candidate + ?Sized>(cand: &C, test: &TestFunction, t_lo: f64, t_hi: f64) -> f64 {
    let (xl, xr) = test.x_support();
    let n = 48;
    let mut su: f64 = 0.0;
    let mut sd: f64 = 0.0;
    for i in 0..n {
        let x = xl + (xr - xl) * (i as f64 + 0.5) / n as f64;
        for j in 0..n {
            let t = t_lo + (t_hi - t_lo) * (j as f64 + 0.5) / n as f64;
            su = su.max(cand.eval(x, t).0.abs());
            let b = test.jet(x, t);
            for d in [b.phi, b.x, b.xx, b.xxx, b.t, b.xxt] {
                sd = sd.max(d.abs());
            }
        }
    }
    (1.0 + su).powi(3) * sd * (xr - xl) * (t_hi - t_lo)
}

/// Residual of `a φ`, evaluated directly from the scaled jet.
pub fn weak_residual_scaled<C: Candidate + ?Sized>(cand: &C, test: &ScaledTest, t_end: f64) -> Result<f64, VerifyError> {
    Ok(test.a * weak_residual(cand, &test.base, t_end)?.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestRecord {
    pub test: TestFunction,
    pub residual: f64,
    pub scale: f64,
    pub sup_scale: f64,
    pub normalized: f64,
    /// Whether the bump was placed across a discontinuity line.
    pub straddles: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub n_tests: usize,
    pub seed: u64,
    pub max_residual: f64,
    pub median_residual: f64,
    pub per_test: Vec<TestRecord>,
}

#[derive(Debug, Clone, Copy)]
pub struct SuiteOptions {
    pub t_end: f64,
    /// Window for bumps that are not tied to a discontinuity.
    pub x_range: (f64, f64),
    pub rx: (f64, f64),
    pub rt: (f64, f64),
    pub weak: WeakOptions,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            t_end: 2.0,
            x_range: (-5.0, 5.0),
            rx: (0.5, 1.5),
            rt: (0.3, 0.8),
            weak: WeakOptions::default(),
        }
    }
}

/// Seeded bump placement: even-numbered bumps sit across a discontinuity
/// line (offset from it by up to 40% of the radius), the rest are uniform
/// in the window.
pub fn suite_bumps<C: Candidate + ?Sized>(cand: &C, seed: u64, n_tests: usize, opts: &SuiteOptions) -> Vec<(TestFunction, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lines = cand.lines();
    let ell = cand.ell();
    let mut out = Vec::with_capacity(n_tests);
    for i in 0..n_tests {
        let mut rx = rng.gen_range(opts.rx.0..=opts.rx.1);
        if ell.is_finite() {
            rx = rx.min(0.45 * ell);
        }
        let rt = rng.gen_range(opts.rt.0..=opts.rt.1).min(0.45 * opts.t_end);
        let t0 = rng.gen_range(0.5 * rt..=opts.t_end - rt);
        let straddle = i % 2 == 0 && !lines.is_empty();
        let x0 = if straddle {
            let l = lines[(i / 2) % lines.len()];
            l.at(t0) + rng.gen_range(-0.4..=0.4) * rx
        } else {
            rng.gen_range(opts.x_range.0..=opts.x_range.1)
        };
        out.push((TestFunction { x0, t0, rx, rt }, straddle));
    }
    out
}

pub fn residual_suite<C: Candidate + ?Sized>(cand: &C, seed: u64, n_tests: usize) -> Result<SuiteReport, VerifyError> {
    residual_suite_with(cand, seed, n_tests, &SuiteOptions::default())
}

pub fn residual_suite_with<C: Candidate + ?Sized>(
    cand: &C,
    seed: u64,
    n_tests: usize,
    opts: &SuiteOptions,
) -> Result<SuiteReport, VerifyError> {
    let bumps = suite_bumps(cand, seed, n_tests, opts);
    let per_test = bumps
        .par_iter()
        .map(|(test, straddles)| {
            let r = weak_residual_with(cand, test, opts.t_end, &opts.weak)?;
            Ok(TestRecord {
                test: *test,
                residual: r.value,
                scale: r.scale,
                sup_scale: r.sup_scale,
                normalized: r.normalized(),
                straddles: *straddles,
            })
        })
        .collect::<Result<Vec<_>, VerifyError>>()?;
    let mut norms: Vec<f64> = per_test.iter().map(|r| r.normalized).collect();
    norms.sort_by(|a, b| a.total_cmp(b));
    let max_residual = norms.last().copied().unwrap_or(0.0);
    let median_residual = if norms.is_empty() {
        0.0
    } else if norms.len() % 2 == 1 {
        norms[norms.len() / 2]
    } else {
        0.5 * (norms[norms.len() / 2 - 1] + norms[norms.len() / 2])
    };
    Ok(SuiteReport {
        n_tests,
        seed,
        max_residual,
        median_residual,
        per_test,
    })
}
