//! Peakon particle dynamics.
//!
//! `u(x, t) = Σ p_i G(x - x_i(t))` (plus the constant `-√(-k)` for mCH with
//! `k < 0`), where `G` is the kernel of `(1 - ∂xx)⁻¹` on the line or on the
//! circle of length ℓ. For mCH the amplitudes are constants and the
//! positions move with `u² - (u_x⁺² + u_x⁺u_x⁻ + u_x⁻²)/3`; for CH
//! `(x_i, p_i)` follow the canonical equations of `½ Σ p_i p_j G(x_i - x_j)`.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;
use thiserror::Error;

use crate::numerics::ode::{integrate, Event, IntegratorError, OdeSystem, Tolerances};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PeakonError {
    #[error("no peakon of the form pG(x - ct) - B exists for k = {k} > 0")]
    NoPeakon { k: f64 },
    #[error("positions must be strictly increasing (x[{index}] = {left} ≥ x[{}] = {right})", index + 1)]
    Ordering { index: usize, left: f64, right: f64 },
    #[error("invalid ensemble: {0}")]
    Invalid(String),
    #[error("grid of {n} samples does not resolve the profile (tail energy ratio {ratio:e})")]
    Resolution { n: usize, ratio: f64 },
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
}

/// `coth(ℓ/2)`, equal to 1 on the line.
pub fn coth_half(ell: f64) -> f64 {
    if ell.is_infinite() {
        1.0
    } else {
        let e = (-ell).exp();
        (1.0 + e) / (1.0 - e)
    }
}

/// Reduces `x` into `[-ℓ/2, ℓ/2)`; identity on the line.
pub fn reduce(ell: f64, x: f64) -> f64 {
    if ell.is_infinite() {
        x
    } else {
        x - ell * (x / ell + 0.5).floor()
    }
}

/// The fundamental solution `G` of `1 - ∂xx`.
pub fn fundamental_solution(ell: f64, x: f64) -> f64 {
    if ell.is_infinite() {
        0.5 * (-x.abs()).exp()
    } else {
        let a = reduce(ell, x).abs();
        ((-a).exp() + (a - ell).exp()) / (2.0 * (1.0 - (-ell).exp()))
    }
}

/// One-sided derivatives `(G_x(x-), G_x(x+))`; they differ only at
/// multiples of ℓ, where the jump is -1.
pub fn fundamental_derivative(ell: f64, x: f64) -> (f64, f64) {
    let r = reduce(ell, x);
    let mag = |a: f64| {
        if ell.is_infinite() {
            0.5 * (-a).exp()
        } else {
            ((-a).exp() - (a - ell).exp()) / (2.0 * (1.0 - (-ell).exp()))
        }
    };
    if r == 0.0 {
        (0.5, -0.5)
    } else {
        let d = -r.signum() * mag(r.abs());
        (d, d)
    }
}

/// Mean of the one-sided derivatives (zero at the peak).
pub fn fundamental_derivative_mean(ell: f64, x: f64) -> f64 {
    let (a, b) = fundamental_derivative(ell, x);
    0.5 * (a + b)
}

/// Speed of the single mCH peakon `pG(x - ct) - √(-k)`.
pub fn single_peakon_speed(ell: f64, k: f64, p: f64) -> Result<f64, PeakonError> {
    if k > 0.0 {
        return Err(PeakonError::NoPeakon { k });
    }
    let ct = coth_half(ell);
    if k == 0.0 {
        if ell.is_infinite() {
            Ok(p * p / 6.0)
        } else {
            Ok(0.25 * p * p * (ct * ct - 1.0 / 3.0))
        }
    } else {
        let s = (-k).sqrt();
        let a = 0.5 * p * ct - s;
        Ok(a * a - p * p / 12.0)
    }
}

/// Speed `(p/2) coth(ℓ/2)` of the single CH peakon.
pub fn single_ch_peakon_speed(ell: f64, p: f64) -> f64 {
    0.5 * p * coth_half(ell)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Model {
    Mch,
    Ch,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeakonEnsemble {
    pub model: Model,
    pub ell: f64,
    /// Dispersion coefficient (mCH only; enters through the background).
    pub k: f64,
    pub positions: Vec<f64>,
    pub amplitudes: Vec<f64>,
}

impl PeakonEnsemble {
    pub fn new(model: Model, ell: f64, k: f64, positions: Vec<f64>, amplitudes: Vec<f64>) -> Result<Self, PeakonError> {
        if positions.len() != amplitudes.len() || positions.is_empty() {
            return Err(PeakonError::Invalid(format!(
                "{} positions and {} amplitudes",
                positions.len(),
                amplitudes.len()
            )));
        }
        if ell.is_nan() || ell <= 0.0 {
            return Err(PeakonError::Invalid(format!("ell = {ell}")));
        }
        if amplitudes.iter().any(|&p| p == 0.0 || !p.is_finite()) {
            return Err(PeakonError::Invalid("amplitudes must be finite and nonzero".into()));
        }
        if model == Model::Mch && k > 0.0 {
            return Err(PeakonError::NoPeakon { k });
        }
        let e = Self {
            model,
            ell,
            k,
            positions,
            amplitudes,
        };
        check_order(&e.positions, ell)?;
        Ok(e)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Constant background: `-√(-k)` for mCH with `k < 0`, else 0.
    pub fn background(&self) -> f64 {
        if self.model == Model::Mch && self.k < 0.0 {
            -(-self.k).sqrt()
        } else {
            0.0
        }
    }

    /// `u(x)` of the current configuration.
    pub fn u(&self, x: f64) -> f64 {
        self.positions
            .iter()
            .zip(&self.amplitudes)
            .map(|(&xj, &pj)| pj * fundamental_solution(self.ell, x - xj))
            .sum::<f64>()
            + self.background()
    }

    /// `½ Σ_{i,j} p_i p_j G(x_i - x_j)`: the CH Hamiltonian, logged as a
    /// diagnostic for mCH.
    pub fn h0(&self) -> f64 {
        pair_energy(self.ell, &self.positions, &self.amplitudes)
    }
}

fn pair_energy(ell: f64, x: &[f64], p: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..x.len() {
        for j in 0..x.len() {
            s += p[i] * p[j] * fundamental_solution(ell, x[i] - x[j]);
        }
    }
    0.5 * s
}

fn check_order(x: &[f64], ell: f64) -> Result<(), PeakonError> {
    for i in 0..x.len().saturating_sub(1) {
        if !(x[i] < x[i + 1]) {
            return Err(PeakonError::Ordering {
                index: i,
                left: x[i],
                right: x[i + 1],
            });
        }
    }
    if ell.is_finite() && x.len() > 1 && !(x[x.len() - 1] - x[0] < ell) {
        return Err(PeakonError::Ordering {
            index: x.len() - 1,
            left: x[x.len() - 1],
            right: x[0] + ell,
        });
    }
    Ok(())
}

/// Smooth part of `u` and `u_x` at peakon `i` (all terms with `j ≠ i`).
fn smooth_sums(ell: f64, x: &[f64], p: &[f64], i: usize) -> (f64, f64) {
    let mut s = 0.0;
    let mut sx = 0.0;
    for j in 0..x.len() {
        if j != i {
            let d = x[i] - x[j];
            s += p[j] * fundamental_solution(ell, d);
            sx += p[j] * fundamental_derivative_mean(ell, d);
        }
    }
    (s, sx)
}

fn mch_velocities(ell: f64, background: f64, x: &[f64], p: &[f64], out: &mut [f64]) {
    let g0 = fundamental_solution(ell, 0.0);
    for i in 0..x.len() {
        let (s, sx) = smooth_sums(ell, x, p, i);
        let u = p[i] * g0 + s + background;
        // one-sided slopes are sx ∓ p_i/2, so the quadratic form collapses
        // to 3 sx² + p_i²/4
        out[i] = u * u - sx * sx - p[i] * p[i] / 12.0;
    }
}

/// mCH velocities `dx_i/dt`.
pub fn mch_rhs(e: &PeakonEnsemble) -> Result<Vec<f64>, PeakonError> {
    check_order(&e.positions, e.ell)?;
    let mut out = vec![0.0; e.len()];
    mch_velocities(e.ell, e.background(), &e.positions, &e.amplitudes, &mut out);
    Ok(out)
}

fn ch_field(ell: f64, x: &[f64], p: &[f64], dx: &mut [f64], dp: &mut [f64]) {
    let g0 = fundamental_solution(ell, 0.0);
    for i in 0..x.len() {
        let (s, sx) = smooth_sums(ell, x, p, i);
        dx[i] = p[i] * g0 + s;
        dp[i] = -p[i] * sx;
    }
}

/// CH field `(dx_i/dt, dp_i/dt)` with `dp_i/dt = -p_i ⟨u_x⟩(x_i)`, the mean
/// of the one-sided slopes.
pub fn ch_rhs(e: &PeakonEnsemble) -> Result<(Vec<f64>, Vec<f64>), PeakonError> {
    check_order(&e.positions, e.ell)?;
    let n = e.len();
    let mut dx = vec![0.0; n];
    let mut dp = vec![0.0; n];
    ch_field(e.ell, &e.positions, &e.amplitudes, &mut dx, &mut dp);
    Ok((dx, dp))
}

struct MchSys<'a> {
    ell: f64,
    background: f64,
    p: &'a [f64],
}

impl OdeSystem for MchSys<'_> {
    fn dim(&self) -> usize {
        self.p.len()
    }
    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        mch_velocities(self.ell, self.background, y, self.p, dy);
    }
}

struct ChSys {
    ell: f64,
    n: usize,
}

impl OdeSystem for ChSys {
    fn dim(&self) -> usize {
        2 * self.n
    }
    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let (x, p) = y.split_at(self.n);
        let (dx, dp) = dy.split_at_mut(self.n);
        ch_field(self.ell, x, p, dx, dp);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Method {
    /// Adaptive Dormand–Prince 5(4).
    DormandPrince,
    /// Fixed-step implicit midpoint rule (symplectic; CH only).
    ImplicitMidpoint { dt: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    pub tol: f64,
    pub method: Method,
    /// Contact threshold; `None` uses `1e-8 max(1, max|x|)`.
    pub collision_eps: Option<f64>,
    /// Number of uniformly spaced output times (in addition to t = 0);
    /// `None` records every accepted step.
    pub outputs: Option<usize>,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            method: Method::DormandPrince,
            collision_eps: None,
            outputs: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollisionEvent {
    pub t: f64,
    /// Indices of the touching pair (`(N-1, 0)` for the periodic wrap).
    pub pair: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub model: Model,
    pub ell: f64,
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    pub amplitudes: Vec<Vec<f64>>,
    /// `½ Σ p_i p_j G(x_i - x_j)` at each time.
    pub h0: Vec<f64>,
    pub collision: Option<CollisionEvent>,
}

impl Trajectory {
    fn push(&mut self, t: f64, x: &[f64], p: &[f64]) {
        self.times.push(t);
        self.positions.push(x.to_vec());
        self.amplitudes.push(p.to_vec());
        self.h0.push(pair_energy(self.ell, x, p));
    }

    /// Largest `|H0(t) - H0(0)| / |H0(0)|`.
    pub fn h0_drift(&self) -> f64 {
        let h = self.h0[0];
        self.h0
            .iter()
            .map(|x| (x - h).abs() / h.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }

    pub fn final_positions(&self) -> &[f64] {
        self.positions.last().unwrap()
    }
}

fn gaps_events<'a>(n: usize, ell: f64, eps: f64) -> (Vec<Event<'a>>, Vec<(usize, usize)>) {
    let mut ev = Vec::new();
    let mut pairs = Vec::new();
    for i in 0..n.saturating_sub(1) {
        ev.push(Event {
            g: Box::new(move |_t, y: &[f64]| y[i + 1] - y[i] - eps),
            direction: -1,
            terminal: true,
        });
        pairs.push((i, i + 1));
    }
    if ell.is_finite() && n > 1 {
        ev.push(Event {
            g: Box::new(move |_t, y: &[f64]| y[0] + ell - y[n - 1] - eps),
            direction: -1,
            terminal: true,
        });
        pairs.push((n - 1, 0));
    }
    (ev, pairs)
}

/// Integrates the ensemble to `t_end`, stopping at the first contact.
pub fn evolve(e: &PeakonEnsemble, t_end: f64, opts: &EvolveOptions) -> Result<Trajectory, PeakonError> {
    check_order(&e.positions, e.ell)?;
    let n = e.len();
    let scale = e.positions.iter().fold(1.0f64, |a, x| a.max(x.abs()));
    let eps = opts.collision_eps.unwrap_or(1e-8 * scale);
    let mut traj = Trajectory {
        model: e.model,
        ell: e.ell,
        times: Vec::new(),
        positions: Vec::new(),
        amplitudes: Vec::new(),
        h0: Vec::new(),
        collision: None,
    };
    if let Method::ImplicitMidpoint { dt } = opts.method {
        return evolve_midpoint(e, t_end, dt, eps, opts.outputs, traj);
    }
    let tol = Tolerances {
        rtol: opts.tol,
        atol: opts.tol,
        ..Tolerances::default()
    };
    let (events, pairs) = gaps_events(n, e.ell, eps);
    let p = e.amplitudes.clone();
    let (sol, split) = match e.model {
        Model::Mch => {
            let sys = MchSys {
                ell: e.ell,
                background: e.background(),
                p: &p,
            };
            (integrate(&sys, 0.0, &e.positions, t_end, &tol, &events)?, false)
        }
        Model::Ch => {
            let sys = ChSys { ell: e.ell, n };
            let mut y0 = e.positions.clone();
            y0.extend_from_slice(&e.amplitudes);
            (integrate(&sys, 0.0, &y0, t_end, &tol, &events)?, true)
        }
    };
    let record = |traj: &mut Trajectory, t: f64, y: &[f64]| {
        if split {
            traj.push(t, &y[..n], &y[n..]);
        } else {
            traj.push(t, y, &p);
        }
    };
    let t_stop = sol.last().0;
    match opts.outputs {
        None => {
            for (t, y) in sol.t.iter().zip(&sol.y) {
                record(&mut traj, *t, y);
            }
        }
        Some(m) => {
            let m = m.max(1);
            for i in 0..=m {
                let t = t_end * i as f64 / m as f64;
                if t > t_stop {
                    break;
                }
                record(&mut traj, t, &sol.eval(t));
            }
            if t_stop < t_end {
                let (t, y) = sol.last();
                record(&mut traj, t, y);
            }
        }
    }
    if sol.stopped {
        if let Some(hit) = sol.events.last() {
            traj.collision = Some(CollisionEvent {
                t: hit.t,
                pair: pairs[hit.index],
            });
        }
    }
    Ok(traj)
}

fn min_gap(x: &[f64], ell: f64) -> (f64, (usize, usize)) {
    let n = x.len();
    let mut best = (f64::INFINITY, (0, 0));
    for i in 0..n.saturating_sub(1) {
        let g = x[i + 1] - x[i];
        if g < best.0 {
            best = (g, (i, i + 1));
        }
    }
    if ell.is_finite() && n > 1 {
        let g = x[0] + ell - x[n - 1];
        if g < best.0 {
            best = (g, (n - 1, 0));
        }
    }
    best
}

fn evolve_midpoint(
    e: &PeakonEnsemble,
    t_end: f64,
    dt: f64,
    eps: f64,
    outputs: Option<usize>,
    mut traj: Trajectory,
) -> Result<Trajectory, PeakonError> {
    let n = e.len();
    let steps = (t_end / dt).ceil().max(1.0) as usize;
    let h = t_end / steps as f64;
    let every = outputs.map_or(1, |m| (steps / m.max(1)).max(1));
    let mut y = e.positions.clone();
    let mut q = e.amplitudes.clone();
    let mut fx = vec![0.0; n];
    let mut fp = vec![0.0; n];
    let eval = |x: &[f64], p: &[f64], fx: &mut [f64], fp: &mut [f64]| match e.model {
        Model::Ch => ch_field(e.ell, x, p, fx, fp),
        Model::Mch => {
            mch_velocities(e.ell, e.background(), x, p, fx);
            fp.iter_mut().for_each(|v| *v = 0.0);
        }
    };
    traj.push(0.0, &y, &q);
    for s in 1..=steps {
        // fixed-point iteration on the midpoint
        eval(&y, &q, &mut fx, &mut fp);
        let mut xn: Vec<f64> = (0..n).map(|i| y[i] + h * fx[i]).collect();
        let mut pn: Vec<f64> = (0..n).map(|i| q[i] + h * fp[i]).collect();
        for _ in 0..100 {
            let xm: Vec<f64> = (0..n).map(|i| 0.5 * (y[i] + xn[i])).collect();
            let pm: Vec<f64> = (0..n).map(|i| 0.5 * (q[i] + pn[i])).collect();
            eval(&xm, &pm, &mut fx, &mut fp);
            let mut delta: f64 = 0.0;
            for i in 0..n {
                let a = y[i] + h * fx[i];
                let b = q[i] + h * fp[i];
                delta = delta.max((a - xn[i]).abs()).max((b - pn[i]).abs());
                xn[i] = a;
                pn[i] = b;
            }
            if delta <= 1e-15 * (1.0 + xn.iter().chain(&pn).fold(0.0f64, |m, v| m.max(v.abs()))) {
                break;
            }
        }
        let t = s as f64 * h;
        let (g, pair) = min_gap(&xn, e.ell);
        if g <= eps {
            // linear estimate of the contact time within the step
            let (g0, _) = min_gap(&y, e.ell);
            let frac = ((g0 - eps) / (g0 - g)).clamp(0.0, 1.0);
            traj.collision = Some(CollisionEvent {
                t: t - h + frac * h,
                pair,
            });
            traj.push(t, &xn, &pn);
            return Ok(traj);
        }
        y = xn;
        q = pn;
        if s % every == 0 || s == steps {
            traj.push(t, &y, &q);
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HamiltonianReport {
    #[serde(rename = "H0")]
    pub h0: f64,
    #[serde(rename = "H1")]
    pub h1: f64,
}

/// Relative spectral energy allowed in the top quarter of the resolved band.
pub const DEFAULT_NYQUIST_TOL: f64 = 1e-8;

/// `H0 = ∫(u² + u_x²)` and `H1 = ¼∫(u⁴ + 2u²u_x² - u_x⁴/3 + 4ku²)` from
/// uniform samples of one period of length ℓ (spectral `u_x`, trapezoid rule).
pub fn hamiltonians(u: &[f64], ell: f64, k: f64) -> Result<HamiltonianReport, PeakonError> {
    hamiltonians_with(u, ell, k, DEFAULT_NYQUIST_TOL)
}

pub fn hamiltonians_with(u: &[f64], ell: f64, k: f64, nyquist_tol: f64) -> Result<HamiltonianReport, PeakonError> {
    let n = u.len();
    if n < 8 || !ell.is_finite() || ell <= 0.0 {
        return Err(PeakonError::Resolution { n, ratio: f64::INFINITY });
    }
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fwd.process(&mut buf);

    let total: f64 = buf.iter().map(|c| c.norm_sqr()).sum();
    let cut = n / 2 - n / 8;
    let tail: f64 = buf
        .iter()
        .enumerate()
        .filter(|(i, _)| {
            let m = if *i <= n / 2 { *i } else { n - *i };
            m >= cut
        })
        .map(|(_, c)| c.norm_sqr())
        .sum();
    if total > 0.0 && tail / total > nyquist_tol {
        return Err(PeakonError::Resolution { n, ratio: tail / total });
    }

    let w = 2.0 * std::f64::consts::PI / ell;
    for (i, c) in buf.iter_mut().enumerate() {
        let m = if i < n / 2 {
            i as f64
        } else if i == n / 2 && n % 2 == 0 {
            0.0
        } else {
            i as f64 - n as f64
        };
        *c *= Complex64::new(0.0, w * m);
    }
    inv.process(&mut buf);
    let dx = ell / n as f64;
    let mut h0 = 0.0;
    let mut h1 = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        let ux = buf[i].re / n as f64;
        let (u2, ux2) = (ui * ui, ux * ux);
        h0 += u2 + ux2;
        h1 += u2 * u2 + 2.0 * u2 * ux2 - ux2 * ux2 / 3.0 + 4.0 * k * u2;
    }
    Ok(HamiltonianReport {
        h0: h0 * dx,
        h1: 0.25 * h1 * dx,
    })
}
