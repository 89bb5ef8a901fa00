//! Adaptive Dormand–Prince 5(4) integrator with dense output and event
//! location.

use thiserror::Error;

use super::roots::refine_bracket;

/// A first-order system `y' = f(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegratorError {
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("maximum step count {max_steps} reached at t = {t}")]
    TooManySteps { t: f64, max_steps: usize },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
}

/// Error control knobs.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; `None` lets the integrator pick one.
    pub h0: Option<f64>,
    /// Upper bound on the step size.
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            h0: None,
            h_max: f64::INFINITY,
            max_steps: 2_000_000,
        }
    }
}

impl Tolerances {
    pub fn uniform(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            ..Self::default()
        }
    }
}

/// Scalar event function `g(t, y)`; a zero crossing in `direction`
/// (+1 rising, -1 falling, 0 either) is recorded.
pub struct Event<'a> {
    pub g: Box<dyn Fn(f64, &[f64]) -> f64 + 'a>,
    pub direction: i8,
    pub terminal: bool,
}

/// A located event.
#[derive(Debug, Clone, PartialEq)]
pub struct EventHit {
    pub index: usize,
    pub t: f64,
    pub y: Vec<f64>,
}

/// One accepted step with its continuous extension.
#[derive(Debug, Clone)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    r: [Vec<f64>; 5],
}

impl DenseStep {
    /// State at `t` within the step (4th-order continuous extension).
    pub fn eval(&self, t: f64, out: &mut [f64]) {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.r[0][i]
                + th * (self.r[1][i]
                    + th1 * (self.r[2][i] + th * (self.r[3][i] + th1 * self.r[4][i])));
        }
    }

    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }
}

/// Result of [`integrate`].
#[derive(Debug, Clone)]
pub struct Solution {
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub steps: Vec<DenseStep>,
    pub events: Vec<EventHit>,
    /// True if a terminal event stopped the integration before `t_end`.
    pub stopped: bool,
    pub rejected: usize,
}

impl Solution {
    /// Dense-output evaluation anywhere in the integrated range.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let n = self.y[0].len();
        let mut out = vec![0.0; n];
        if self.steps.is_empty() {
            out.copy_from_slice(&self.y[0]);
            return out;
        }
        let idx = match self
            .steps
            .binary_search_by(|s| s.t0.partial_cmp(&t).unwrap_or(std::cmp::Ordering::Less))
        {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        };
        self.steps[idx.min(self.steps.len() - 1)].eval(t, &mut out);
        out
    }

    pub fn last(&self) -> (f64, &[f64]) {
        (*self.t.last().unwrap(), self.y.last().unwrap())
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Integrates `sys` from `(t0, y0)` to `t_end` (which may be below `t0`).
pub fn integrate<S: OdeSystem + ?Sized>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    tol: &Tolerances,
    events: &[Event<'_>],
) -> Result<Solution, IntegratorError> {
    let n = sys.dim();
    assert_eq!(y0.len(), n);
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    let mut sol = Solution {
        t: vec![t0],
        y: vec![y0.to_vec()],
        steps: Vec::new(),
        events: Vec::new(),
        stopped: false,
        rejected: 0,
    };
    if t_end == t0 {
        return Ok(sol);
    }

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    sys.rhs(t, &y, &mut k1);
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut ys = vec![0.0; n];
    let mut y1 = vec![0.0; n];

    let span = (t_end - t0).abs();
    let mut h = tol.h0.unwrap_or_else(|| initial_step(sys, t, &y, &k1, tol, span));
    h = h.min(tol.h_max).min(span);
    let mut g_prev: Vec<f64> = events.iter().map(|e| (e.g)(t, &y)).collect();
    let mut fac_prev: f64 = 1e-4;

    for _ in 0..tol.max_steps {
        if (t_end - t) * dir <= 0.0 {
            return Ok(sol);
        }
        let last = (t + dir * h - t_end) * dir >= 0.0;
        let hs = if last { (t_end - t).abs() } else { h };
        let hh = dir * hs;

        for i in 0..n {
            ys[i] = y[i] + hh * A21 * k1[i];
        }
        sys.rhs(t + C2 * hh, &ys, &mut k2);
        for i in 0..n {
            ys[i] = y[i] + hh * (A31 * k1[i] + A32 * k2[i]);
        }
        sys.rhs(t + C3 * hh, &ys, &mut k3);
        for i in 0..n {
            ys[i] = y[i] + hh * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        sys.rhs(t + C4 * hh, &ys, &mut k4);
        for i in 0..n {
            ys[i] = y[i] + hh * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        sys.rhs(t + C5 * hh, &ys, &mut k5);
        for i in 0..n {
            ys[i] = y[i]
                + hh * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        sys.rhs(t + hh, &ys, &mut k6);
        for i in 0..n {
            y1[i] = y[i]
                + hh * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        sys.rhs(t + hh, &y1, &mut k7);

        let mut err = 0.0;
        for i in 0..n {
            let e = hh
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = tol.atol + tol.rtol * y[i].abs().max(y1[i].abs());
            err += (e / sc) * (e / sc);
        }
        let err = (err / n as f64).sqrt();
        if !err.is_finite() {
            h *= 0.1;
            sol.rejected += 1;
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(IntegratorError::NonFinite { t });
            }
            continue;
        }

        if err <= 1.0 {
            // Lund-stabilised step growth
            let fac = 0.9 * err.max(1e-10).powf(-0.17) * fac_prev.powf(0.04);
            fac_prev = err.max(1e-4);
            let mut r: [Vec<f64>; 5] = Default::default();
            r[0] = y.clone();
            r[1] = (0..n).map(|i| y1[i] - y[i]).collect();
            r[2] = (0..n).map(|i| hh * k1[i] - r[1][i]).collect();
            r[3] = (0..n).map(|i| r[1][i] - hh * k7[i] - r[2][i]).collect();
            r[4] = (0..n)
                .map(|i| {
                    hh * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i]
                        + D7 * k7[i])
                })
                .collect();
            let step = DenseStep { t0: t, h: hh, r };
            let t_new = if last { t_end } else { t + hh };

            // events
            let mut first_stop: Option<EventHit> = None;
            let mut hits: Vec<EventHit> = Vec::new();
            for (ei, ev) in events.iter().enumerate() {
                let g1 = (ev.g)(t_new, &y1);
                let g0 = g_prev[ei];
                let rising = g0 < 0.0 && g1 >= 0.0;
                let falling = g0 > 0.0 && g1 <= 0.0;
                let fire = match ev.direction {
                    1 => rising,
                    -1 => falling,
                    _ => rising || falling,
                };
                if fire {
                    let mut buf = vec![0.0; n];
                    let te = refine_bracket(
                        |s| {
                            let mut b = vec![0.0; n];
                            step.eval(s, &mut b);
                            (ev.g)(s, &b)
                        },
                        t,
                        t_new,
                    );
                    step.eval(te, &mut buf);
                    let hit = EventHit {
                        index: ei,
                        t: te,
                        y: buf,
                    };
                    if ev.terminal {
                        let earlier = match &first_stop {
                            None => true,
                            Some(f) => (te - f.t) * dir < 0.0,
                        };
                        if earlier {
                            first_stop = Some(hit.clone());
                        }
                    }
                    hits.push(hit);
                }
                g_prev[ei] = g1;
            }
            if let Some(stop) = first_stop {
                hits.retain(|hh| (hh.t - stop.t) * dir <= 0.0);
                hits.sort_by(|a, b| ((a.t - b.t) * dir).partial_cmp(&0.0).unwrap());
                sol.events.extend(hits);
                sol.t.push(stop.t);
                sol.y.push(stop.y.clone());
                sol.steps.push(step);
                sol.stopped = true;
                return Ok(sol);
            }
            hits.sort_by(|a, b| ((a.t - b.t) * dir).partial_cmp(&0.0).unwrap());
            sol.events.extend(hits);

            t = t_new;
            std::mem::swap(&mut y, &mut y1);
            std::mem::swap(&mut k1, &mut k7);
            if y.iter().any(|v| !v.is_finite()) {
                return Err(IntegratorError::NonFinite { t });
            }
            sol.t.push(t);
            sol.y.push(y.clone());
            sol.steps.push(step);
            h = (hs * fac.clamp(0.2, 10.0)).min(tol.h_max);
        } else {
            sol.rejected += 1;
            h = hs * (0.9 * err.powf(-0.2)).max(0.2);
            if h < 1e-15 * t.abs().max(1.0) {
                return Err(IntegratorError::StepUnderflow { t, h });
            }
        }
    }
    Err(IntegratorError::TooManySteps {
        t,
        max_steps: tol.max_steps,
    })
}

fn initial_step<S: OdeSystem + ?Sized>(
    sys: &S,
    t: f64,
    y: &[f64],
    f0: &[f64],
    tol: &Tolerances,
    span: f64,
) -> f64 {
    let n = y.len();
    let sc: Vec<f64> = y.iter().map(|v| tol.atol + tol.rtol * v.abs()).collect();
    let d0 = (y.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n as f64).sqrt();
    let d1 = (f0.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n as f64).sqrt();
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h0 = h0.min(span);
    let y1: Vec<f64> = (0..n).map(|i| y[i] + h0 * f0[i]).collect();
    let mut f1 = vec![0.0; n];
    sys.rhs(t + h0, &y1, &mut f1);
    let d2 = (f1
        .iter()
        .zip(f0)
        .zip(&sc)
        .map(|((a, b), s)| ((a - b) / s).powi(2))
        .sum::<f64>()
        / n as f64)
        .sqrt()
        / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}
