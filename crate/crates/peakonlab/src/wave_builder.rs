//! Traveling-wave profiles from level-set arcs.
//!
//! Along an arc of `H = h` the profile coordinate is `ξ = ∫ dφ / v`. On the
//! upper half plane ξ grows with φ; on the `+` branch it also grows along the
//! rescaled flow, on the `-` branch it decreases, which is where folds
//! (multi-valued profiles) come from.
//!
//! Arcs are sampled through charts adapted to their ends: `φ = e + dσ²` at
//! square-root ends (simple `v = 0` crossings, folds, patch points),
//! `φ = e + d e^{-s}` at saddles and `φ = e + d(e^u - 1)` towards infinity.
//! `v²` is evaluated in a cancellation-free form anchored at the nearest
//! polynomial root, so tails near saddles keep full relative accuracy.

use serde::Serialize;
use thiserror::Error;

use crate::numerics::ode::{integrate, Event, IntegratorError, OdeSystem, Tolerances};
use crate::numerics::quad::{adaptive_gauss, gl10, tanh_sinh, AdaptiveOptions, QuadError};
use crate::numerics::roots::{poly_eval, refine_bracket};
use crate::phase_plane::{
    axis_crossings, branch_domain, branch_radicand, classify_critical_points, hamiltonian,
    intersect_hyperbola, outer_radicand, outer_radicand_roots, tau_field, xi_field, Branch,
    CriticalKind, HalfPlane, Hyperbola, Interval, LevelArc, ModelParams, Orientation, PhaseError,
    PhasePoint,
};

/// Default half-width of the ξ window for saddle-terminated or unbounded arcs.
pub const DEFAULT_XI_WINDOW: f64 = 20.0;

/// Samples per traced segment.
pub const SAMPLES_PER_SEGMENT: usize = 2048;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WaveError {
    #[error(transparent)]
    Phase(#[from] PhaseError),
    #[error("arc passes through the critical point ({phi}, {v})")]
    SingularArc { phi: f64, v: f64 },
    #[error("the patch hyperbola does not cut the + branch at level h = {h} in a usable arc")]
    NoIntersection { h: f64 },
    #[error("critical point at φ = {phi} blocks tracing of the patched arc")]
    SaddleOnArc { phi: f64 },
    #[error("arc pair index {index} out of range ({available} candidate arcs)")]
    InvalidPairIndex { index: usize, available: usize },
    #[error("level-set orbit does not close")]
    OpenOrbit,
    #[error("pulse supports {left} and {right} overlap at t = 0")]
    Overlap { left: usize, right: usize },
    #[error("pulse {index} does not vanish at its support ends (φ = {phi:e}, v = {v:e})")]
    NonZeroBackground { index: usize, phi: f64, v: f64 },
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
}

// ---------------------------------------------------------------------------
// stable branch evaluation

#[derive(Debug, Clone)]
struct Anchor {
    x: f64,
    /// Taylor coefficients about `x` with the constant term dropped.
    coeffs: Vec<f64>,
}

/// Taylor coefficients of the polynomial `c` about `x`, by repeated
/// synthetic division by `(t - x)`.
fn taylor_shift(c: &[f64], x: f64) -> Vec<f64> {
    let mut out = vec![0.0; c.len()];
    let mut b = c.to_vec();
    for o in out.iter_mut() {
        let m = b.len();
        let mut q = vec![0.0; m.saturating_sub(1)];
        let mut acc = 0.0;
        for j in (0..m).rev() {
            acc = acc * x + b[j];
            if j > 0 {
                q[j - 1] = acc;
            }
        }
        *o = acc;
        b = q;
    }
    out
}

/// `v²` on one branch at one level, evaluated without cancellation.
#[derive(Debug, Clone)]
struct BranchEval {
    p: ModelParams,
    sign: Branch,
    q_poly: [f64; 5],
    r_poly: [f64; 3],
    q: Vec<Anchor>,
    r: Vec<Anchor>,
}

impl BranchEval {
    fn new(p: &ModelParams, h: f64, sign: Branch) -> Self {
        let q_poly = [-4.0 * h, -4.0 * p.g, 4.0 * p.k - 2.0 * p.c, 0.0, 1.0];
        let r_poly = [p.c * p.c + 4.0 * h, 4.0 * p.g, -4.0 * p.k];
        let q = axis_crossings(p, h)
            .into_iter()
            .map(|r| {
                let mut coeffs = taylor_shift(&q_poly, r.x);
                coeffs[0] = 0.0;
                if r.multiplicity >= 2 {
                    coeffs[1] = 0.0;
                }
                Anchor { x: r.x, coeffs }
            })
            .collect();
        let r = outer_radicand_roots(p, h)
            .into_iter()
            .map(|r| {
                let mut coeffs = taylor_shift(&r_poly, r.x);
                coeffs[0] = 0.0;
                Anchor { x: r.x, coeffs }
            })
            .collect();
        Self {
            p: *p,
            sign,
            q_poly,
            r_poly,
            q,
            r,
        }
    }

    fn local(anchors: &[Anchor], poly: &[f64], phi: f64, hint: Option<(f64, f64)>) -> f64 {
        let mut best: Option<&Anchor> = None;
        for a in anchors {
            if let Some((e, _)) = hint {
                if a.x == e {
                    best = Some(a);
                    break;
                }
            }
            if best.map_or(true, |b| (phi - a.x).abs() < (phi - b.x).abs()) {
                best = Some(a);
            }
        }
        match best {
            Some(a) => {
                let d = match hint {
                    Some((e, d)) if e == a.x => d,
                    _ => phi - a.x,
                };
                poly_eval(&a.coeffs, d)
            }
            None => poly_eval(poly, phi),
        }
    }

    /// `v²` at `φ`; `hint = (e, δ)` supplies `φ - e` exactly when `φ = e + δ`.
    fn v2(&self, phi: f64, hint: Option<(f64, f64)>) -> f64 {
        let p = &self.p;
        let r = Self::local(&self.r, &self.r_poly, phi, hint);
        let sr = r.max(0.0).sqrt();
        let s = self.sign.sign();
        let base = phi * phi - p.c;
        let val = if base * s >= 0.0 {
            base + s * sr
        } else {
            let den = base - s * sr;
            if den == 0.0 {
                0.0
            } else {
                Self::local(&self.q, &self.q_poly, phi, hint) / den
            }
        };
        val.max(0.0)
    }

    fn v_abs(&self, phi: f64, hint: Option<(f64, f64)>) -> f64 {
        self.v2(phi, hint).sqrt()
    }
}

// ---------------------------------------------------------------------------
// end classification

/// How an arc terminates at one end of its φ-interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EndKind {
    /// Transversal crossing of `v = 0`.
    AxisSimple,
    /// Critical point on `v = 0` (infinite ξ-time to reach).
    AxisSaddle,
    /// Junction with the other branch on the jump hyperbola.
    Fold,
    /// `|φ| → ∞`.
    Infinite,
    /// Any other point (e.g. a patch point).
    Regular,
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a.is_finite() && b.is_finite() && (a - b).abs() <= 1e-11 * (1.0 + a.abs().max(b.abs())))
}

/// Classifies the end `x` of an arc of branch `sign` at level `h`.
pub fn end_kind(p: &ModelParams, h: f64, sign: Branch, x: f64) -> EndKind {
    if !x.is_finite() {
        return EndKind::Infinite;
    }
    let scale = 1.0 + x * x + p.c.abs();
    for r in axis_crossings(p, h) {
        if close(r.x, x) && branch_radicand(p, h, sign, x).abs() <= 1e-9 * scale {
            return if r.multiplicity == 1 {
                EndKind::AxisSimple
            } else {
                EndKind::AxisSaddle
            };
        }
    }
    for r in outer_radicand_roots(p, h) {
        if close(r.x, x) {
            return EndKind::Fold;
        }
    }
    EndKind::Regular
}

fn arc_ends(arc: &LevelArc) -> (EndKind, EndKind) {
    let iv = arc.phi_interval;
    (
        end_kind(&arc.params, arc.h, arc.sign, iv.lo),
        end_kind(&arc.params, arc.h, arc.sign, iv.hi),
    )
}

/// Fails if a critical point of `H` lies strictly inside the arc.
pub fn check_no_interior_critical(arc: &LevelArc) -> Result<(), WaveError> {
    let iv = arc.phi_interval;
    for cp in classify_critical_points(&arc.params) {
        let x = cp.location.phi;
        let margin = 1e-9 * (1.0 + x.abs());
        if !(x > iv.lo + margin && x < iv.hi - margin) {
            continue;
        }
        let hv = hamiltonian(&arc.params, cp.location);
        if (hv - arc.h).abs() > 1e-9 * (1.0 + arc.h.abs()) {
            continue;
        }
        let v = arc.v_at(x);
        if (v - cp.location.v).abs() <= 1e-6 * (1.0 + v.abs()) {
            return Err(WaveError::SingularArc {
                phi: x,
                v: cp.location.v,
            });
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// period

fn xi_dot_v(p: &ModelParams, phi: f64, v: f64) -> f64 {
    xi_field(p, PhasePoint::new(phi, v)).1
}

fn max_abs_v(ev: &BranchEval, lo: f64, hi: f64) -> f64 {
    let n = 64;
    (0..=n)
        .map(|i| {
            let t = 0.5 - 0.5 * (std::f64::consts::PI * i as f64 / n as f64).cos();
            ev.v_abs(lo + (hi - lo) * t, None)
        })
        .fold(0.0, f64::max)
}

/// Finds `δ` (same sign as `span`) with `|v(e + δ)| = target`, scanning from `e`.
fn switch_offset(ev: &BranchEval, e: f64, span: f64, target: f64) -> f64 {
    let f = |d: f64| ev.v2(e + d, Some((e, d))) - target * target;
    let n = 512;
    let mut prev = 0.0;
    for i in 1..=n {
        let t = i as f64 / n as f64;
        let d = span * t * t;
        if f(d) >= 0.0 {
            return refine_bracket(f, prev, d);
        }
        prev = d;
    }
    span
}

/// `∫ dv / |dv/dξ|` over `0 ≤ |v| ≤ v_s` near the simple axis crossing `e`.
fn v_part(ev: &BranchEval, e: f64, ds: f64, vs: f64) -> Result<f64, WaveError> {
    let p = ev.p;
    let f = |v: f64| {
        let d = if v == 0.0 {
            0.0
        } else {
            refine_bracket(|d| ev.v2(e + d, Some((e, d))) - v * v, 0.0, ds)
        };
        let phi = e + d;
        1.0 / xi_dot_v(&p, phi, v).abs()
    };
    let opts = AdaptiveOptions {
        rtol: 1e-13,
        ..AdaptiveOptions::default()
    };
    Ok(adaptive_gauss(f, 0.0, vs, opts)?)
}

/// Signed ξ-length of an arc, `∫ dφ / v` taken along the flow orientation.
///
/// Positive on `+` arcs and negative on `-` arcs. Returns an infinite value
/// when the arc ends at a saddle on `v = 0` or runs off to `|φ| = ∞`. Near
/// simple `v = 0` crossings the integration variable switches from φ to `v`
/// once `|v|` drops below 1% of the arc's maximum.
pub fn period(arc: &LevelArc) -> Result<f64, WaveError> {
    check_no_interior_critical(arc)?;
    let s = arc.sign.sign();
    let (ka, kb) = arc_ends(arc);
    let iv = arc.phi_interval;
    if matches!(ka, EndKind::AxisSaddle | EndKind::Infinite)
        || matches!(kb, EndKind::AxisSaddle | EndKind::Infinite)
    {
        return Ok(s * f64::INFINITY);
    }
    let ev = BranchEval::new(&arc.params, arc.h, arc.sign);
    let vs = 1e-2 * max_abs_v(&ev, iv.lo, iv.hi);
    let width = iv.hi - iv.lo;
    let mut total = 0.0;
    let mut a = iv.lo;
    let mut b = iv.hi;
    if ka == EndKind::AxisSimple {
        let d = switch_offset(&ev, iv.lo, 0.5 * width, vs);
        total += v_part(&ev, iv.lo, d, ev.v_abs(iv.lo + d, Some((iv.lo, d))))?;
        a = iv.lo + d;
    }
    if kb == EndKind::AxisSimple {
        let d = switch_offset(&ev, iv.hi, -0.5 * width, vs);
        total += v_part(&ev, iv.hi, d, ev.v_abs(iv.hi + d, Some((iv.hi, d))))?;
        b = iv.hi + d;
    }
    total += tanh_sinh(|x| 1.0 / ev.v_abs(x, None), a, b, 1e-13)?;
    Ok(s * total)
}

// ---------------------------------------------------------------------------
// orbits

/// A chain of arcs of one level set joined at axis crossings and folds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Orbit {
    pub arcs: Vec<LevelArc>,
    pub closed: bool,
}

impl Orbit {
    /// Sum of the signed arc periods.
    pub fn period(&self) -> Result<f64, WaveError> {
        let mut t = 0.0;
        for a in &self.arcs {
            t += period(a)?;
        }
        Ok(t)
    }

    pub fn has_fold(&self) -> bool {
        self.arcs.windows(2).any(|w| w[0].sign != w[1].sign)
            || (self.closed
                && self.arcs.len() > 1
                && self.arcs[0].sign != self.arcs[self.arcs.len() - 1].sign)
    }
}

fn find_interval(p: &ModelParams, h: f64, sign: Branch, x: f64) -> Option<Interval> {
    branch_domain(p, h, sign)
        .into_iter()
        .find(|iv| close(iv.lo, x) || close(iv.hi, x))
}

/// Follows the rescaled flow from the arc `(sign, interval, half)` until it
/// returns (closed orbit) or reaches a saddle or infinity.
pub fn level_orbit(
    p: &ModelParams,
    h: f64,
    sign: Branch,
    interval: Interval,
    half: HalfPlane,
) -> Result<Orbit, WaveError> {
    let first = LevelArc::new(*p, h, sign, interval, half)?;
    let mut arcs = vec![first];
    for _ in 0..32 {
        let cur = *arcs.last().unwrap();
        let (_, end) = cur.flow_endpoints();
        let next = match end_kind(p, h, cur.sign, end) {
            EndKind::AxisSimple => {
                LevelArc::new(*p, h, cur.sign, cur.phi_interval, cur.half_plane.other())?
            }
            EndKind::Fold => {
                let other = cur.sign.other();
                let iv = find_interval(p, h, other, end).ok_or(WaveError::OpenOrbit)?;
                LevelArc::new(*p, h, other, iv, cur.half_plane)?
            }
            _ => return Ok(Orbit { arcs, closed: false }),
        };
        if next == arcs[0] {
            return Ok(Orbit { arcs, closed: true });
        }
        arcs.push(next);
    }
    Err(WaveError::OpenOrbit)
}

// ---------------------------------------------------------------------------
// sampling

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileSample {
    pub xi: f64,
    pub phi: f64,
    pub v: f64,
}

#[derive(Debug, Clone, Copy)]
enum Chart {
    /// `φ = e + d σ²`, σ from 0 to 1.
    Quad { e: f64, d: f64 },
    /// `φ = e + d e^{-s}`, s from 0 upwards (towards the saddle `e`).
    Exp { e: f64, d: f64, budget: f64 },
    /// `φ = e + d (e^u - 1)`, u from 0 upwards (towards infinity).
    Grow { e: f64, d: f64, budget: f64 },
}

/// Chart nodes `(φ, |v|, cumulative |ξ|)` in chart order.
fn run_chart(ev: &BranchEval, chart: Chart, cells: usize) -> Vec<(f64, f64, f64)> {
    let rule = gl10();
    match chart {
        Chart::Quad { e, d } => {
            let f = |sig: f64| {
                let dd = d * sig * sig;
                2.0 * d.abs() * sig / ev.v_abs(e + dd, Some((e, dd)))
            };
            let mut out = Vec::with_capacity(cells + 1);
            out.push((e, ev.v_abs(e, Some((e, 0.0))), 0.0));
            let mut acc = 0.0;
            for i in 0..cells {
                let s0 = i as f64 / cells as f64;
                let s1 = (i + 1) as f64 / cells as f64;
                acc += rule.integrate(f, s0, s1);
                let dd = d * s1 * s1;
                out.push((e + dd, ev.v_abs(e + dd, Some((e, dd))), acc));
            }
            out
        }
        Chart::Exp { e, d, budget } => {
            let probe = d * 1e-6;
            let lam = (ev.v_abs(e + probe, Some((e, probe))) / probe.abs()).max(1e-3);
            let s_est = (lam * budget.max(0.0) * 1.05 + 2.0).min(700.0);
            let ds = s_est / cells as f64;
            let f = |s: f64| {
                let dd = d * (-s).exp();
                d.abs() * (-s).exp() / ev.v_abs(e + dd, Some((e, dd)))
            };
            let mut out = vec![(e + d, ev.v_abs(e + d, Some((e, d))), 0.0)];
            let mut acc = 0.0;
            let mut i = 0;
            while acc < budget && (i as f64) * ds < 700.0 {
                let s0 = i as f64 * ds;
                let s1 = s0 + ds;
                let inc = rule.integrate(f, s0, s1);
                if !inc.is_finite() {
                    break;
                }
                acc += inc;
                let dd = d * (-s1).exp();
                out.push((e + dd, ev.v_abs(e + dd, Some((e, dd))), acc));
                i += 1;
            }
            out
        }
        Chart::Grow { e, d, budget } => {
            let du = (budget.max(1.0) + 2.0) / cells as f64;
            let f = |u: f64| {
                let dd = d * (u.exp() - 1.0);
                d.abs() * u.exp() / ev.v_abs(e + dd, Some((e, dd)))
            };
            let mut out = vec![(e, ev.v_abs(e, None), 0.0)];
            let mut acc = 0.0;
            let mut i = 0;
            while acc < budget && (i as f64) * du < 700.0 {
                let u0 = i as f64 * du;
                let u1 = u0 + du;
                acc += rule.integrate(f, u0, u1);
                let dd = d * (u1.exp() - 1.0);
                out.push((e + dd, ev.v_abs(e + dd, Some((e, dd))), acc));
                i += 1;
            }
            out
        }
    }
}

/// Nodes of one arc in increasing φ with cumulative |ξ| from the first node,
/// and the index of the anchor node (where ξ is pinned).
struct ArcNodes {
    phi: Vec<f64>,
    v_abs: Vec<f64>,
    cum: Vec<f64>,
}

fn join(parts: Vec<Vec<(f64, f64, f64)>>) -> ArcNodes {
    // parts are given in increasing φ, each with cumulative |ξ| from its start
    let mut phi = Vec::new();
    let mut v_abs = Vec::new();
    let mut cum = Vec::new();
    let mut base = 0.0;
    for part in parts {
        let skip = usize::from(!phi.is_empty());
        let off = base - part[0].2;
        for &(x, v, c) in part.iter().skip(skip) {
            phi.push(x);
            v_abs.push(v);
            cum.push(off + c);
        }
        base = *cum.last().unwrap();
    }
    ArcNodes { phi, v_abs, cum }
}

fn reversed(mut part: Vec<(f64, f64, f64)>) -> Vec<(f64, f64, f64)> {
    let total = part.last().map_or(0.0, |x| x.2);
    part.reverse();
    for x in part.iter_mut() {
        x.2 = total - x.2;
    }
    part
}

/// Samples an arc. `window` bounds |ξ| measured from the regular end for
/// saddle-terminated or unbounded arcs.
fn sample_arc(arc: &LevelArc, window: f64) -> (ArcNodes, (EndKind, EndKind)) {
    let ev = BranchEval::new(&arc.params, arc.h, arc.sign);
    let (ka, kb) = arc_ends(arc);
    let iv = arc.phi_interval;
    let half = SAMPLES_PER_SEGMENT / 2;
    let extent = |v: &Vec<(f64, f64, f64)>| v.last().map_or(0.0, |x| x.2);
    let nodes = if iv.is_bounded() {
        let (a, b) = (iv.lo, iv.hi);
        let m = 0.5 * (a + b);
        let sa = ka == EndKind::AxisSaddle;
        let sb = kb == EndKind::AxisSaddle;
        let quad_left = || run_chart(&ev, Chart::Quad { e: a, d: m - a }, half);
        let quad_right = || reversed(run_chart(&ev, Chart::Quad { e: b, d: m - b }, half));
        match (sa, sb) {
            (false, false) => join(vec![quad_left(), quad_right()]),
            (true, false) => {
                let r = quad_right();
                let budget = (window - extent(&r)).max(1e-3);
                let l = reversed(run_chart(&ev, Chart::Exp { e: a, d: m - a, budget }, half));
                join(vec![l, r])
            }
            (false, true) => {
                let l = quad_left();
                let budget = (window - extent(&l)).max(1e-3);
                let r = run_chart(&ev, Chart::Exp { e: b, d: m - b, budget }, half);
                join(vec![l, r])
            }
            (true, true) => {
                let l = reversed(run_chart(&ev, Chart::Exp { e: a, d: m - a, budget: window }, half));
                let r = run_chart(&ev, Chart::Exp { e: b, d: m - b, budget: window }, half);
                join(vec![l, r])
            }
        }
    } else if iv.lo.is_finite() {
        let a = iv.lo;
        let w = 1.0 + a.abs();
        let q = reversed(reversed(run_chart(&ev, Chart::Quad { e: a, d: w }, half)));
        let budget = (window - extent(&q)).max(1e-3);
        let g = run_chart(&ev, Chart::Grow { e: a + w, d: w, budget }, half);
        join(vec![q, g])
    } else if iv.hi.is_finite() {
        let b = iv.hi;
        let w = 1.0 + b.abs();
        let q = reversed(run_chart(&ev, Chart::Quad { e: b, d: -w }, half));
        let budget = (window - extent(&q)).max(1e-3);
        let g = reversed(run_chart(&ev, Chart::Grow { e: b - w, d: -w, budget }, half));
        join(vec![g, q])
    } else {
        let l = reversed(run_chart(&ev, Chart::Grow { e: 0.0, d: -1.0, budget: window }, half));
        let r = run_chart(&ev, Chart::Grow { e: 0.0, d: 1.0, budget: window }, half);
        join(vec![l, r])
    };
    (nodes, (ka, kb))
}

/// Samples of one arc in flow order with ξ accumulated from `xi_start` at
/// the flow start (or the anchor node for arcs without a finite start).
fn arc_flow_samples(arc: &LevelArc, nodes: &ArcNodes, anchor: usize, xi_anchor: f64, mirror: bool) -> Vec<ProfileSample> {
    let hs = arc.half_plane.sign();
    let fs = if mirror { -1.0 } else { 1.0 };
    let mut out: Vec<ProfileSample> = nodes
        .phi
        .iter()
        .zip(&nodes.v_abs)
        .zip(&nodes.cum)
        .map(|((&phi, &va), &c)| ProfileSample {
            xi: xi_anchor + hs * (c - nodes.cum[anchor]),
            phi: fs * phi,
            v: fs * hs * va,
        })
        .collect();
    if arc.orientation == Orientation::DecreasingPhi {
        out.reverse();
    }
    out
}

fn anchor_index(arc: &LevelArc, nodes: &ArcNodes, kinds: (EndKind, EndKind)) -> usize {
    let last = nodes.phi.len() - 1;
    let good = |k: EndKind| !matches!(k, EndKind::AxisSaddle | EndKind::Infinite);
    let (start_idx, start_k, end_idx, end_k) = match arc.orientation {
        Orientation::IncreasingPhi => (0, kinds.0, last, kinds.1),
        Orientation::DecreasingPhi => (last, kinds.1, 0, kinds.0),
    };
    if good(start_k) {
        start_idx
    } else if good(end_k) {
        end_idx
    } else {
        // junction between the two halves
        nodes
            .phi
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .map(|x| x.0)
            .unwrap_or(0)
    }
}

// ---------------------------------------------------------------------------
// profiles

/// A peakon joint: the slope of the profile jumps from `v_left` to `v_right`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeakonJoint {
    pub xi: f64,
    pub phi: f64,
    pub v_left: f64,
    pub v_right: f64,
}

impl PeakonJoint {
    /// `|φ² - (v_l² + v_l v_r + v_r²)/3 - c|`.
    pub fn kinematic_residual(&self, c: f64) -> f64 {
        let (a, b) = (self.v_left, self.v_right);
        (self.phi * self.phi - (a * a + a * b + b * b) / 3.0 - c).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProfileKind {
    SmoothPeriodic,
    PatchedPeriodic,
    Unbounded,
    CompactSupportComposite,
}

/// Exponential approach to an axis saddle outside the sampled window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tail {
    /// ξ of the last sample and the direction (+1 right, -1 left) of the tail.
    pub xi_end: f64,
    pub direction: f64,
    pub phi_end: f64,
    pub base: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileSegment {
    pub xi: Interval,
    /// Samples sorted by increasing ξ.
    pub samples: Vec<ProfileSample>,
    /// Source arc (in the `g ≥ 0` frame when the profile is mirrored).
    pub arc: LevelArc,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaveProfile {
    pub params: ModelParams,
    pub h: f64,
    pub segments: Vec<ProfileSegment>,
    pub joints: Vec<PeakonJoint>,
    /// Positive period, or `+∞`.
    pub period: f64,
    pub kind: ProfileKind,
    /// One period for periodic profiles, the sampled window otherwise.
    pub xi_range: Interval,
    /// True when built in the `g ≥ 0` frame and mapped back by `φ ↦ -φ`.
    pub mirrored: bool,
    pub tails: Vec<Tail>,
}

fn hermite(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, x: f64) -> f64 {
    let h = x1 - x0;
    if h == 0.0 {
        return y0;
    }
    let t = (x - x0) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + t) * h * d0
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * h * d1
}

impl ProfileSegment {
    fn from_samples(mut samples: Vec<ProfileSample>, arc: LevelArc) -> Self {
        samples.sort_by(|a, b| a.xi.partial_cmp(&b.xi).unwrap());
        let xi = Interval::new(samples[0].xi, samples[samples.len() - 1].xi);
        Self { xi, samples, arc }
    }

    /// Cubic Hermite interpolation of `(φ, v)` using `φ' = v` and the
    /// traveling-wave equation for `v'`.
    pub fn eval(&self, p: &ModelParams, xi: f64) -> (f64, f64) {
        let s = &self.samples;
        let i = match s.binary_search_by(|q| q.xi.partial_cmp(&xi).unwrap()) {
            Ok(i) => return (s[i].phi, s[i].v),
            Err(i) => i.clamp(1, s.len() - 1),
        };
        let (a, b) = (s[i - 1], s[i]);
        let da = xi_dot_v(p, a.phi, a.v);
        let db = xi_dot_v(p, b.phi, b.v);
        let phi = hermite(a.xi, b.xi, a.phi, b.phi, a.v, b.v, xi);
        let v = if da.is_finite() && db.is_finite() {
            hermite(a.xi, b.xi, a.v, b.v, da, db, xi)
        } else {
            let t = (xi - a.xi) / (b.xi - a.xi);
            a.v + t * (b.v - a.v)
        };
        (phi, v)
    }
}

/// One row of the CSV export.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileRow {
    pub xi: f64,
    pub phi: f64,
    pub v: f64,
    pub segment_id: usize,
}

/// JSON metadata of a profile.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileMetadata {
    pub params: ModelParams,
    pub h: f64,
    pub period: f64,
    pub joints: Vec<PeakonJoint>,
    pub kind: ProfileKind,
}

impl WaveProfile {
    /// `(φ, v)` at `ξ`, reduced modulo the period for periodic kinds and
    /// extended by the exponential tails for saddle pulses. `None` outside
    /// the represented range.
    pub fn eval(&self, xi: f64) -> Option<(f64, f64)> {
        let mut x = xi;
        if self.period.is_finite() && matches!(self.kind, ProfileKind::SmoothPeriodic | ProfileKind::PatchedPeriodic) {
            x = self.xi_range.lo + (xi - self.xi_range.lo).rem_euclid(self.period);
        }
        for seg in &self.segments {
            if seg.xi.contains(x) {
                return Some(seg.eval(&self.params, x));
            }
        }
        for t in &self.tails {
            if (x - t.xi_end) * t.direction >= 0.0 {
                let d = (t.phi_end - t.base) * (-t.rate * (x - t.xi_end).abs()).exp();
                return Some((t.base + d, -t.direction * t.rate * d));
            }
        }
        None
    }

    pub fn phi(&self, xi: f64) -> Option<f64> {
        self.eval(xi).map(|x| x.0)
    }

    pub fn csv_rows(&self) -> Vec<ProfileRow> {
        let mut out = Vec::new();
        for (id, seg) in self.segments.iter().enumerate() {
            for s in &seg.samples {
                out.push(ProfileRow {
                    xi: s.xi,
                    phi: s.phi,
                    v: s.v,
                    segment_id: id,
                });
            }
        }
        out
    }

    pub fn metadata(&self) -> ProfileMetadata {
        ProfileMetadata {
            params: self.params,
            h: self.h,
            period: self.period,
            joints: self.joints.clone(),
            kind: self.kind,
        }
    }

    /// Max of `|φ|` over the samples.
    pub fn amplitude(&self) -> f64 {
        self.segments
            .iter()
            .flat_map(|s| s.samples.iter())
            .map(|s| s.phi.abs())
            .fold(0.0, f64::max)
    }
}

/// One single-valued piece of a multi-valued profile over a signed interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileBranch {
    /// Start and end of the signed interval `J = (a, b)`.
    pub a: f64,
    pub b: f64,
    /// Samples in traversal order.
    pub samples: Vec<ProfileSample>,
    pub arcs: Vec<LevelArc>,
}

impl ProfileBranch {
    pub fn orientation(&self) -> f64 {
        (self.b - self.a).signum()
    }
}

/// Check of `v_ℓ = v_r`, `A_ℓ = A_r` at a fold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FoldCheck {
    pub xi: f64,
    pub phi: f64,
    pub v_left: f64,
    pub v_right: f64,
    pub a_left: f64,
    pub a_right: f64,
}

impl FoldCheck {
    pub fn residual(&self) -> f64 {
        (self.v_left - self.v_right).abs().max((self.a_left - self.a_right).abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiValuedProfile {
    pub params: ModelParams,
    pub h: f64,
    pub branches: Vec<ProfileBranch>,
    pub folds: Vec<FoldCheck>,
    /// Signed net ξ-advance of one traversal (finite for closed loops).
    pub period: f64,
    pub closed: bool,
}

impl MultiValuedProfile {
    /// Largest endpoint mismatch `|u_n(b_n) - u_{n+1}(a_{n+1})|`.
    pub fn continuity_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for w in self.branches.windows(2) {
            let l = w[0].samples.last().unwrap();
            let r = w[1].samples.first().unwrap();
            worst = worst.max((l.phi - r.phi).abs()).max((l.xi - r.xi).abs());
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Traced {
    Single(WaveProfile),
    Multi(MultiValuedProfile),
}

fn saddle_rate(p: &ModelParams, phi: f64) -> f64 {
    // linearization of φ'' = (g - 2kφ)/(c - φ²) + φ at an axis critical point
    let den = p.c - phi * phi;
    let num = p.g - 2.0 * p.k * phi;
    let d = (-2.0 * p.k * den + 2.0 * phi * num) / (den * den) + 1.0;
    d.max(0.0).sqrt()
}

fn tails_for(p: &ModelParams, seg_samples: &[ProfileSample], kinds_and_bases: &[(f64, f64)]) -> Vec<Tail> {
    // kinds_and_bases: (direction, saddle φ) for each saddle side
    let first = seg_samples.first().unwrap();
    let last = seg_samples.last().unwrap();
    kinds_and_bases
        .iter()
        .map(|&(dir, base)| {
            let s = if dir > 0.0 { last } else { first };
            Tail {
                xi_end: s.xi,
                direction: dir,
                phi_end: s.phi,
                base,
                rate: saddle_rate(p, base),
            }
        })
        .collect()
}

/// Traces one arc into a profile with ξ = `xi0` at its flow start (or at
/// its finite end, or near φ = 0 for arcs unbounded on both sides).
pub fn trace_profile(arc: &LevelArc, xi0: f64) -> Result<WaveProfile, WaveError> {
    check_no_interior_critical(arc)?;
    let (nodes, kinds) = sample_arc(arc, DEFAULT_XI_WINDOW);
    let anchor = anchor_index(arc, &nodes, kinds);
    let samples = arc_flow_samples(arc, &nodes, anchor, xi0, false);
    let seg = ProfileSegment::from_samples(samples, *arc);
    let xi_range = seg.xi;
    Ok(WaveProfile {
        params: arc.params,
        h: arc.h,
        segments: vec![seg],
        joints: Vec::new(),
        period: f64::INFINITY,
        kind: ProfileKind::Unbounded,
        xi_range,
        mirrored: false,
        tails: Vec::new(),
    })
}

/// Traces a chain of arcs. Chains with a fold become multi-valued profiles;
/// closed fold-free chains become smooth periodic profiles.
pub fn trace_orbit(orbit: &Orbit, xi0: f64) -> Result<Traced, WaveError> {
    for a in &orbit.arcs {
        check_no_interior_critical(a)?;
    }
    let p = orbit.arcs[0].params;
    let h = orbit.arcs[0].h;
    let mut pieces: Vec<(LevelArc, Vec<ProfileSample>)> = Vec::new();
    let mut xi = xi0;
    for arc in &orbit.arcs {
        let (nodes, kinds) = sample_arc(arc, DEFAULT_XI_WINDOW);
        let start = match arc.orientation {
            Orientation::IncreasingPhi => 0,
            Orientation::DecreasingPhi => nodes.phi.len() - 1,
        };
        let _ = kinds;
        let s = arc_flow_samples(arc, &nodes, start, xi, false);
        xi = s.last().unwrap().xi;
        pieces.push((*arc, s));
    }
    let net = xi - xi0;

    if orbit.has_fold() {
        let mut branches: Vec<ProfileBranch> = Vec::new();
        let mut folds = Vec::new();
        for (arc, s) in pieces {
            match branches.last_mut() {
                Some(b) if b.arcs.last().unwrap().sign == arc.sign => {
                    b.samples.extend(s.into_iter().skip(1));
                    b.b = b.samples.last().unwrap().xi;
                    b.arcs.push(arc);
                }
                _ => {
                    if let Some(prev) = branches.last() {
                        let l = *prev.samples.last().unwrap();
                        let r = s[0];
                        let a_l = p.g - 2.0 * p.k * l.phi;
                        let a_r = p.g - 2.0 * p.k * r.phi;
                        folds.push(FoldCheck {
                            xi: l.xi,
                            phi: l.phi,
                            v_left: l.v,
                            v_right: r.v,
                            a_left: a_l,
                            a_right: a_r,
                        });
                    }
                    branches.push(ProfileBranch {
                        a: s[0].xi,
                        b: s.last().unwrap().xi,
                        samples: s,
                        arcs: vec![arc],
                    });
                }
            }
        }
        if orbit.closed && orbit.arcs[0].sign != orbit.arcs.last().unwrap().sign {
            let l = *branches.last().unwrap().samples.last().unwrap();
            let r = branches[0].samples[0];
            folds.push(FoldCheck {
                xi: l.xi,
                phi: l.phi,
                v_left: l.v,
                v_right: r.v,
                a_left: p.g - 2.0 * p.k * l.phi,
                a_right: p.g - 2.0 * p.k * r.phi,
            });
        }
        return Ok(Traced::Multi(MultiValuedProfile {
            params: p,
            h,
            branches,
            folds,
            period: if orbit.closed { net } else { f64::NAN },
            closed: orbit.closed,
        }));
    }

    let segments: Vec<ProfileSegment> = pieces
        .into_iter()
        .map(|(a, s)| ProfileSegment::from_samples(s, a))
        .collect();
    let lo = segments.iter().map(|s| s.xi.lo).fold(f64::INFINITY, f64::min);
    let hi = segments.iter().map(|s| s.xi.hi).fold(f64::NEG_INFINITY, f64::max);
    let mut segments = segments;
    segments.sort_by(|a, b| a.xi.lo.partial_cmp(&b.xi.lo).unwrap());
    let (kind, period) = if orbit.closed {
        (ProfileKind::SmoothPeriodic, net.abs())
    } else {
        (ProfileKind::Unbounded, f64::INFINITY)
    };
    Ok(Traced::Single(WaveProfile {
        params: p,
        h,
        segments,
        joints: Vec::new(),
        period,
        kind,
        xi_range: Interval::new(lo, hi),
        mirrored: false,
        tails: Vec::new(),
    }))
}

// ---------------------------------------------------------------------------
// patching

/// Kind of a stop point on the upper `+` arc.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StopKind {
    Patch,
    AxisSimple,
    AxisSaddle,
    Fold,
    Infinite,
    Other,
}

/// A candidate piece of the upper `+` arc for patching.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PatchCandidate {
    pub interval: Interval,
    pub left: StopKind,
    pub right: StopKind,
    pub v_max: f64,
}

fn stop_kind(p: &ModelParams, h: f64, x: f64, patch: &[f64]) -> StopKind {
    if patch.iter().any(|&q| close(q, x)) {
        return StopKind::Patch;
    }
    match end_kind(p, h, Branch::Plus, x) {
        EndKind::AxisSimple => StopKind::AxisSimple,
        EndKind::AxisSaddle => StopKind::AxisSaddle,
        EndKind::Fold => StopKind::Fold,
        EndKind::Infinite => StopKind::Infinite,
        EndKind::Regular => StopKind::Other,
    }
}

/// Valid patching pieces of the upper `+` arc at level `h` (in the given
/// frame), sorted by φ.
pub fn patch_candidates(p: &ModelParams, h: f64) -> Vec<PatchCandidate> {
    let ev = BranchEval::new(p, h, Branch::Plus);
    let patch: Vec<f64> = intersect_hyperbola(p, h, Branch::Plus, Hyperbola::Patch)
        .into_iter()
        .filter(|x| x.point.v > 0.0 && x.multiplicity == 1)
        .map(|x| x.point.phi)
        .collect();
    let saddles: Vec<f64> = classify_critical_points(p)
        .into_iter()
        .filter(|cp| {
            !cp.on_c_hyperbola
                && cp.kind != CriticalKind::Center
                && (hamiltonian(p, cp.location) - h).abs() <= 1e-10 * (1.0 + h.abs())
        })
        .map(|cp| cp.location.phi)
        .collect();
    let mut out = Vec::new();
    for d in branch_domain(p, h, Branch::Plus) {
        let mut stops = vec![d.lo, d.hi];
        stops.extend(patch.iter().copied().filter(|&x| x > d.lo && x < d.hi));
        stops.extend(saddles.iter().copied().filter(|&x| x > d.lo && x < d.hi));
        stops.sort_by(|a, b| a.partial_cmp(b).unwrap());
        stops.dedup_by(|a, b| close(*a, *b));
        for w in stops.windows(2) {
            let (a, b) = (w[0], w[1]);
            let ka = stop_kind(p, h, a, &patch);
            let kb = if saddles.iter().any(|&s| close(s, b)) {
                StopKind::AxisSaddle
            } else {
                stop_kind(p, h, b, &patch)
            };
            let ka = if saddles.iter().any(|&s| close(s, a)) {
                StopKind::AxisSaddle
            } else {
                ka
            };
            let ok_end = |k: StopKind| matches!(k, StopKind::Patch | StopKind::AxisSimple | StopKind::AxisSaddle);
            if !(ok_end(ka) && ok_end(kb)) || !(ka == StopKind::Patch || kb == StopKind::Patch) {
                continue;
            }
            let mid = 0.5 * (a + b);
            let v2 = ev.v2(mid, None);
            if !(v2 > 3.0 * (mid * mid - p.c)) {
                continue;
            }
            out.push(PatchCandidate {
                interval: Interval::new(a, b),
                left: ka,
                right: kb,
                v_max: max_abs_v(&ev, a, b),
            });
        }
    }
    out
}

fn default_candidate(c: &[PatchCandidate]) -> usize {
    let mut best = 0;
    for (i, x) in c.iter().enumerate() {
        // near-ties (e.g. symmetric levels) go to the larger φ
        if x.v_max >= c[best].v_max * (1.0 - 1e-12) {
            best = i;
        }
    }
    best
}

/// Patched traveling peakon built from the default arc (the candidate
/// containing the largest `v`).
pub fn build_patched_solution(params: &ModelParams, h: f64) -> Result<WaveProfile, WaveError> {
    build_patched_solution_with(params, h, None, DEFAULT_XI_WINDOW)
}

/// Patched traveling peakon from candidate `pair_index` (sorted by φ in the
/// `g ≥ 0` frame); `window` is the half-width used for saddle pulses.
pub fn build_patched_solution_with(
    params: &ModelParams,
    h: f64,
    pair_index: Option<usize>,
    window: f64,
) -> Result<WaveProfile, WaveError> {
    let (p, mirrored) = params.normalized();
    let cands = patch_candidates(&p, h);
    if cands.is_empty() {
        return Err(WaveError::NoIntersection { h });
    }
    let idx = match pair_index {
        Some(i) if i >= cands.len() => {
            return Err(WaveError::InvalidPairIndex {
                index: i,
                available: cands.len(),
            })
        }
        Some(i) => i,
        None => default_candidate(&cands),
    };
    let cand = cands[idx];
    let upper = LevelArc::new(p, h, Branch::Plus, cand.interval, HalfPlane::Upper)?;
    let lower = LevelArc::new(p, h, Branch::Plus, cand.interval, HalfPlane::Lower)?;
    if let Err(WaveError::SingularArc { phi, .. }) = check_no_interior_critical(&upper) {
        return Err(WaveError::SaddleOnArc { phi });
    }
    let (nodes, kinds) = sample_arc(&upper, window);
    let last = nodes.phi.len() - 1;
    let total = nodes.cum[last];
    let fs = if mirrored { -1.0 } else { 1.0 };
    let left_saddle = cand.left == StopKind::AxisSaddle;
    let right_saddle = cand.right == StopKind::AxisSaddle;
    let _ = kinds;

    // upper arc occupies [start, start + total], lower arc the next stretch
    let start = if right_saddle { 0.0 } else { -total };
    let mk = |i: usize, xi: f64, half: f64| ProfileSample {
        xi,
        phi: fs * nodes.phi[i],
        v: fs * half * nodes.v_abs[i],
    };
    let up: Vec<ProfileSample> = (0..=last).map(|i| mk(i, start + nodes.cum[i], 1.0)).collect();
    let low: Vec<ProfileSample> = if right_saddle {
        // lower arc comes in from the saddle and ends at the φL joint at 0
        (0..=last).map(|i| mk(i, -nodes.cum[i], -1.0)).collect()
    } else {
        (0..=last).map(|i| mk(i, start + 2.0 * total - nodes.cum[i], -1.0)).collect()
    };
    let v_l = nodes.v_abs[0];
    let v_r = nodes.v_abs[last];
    let phi_l = nodes.phi[0];
    let phi_r = nodes.phi[last];

    let mut joints = Vec::new();
    if cand.right == StopKind::Patch {
        joints.push(PeakonJoint {
            xi: start + total,
            phi: fs * phi_r,
            v_left: fs * v_r,
            v_right: -fs * v_r,
        });
    }
    if cand.left == StopKind::Patch {
        let xi = if right_saddle { 0.0 } else { start };
        joints.push(PeakonJoint {
            xi,
            phi: fs * phi_l,
            v_left: -fs * v_l,
            v_right: fs * v_l,
        });
    }
    joints.sort_by(|a, b| a.xi.partial_cmp(&b.xi).unwrap());

    let seg_up = ProfileSegment::from_samples(up, upper);
    let seg_low = ProfileSegment::from_samples(low, lower);
    let mut segments = vec![seg_up, seg_low];
    segments.sort_by(|a, b| a.xi.lo.partial_cmp(&b.xi.lo).unwrap());

    let (kind, period, xi_range, tails) = if left_saddle || right_saddle {
        let lo = segments[0].xi.lo.max(-window);
        let hi = segments[1].xi.hi.min(window);
        let mut tails = Vec::new();
        if left_saddle {
            let base = fs * cand.interval.lo;
            tails.extend(tails_for(params, &segments[0].samples, &[(-1.0, base)]));
            tails.extend(tails_for(params, &segments[1].samples, &[(1.0, base)]));
        }
        if right_saddle {
            let base = fs * cand.interval.hi;
            tails.extend(tails_for(params, &segments[0].samples, &[(-1.0, base)]));
            tails.extend(tails_for(params, &segments[1].samples, &[(1.0, base)]));
        }
        (ProfileKind::Unbounded, f64::INFINITY, Interval::new(lo, hi), tails)
    } else {
        (
            ProfileKind::PatchedPeriodic,
            2.0 * total,
            Interval::new(start, start + 2.0 * total),
            Vec::new(),
        )
    };
    Ok(WaveProfile {
        params: *params,
        h,
        segments,
        joints,
        period,
        kind,
        xi_range,
        mirrored,
        tails,
    })
}

/// Whether level `h` admits the two-joint construction: the `+` domain
/// interval through φ = 0 carries exactly two simple upper patch points
/// `φ1 < 0 < φ2` and the arc between them is free of axis points.
fn two_joint_bracket(p: &ModelParams, h: f64) -> Option<(f64, f64)> {
    let dom = branch_domain(p, h, Branch::Plus);
    let d = dom.into_iter().find(|iv| iv.lo < 0.0 && iv.hi > 0.0)?;
    let hits: Vec<f64> = intersect_hyperbola(p, h, Branch::Plus, Hyperbola::Patch)
        .into_iter()
        .filter(|x| {
            // membership is decided by the branch test inside the hit
            // computation; near the threshold the hit and the domain end
            // agree to second order, so only a tolerance test is meaningful
            let tol = 1e-9 * (1.0 + x.point.phi.abs());
            x.point.v > 0.0 && x.multiplicity == 1 && x.point.phi > d.lo - tol && x.point.phi < d.hi + tol
        })
        .map(|x| x.point.phi)
        .collect();
    if hits.len() != 2 || !(hits[0] < 0.0 && hits[1] > 0.0) {
        return None;
    }
    let (a, b) = (hits[0], hits[1]);
    if axis_crossings(p, h).iter().any(|r| r.x > a && r.x < b && branch_radicand(p, h, Branch::Plus, r.x).abs() < 1e-9) {
        return None;
    }
    let arc = LevelArc::new(*p, h, Branch::Plus, Interval::new(a, b), HalfPlane::Upper).ok()?;
    check_no_interior_critical(&arc).ok()?;
    let mid = 0.5 * (a + b);
    if !(arc.v_at(mid).powi(2) > 3.0 * (mid * mid - p.c)) {
        return None;
    }
    if outer_radicand(p, h, 0.0) <= 0.0 {
        return None;
    }
    Some((a, b))
}

/// Level above which the two-joint patched construction exists, found by
/// bisection on its constructive conditions and floored at `3c²/4`.
pub fn find_h0(params: &ModelParams) -> f64 {
    let (p, _) = params.normalized();
    let floor = 0.75 * p.c * p.c;
    let ok = |h: f64| two_joint_bracket(&p, h).is_some();
    let mut hi = floor.max(1.0) + 1.0;
    let mut tries = 0;
    while !ok(hi) {
        hi *= 2.0;
        tries += 1;
        if tries > 60 {
            return hi.max(floor);
        }
    }
    let mut step = 1.0 + 0.1 * hi.abs();
    let mut lo = hi - step;
    while ok(lo) {
        step *= 2.0;
        lo = hi - step;
        if lo < -1e12 {
            return floor;
        }
    }
    // keep the true side at the largest passing level seen from above
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-14 * (1.0 + hi.abs()) {
            break;
        }
    }
    hi.max(floor)
}

// ---------------------------------------------------------------------------
// jump conditions

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JointResidual {
    pub xi: f64,
    pub phi: f64,
    /// `|c - (u² - (v_ℓ² + v_ℓ v_r + v_r²)/3)|`.
    pub residual1: f64,
    /// `|d/dt(v_ℓ - v_r) - (A_ℓ - A_r)|` with `A = m(u² - u_x² - c)`.
    pub residual2: f64,
    pub a_left: f64,
    pub a_right: f64,
}

/// One-sided `dv/dξ` at the end of a sample run (quadratic through the
/// three samples nearest the joint).
fn one_sided_slope(s: &[ProfileSample]) -> f64 {
    let (a, b, c) = (s[0], s[1], s[2]);
    let (x0, x1, x2) = (a.xi, b.xi, c.xi);
    let w0 = (2.0 * x0 - x1 - x2) / ((x0 - x1) * (x0 - x2));
    let w1 = (x0 - x2) / ((x1 - x0) * (x1 - x2));
    let w2 = (x0 - x1) / ((x2 - x0) * (x2 - x1));
    w0 * a.v + w1 * b.v + w2 * c.v
}

fn flux_from_samples(p: &ModelParams, s: &[ProfileSample]) -> f64 {
    let dv = one_sided_slope(s);
    let m = s[0].phi - dv;
    m * (s[0].phi * s[0].phi - s[0].v * s[0].v - p.c)
}

/// Per-joint residuals of the weak-solution jump conditions. For a traveling
/// profile `d/dt(v_ℓ - v_r) = 0` and `A_ℓ, A_r` are one-sided limits of the
/// sampled momentum flux.
pub fn verify_jump_conditions(profile: &WaveProfile) -> Vec<JointResidual> {
    let p = &profile.params;
    let mut out = Vec::new();
    for j in &profile.joints {
        let residual1 = j.kinematic_residual(p.c);
        let mut a_left = f64::NAN;
        let mut a_right = f64::NAN;
        let reduce = |x: f64| {
            if profile.period.is_finite() {
                profile.xi_range.lo + (x - profile.xi_range.lo).rem_euclid(profile.period)
            } else {
                x
            }
        };
        for seg in &profile.segments {
            let n = seg.samples.len();
            if n < 3 {
                continue;
            }
            let tol = 1e-9 * (1.0 + j.xi.abs() + profile.period.min(1e6));
            let at_end = |x: f64| (reduce(x) - reduce(j.xi)).abs() <= tol
                || (profile.period.is_finite() && ((reduce(x) - reduce(j.xi)).abs() - profile.period).abs() <= tol);
            if at_end(seg.xi.hi) {
                let tail: Vec<ProfileSample> = seg.samples[n - 3..].iter().rev().copied().collect();
                a_left = flux_from_samples(p, &tail);
            }
            if at_end(seg.xi.lo) {
                a_right = flux_from_samples(p, &seg.samples[..3]);
            }
        }
        let residual2 = (0.0 - (a_left - a_right)).abs();
        out.push(JointResidual {
            xi: j.xi,
            phi: j.phi,
            residual1,
            residual2,
            a_left,
            a_right,
        });
    }
    out
}

// ---------------------------------------------------------------------------
// compact-support composition

/// A pulse placed at `offset` translating with `speed`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlacedPulse {
    pub profile: WaveProfile,
    pub speed: f64,
    pub offset: f64,
    /// Support at `t = 0`.
    pub support: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompositeSolution {
    pub pulses: Vec<PlacedPulse>,
    /// First time two supports touch (`+∞` if never); the superposition is
    /// a weak solution on `[0, touch_time)`.
    pub touch_time: f64,
    pub kind: ProfileKind,
}

impl CompositeSolution {
    /// `u(x, t)`; values past the touch time are still the plain sum.
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        let mut u = 0.0;
        for pl in &self.pulses {
            let xi = x - pl.speed * t - pl.offset;
            if pl.profile.xi_range.contains(xi) {
                if let Some(phi) = pl.profile.phi(xi) {
                    u += phi;
                }
            }
        }
        u
    }
}

/// Superposes compactly supported pulses `(profile, speed, offset)`. Each
/// profile's support is its `xi_range` shifted by the offset.
pub fn compose_compact_peakons(pulses: &[(WaveProfile, f64, f64)]) -> Result<CompositeSolution, WaveError> {
    let mut placed: Vec<(usize, PlacedPulse)> = Vec::new();
    for (i, (prof, c, off)) in pulses.iter().enumerate() {
        let r = prof.xi_range;
        let amp = prof.amplitude().max(1.0);
        for x in [r.lo, r.hi] {
            let (phi, v) = prof.eval(x).unwrap_or((f64::NAN, f64::NAN));
            if !(phi.abs() <= 1e-6 * amp && v.abs() <= 1e-6 * amp) {
                return Err(WaveError::NonZeroBackground { index: i, phi, v });
            }
        }
        placed.push((
            i,
            PlacedPulse {
                profile: prof.clone(),
                speed: *c,
                offset: *off,
                support: Interval::new(r.lo + off, r.hi + off),
            },
        ));
    }
    placed.sort_by(|a, b| a.1.support.lo.partial_cmp(&b.1.support.lo).unwrap());
    for w in placed.windows(2) {
        if w[1].1.support.lo < w[0].1.support.hi {
            return Err(WaveError::Overlap {
                left: w[0].0,
                right: w[1].0,
            });
        }
    }
    let mut touch = f64::INFINITY;
    for i in 0..placed.len() {
        for j in i + 1..placed.len() {
            let (l, r) = (&placed[i].1, &placed[j].1);
            let gap = r.support.lo - l.support.hi;
            let closing = l.speed - r.speed;
            if closing > 0.0 {
                touch = touch.min(gap / closing);
            }
        }
    }
    Ok(CompositeSolution {
        pulses: placed.into_iter().map(|x| x.1).collect(),
        touch_time: touch,
        kind: ProfileKind::CompactSupportComposite,
    })
}

// ---------------------------------------------------------------------------
// ODE cross-check

struct TauXi {
    p: ModelParams,
}

impl OdeSystem for TauXi {
    fn dim(&self) -> usize {
        3
    }
    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let pt = PhasePoint::new(y[0], y[1]);
        let (a, b) = tau_field(&self.p, pt);
        dy[0] = a;
        dy[1] = b;
        dy[2] = self.p.c - y[0] * y[0] + y[1] * y[1];
    }
}

/// Net ξ-advance over one revolution of the closed level curve through
/// `start`, by direct integration of the rescaled system augmented with
/// `dξ/dτ = c - φ² + v²`. Independent of the quadrature in [`period`].
pub fn ode_loop_xi(p: &ModelParams, start: PhasePoint, tol: f64) -> Result<f64, WaveError> {
    let sys = TauXi { p: *p };
    let (fa, fb) = tau_field(p, start);
    let norm = (fa * fa + fb * fb).sqrt();
    let (na, nb) = (fa / norm, fb / norm);
    let scale = 1.0 + start.phi.abs() + start.v.abs();
    let mut y = vec![start.phi, start.v, 0.0];
    let mut t = 0.0;
    let tols = Tolerances {
        rtol: tol,
        atol: tol * 1e-2,
        ..Tolerances::default()
    };
    for _ in 0..16 {
        let ev = Event {
            g: Box::new(move |_t, y: &[f64]| (y[0] - start.phi) * na + (y[1] - start.v) * nb),
            direction: 1,
            terminal: true,
        };
        let sol = integrate(&sys, t, &y, t + 1e6, &tols, &[ev])?;
        if !sol.stopped {
            return Err(WaveError::OpenOrbit);
        }
        let (te, ye) = sol.last();
        t = te;
        y = ye.to_vec();
        let dist = ((y[0] - start.phi).powi(2) + (y[1] - start.v).powi(2)).sqrt();
        if dist <= 1e-6 * scale {
            return Ok(y[2]);
        }
    }
    Err(WaveError::OpenOrbit)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pp(k: f64, c: f64, g: f64) -> ModelParams {
        ModelParams::line(k, c, g)
    }

    #[test]
    fn taylor_shift_matches_derivatives() {
        // (x+1)^3 about x = 1: 8 + 12 t + 6 t^2 + t^3
        let s = taylor_shift(&[1.0, 3.0, 3.0, 1.0], 1.0);
        assert_eq!(s, vec![8.0, 12.0, 6.0, 1.0]);
    }

    #[test]
    fn stable_v2_matches_direct_away_from_roots() {
        let p = pp(1.0, 2.0, 2.0);
        let ev = BranchEval::new(&p, 0.5, Branch::Plus);
        for x in [-0.3, 0.4, 1.1, 1.9] {
            let direct = branch_radicand(&p, 0.5, Branch::Plus, x);
            if direct > 0.0 {
                assert!((ev.v2(x, None) - direct).abs() < 1e-12 * (1.0 + direct));
            }
        }
    }

    #[test]
    fn saddle_period_is_infinite() {
        let p = pp(0.0, 2.0, 0.0);
        let arc = LevelArc::new(p, 0.0, Branch::Plus, Interval::new(0.0, 3f64.sqrt()), HalfPlane::Upper).unwrap();
        assert_eq!(period(&arc).unwrap(), f64::INFINITY);
    }

    #[test]
    fn simple_crossing_period_is_finite() {
        // k=1,g=2,c=2,h=0: the + arc from the simple crossing (0,0) to the
        // patch point is finite
        let p = pp(1.0, 2.0, 2.0);
        let c = patch_candidates(&p, 0.0);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].left, StopKind::AxisSimple);
        let arc = LevelArc::new(p, 0.0, Branch::Plus, c[0].interval, HalfPlane::Upper).unwrap();
        let t = period(&arc).unwrap();
        assert!(t.is_finite() && t > 0.0);
    }

    #[test]
    fn k1_h0_loop_has_two_folds_and_matches_ode() {
        let p = pp(1.0, 2.0, 2.0);
        let dom = branch_domain(&p, 0.0, Branch::Plus);
        let iv = dom.iter().find(|iv| iv.contains(1.0)).copied().unwrap();
        let orbit = level_orbit(&p, 0.0, Branch::Plus, iv, HalfPlane::Upper).unwrap();
        assert!(orbit.closed);
        assert_eq!(orbit.arcs.len(), 4);
        let t = orbit.period().unwrap();
        let start = orbit.arcs[0].point_at(1.0);
        let t_ode = ode_loop_xi(&p, start, 1e-12).unwrap();
        assert!((t - t_ode).abs() < 1e-8 * t.abs(), "{t} vs {t_ode}");
        match trace_orbit(&orbit, 0.0).unwrap() {
            Traced::Multi(m) => {
                assert_eq!(m.folds.len(), 2);
                for f in &m.folds {
                    assert!(f.residual() < 1e-9, "{f:?}");
                }
                assert!(m.continuity_defect() < 1e-12);
                assert!((m.period - t).abs() < 1e-9 * t.abs());
                // ξ runs forward on +, backward on -
                assert!(m.branches[0].orientation() > 0.0);
                assert!(m.branches[1].orientation() < 0.0);
            }
            Traced::Single(_) => panic!("expected folds"),
        }
    }

    #[test]
    fn oval_around_center_matches_ode() {
        let p = pp(1.0, 4.0, 0.3);
        let cps = classify_critical_points(&p);
        let center = cps.iter().find(|c| c.kind == CriticalKind::Center && c.location.phi > 0.0).unwrap();
        let h = hamiltonian(&p, center.location) + 0.05;
        let dom = branch_domain(&p, h, Branch::Plus);
        let iv = dom.iter().find(|iv| iv.contains(center.location.phi)).copied().unwrap();
        let orbit = level_orbit(&p, h, Branch::Plus, iv, HalfPlane::Upper).unwrap();
        assert!(orbit.closed && !orbit.has_fold());
        let t = orbit.period().unwrap();
        let t_ode = ode_loop_xi(&p, orbit.arcs[0].point_at(center.location.phi), 1e-12).unwrap();
        assert!((t - t_ode).abs() < 1e-8 * t.abs(), "{t} vs {t_ode}");
        match trace_orbit(&orbit, 0.0).unwrap() {
            Traced::Single(w) => {
                assert_eq!(w.kind, ProfileKind::SmoothPeriodic);
                assert!((w.period - t).abs() < 1e-9 * t);
            }
            Traced::Multi(_) => panic!("no folds expected"),
        }
    }

    #[test]
    fn sinh_profile() {
        // k=0,g=0: w = A < 0 gives φ = √(-A) sinh(ξ + d)
        let p = pp(0.0, 2.0, 0.0);
        let a: f64 = -1.5;
        let h = a * a / 4.0 - p.c * a / 2.0;
        let dom = branch_domain(&p, h, Branch::Plus);
        assert_eq!(dom.len(), 1);
        let arc = LevelArc::new(p, h, Branch::Plus, dom[0], HalfPlane::Upper).unwrap();
        let w = trace_profile(&arc, 0.3).unwrap();
        let r = (-a).sqrt();
        for xi in [-4.0, -1.0, 0.0, 0.3, 2.5, 6.0] {
            let phi = w.phi(xi).unwrap();
            let want = r * (xi - 0.3).sinh();
            assert!((phi - want).abs() < 1e-8 * (1.0 + want.abs()), "{xi}: {phi} vs {want}");
        }
    }

    #[test]
    fn cosh_profile() {
        let p = pp(0.0, 2.0, 0.0);
        let a: f64 = 1.0;
        let h = a * a / 4.0 - p.c * a / 2.0;
        let arc = LevelArc::new(p, h, Branch::Plus, Interval::new(1.0, f64::INFINITY), HalfPlane::Upper).unwrap();
        let w = trace_profile(&arc, -0.7).unwrap();
        for xi in [-0.7, -0.2, 0.5, 3.0, 8.0] {
            let phi = w.phi(xi).unwrap();
            let want = a.sqrt() * (xi + 0.7).cosh();
            assert!((phi - want).abs() < 1e-8 * want, "{xi}: {phi} vs {want}");
        }
    }

    #[test]
    fn k0_pulse_is_exponential() {
        let p = pp(0.0, 2.0, 0.0);
        let w = build_patched_solution(&p, 0.0).unwrap();
        assert_eq!(w.kind, ProfileKind::Unbounded);
        assert_eq!(w.period, f64::INFINITY);
        assert_eq!(w.joints.len(), 1);
        let j = w.joints[0];
        let s3 = 3f64.sqrt();
        assert!(j.xi.abs() < 1e-12);
        assert!((j.v_left - s3).abs() < 1e-12 && (j.v_right + s3).abs() < 1e-12, "{j:?}");
        let mut err: f64 = 0.0;
        for i in 0..=1000 {
            let xi = -5.0 + 0.01 * i as f64;
            err = err.max((w.phi(xi).unwrap() - s3 * (-xi.abs()).exp()).abs());
        }
        assert!(err < 1e-9, "{err}");
        // past the window the tails continue the exponential
        assert!((w.phi(25.0).unwrap() - s3 * (-25f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn jump_residual_k0_zero_and_corruption_detected() {
        let p = pp(0.0, 2.0, 0.0);
        let mut w = build_patched_solution(&p, 0.0).unwrap();
        let r = verify_jump_conditions(&w);
        assert_eq!(r.len(), 1);
        assert!(r[0].residual1 < 1e-14);
        assert!(r[0].residual2 < 1e-6, "{:?}", r[0]);
        w.joints[0].v_right *= 1.1;
        let r = verify_jump_conditions(&w);
        assert!(r[0].residual1 > 0.05);
    }

    #[test]
    fn smooth_profile_has_no_joints_to_check() {
        let p = pp(1.0, 4.0, 0.0);
        let h = hamiltonian(&p, PhasePoint::new(2f64.sqrt(), 0.0)) + 0.1;
        let iv = branch_domain(&p, h, Branch::Plus)
            .into_iter()
            .find(|iv| iv.contains(2f64.sqrt()))
            .unwrap();
        let orbit = level_orbit(&p, h, Branch::Plus, iv, HalfPlane::Upper).unwrap();
        if let Traced::Single(w) = trace_orbit(&orbit, 0.0).unwrap() {
            assert!(verify_jump_conditions(&w).is_empty());
        } else {
            panic!()
        }
    }

    #[test]
    fn k1_single_joint_profile() {
        let p = pp(1.0, 2.0, 2.0);
        let w = build_patched_solution(&p, 0.0).unwrap();
        assert_eq!(w.kind, ProfileKind::PatchedPeriodic);
        assert_eq!(w.joints.len(), 1);
        let j = w.joints[0];
        assert!((j.phi - 1.7827).abs() < 1e-3);
        assert!(j.kinematic_residual(p.c) < 1e-12);
        // the period equals twice the quadrature length of the upper arc
        let arc = w.segments.iter().find(|s| s.arc.half_plane == HalfPlane::Upper).unwrap().arc;
        let t = period(&arc).unwrap();
        assert!((w.period - 2.0 * t).abs() < 1e-10 * w.period);
        // φ is continuous across the joint and periodic
        let l = w.phi(-1e-9).unwrap();
        let r = w.phi(1e-9).unwrap();
        assert!((l - r).abs() < 1e-8);
        for i in 0..10 {
            let x = -3.0 + 0.61 * i as f64;
            assert!((w.phi(x).unwrap() - w.phi(x + w.period).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn k1_two_joint_profile() {
        let p = pp(1.0, 2.0, 2.0);
        let w = build_patched_solution(&p, 5.0).unwrap();
        assert_eq!(w.kind, ProfileKind::PatchedPeriodic);
        assert_eq!(w.joints.len(), 2);
        assert!(w.joints.iter().any(|j| j.phi < 0.0) && w.joints.iter().any(|j| j.phi > 0.0));
        for j in &w.joints {
            assert!(j.kinematic_residual(p.c) < 1e-10);
        }
    }

    #[test]
    fn find_h0_k1_threshold() {
        let h0 = find_h0(&pp(1.0, 2.0, 2.0));
        assert!((h0 - (1.0 + 2.0 * 2f64.sqrt())).abs() < 1e-8, "{h0}");
    }

    #[test]
    fn find_h0_negative_c_floor() {
        for (k, c, g) in [(1.0, -1.0, 0.5), (0.0, -2.0, 0.0), (-1.0, -0.5, 1.0)] {
            let h0 = find_h0(&pp(k, c, g));
            assert!(h0 >= 0.75 * c * c);
        }
    }

    #[test]
    fn find_h0_k0_symmetric_hits() {
        let p = pp(0.0, 2.0, 0.0);
        let h0 = find_h0(&p);
        for h in [h0 + 0.1, h0 + 3.0] {
            let hits: Vec<_> = intersect_hyperbola(&p, h, Branch::Plus, Hyperbola::Patch)
                .into_iter()
                .filter(|x| x.point.v > 0.0)
                .collect();
            assert_eq!(hits.len(), 2);
            assert!((hits[0].point.phi + hits[1].point.phi).abs() < 1e-12);
            // oracle: 2(φ² - c) = √(c² + 4h)
            let phi2 = p.c + 0.5 * (p.c * p.c + 4.0 * h).sqrt();
            assert!((hits[1].point.phi - phi2.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn mirrored_profile_flips_sign() {
        let a = build_patched_solution(&pp(1.0, 2.0, 2.0), 0.0).unwrap();
        let b = build_patched_solution(&pp(1.0, 2.0, -2.0), 0.0).unwrap();
        assert!(b.mirrored);
        for x in [-1.0, -0.3, 0.2, 0.9] {
            assert!((a.phi(x).unwrap() + b.phi(x).unwrap()).abs() < 1e-14);
        }
        assert!(b.joints[0].kinematic_residual(2.0) < 1e-12);
    }

    #[test]
    fn composition_touch_times() {
        let p = pp(0.0, 2.0, 0.0);
        let w = build_patched_solution(&p, 0.0).unwrap();
        let width = w.xi_range.width();
        let c = compose_compact_peakons(&[(w.clone(), 1.0, 0.0), (w.clone(), 2.0, width + 5.0)]).unwrap();
        assert_eq!(c.touch_time, f64::INFINITY);
        let c = compose_compact_peakons(&[(w.clone(), 3.0, 0.0), (w.clone(), 2.0, width + 5.0)]).unwrap();
        assert!((c.touch_time - 5.0).abs() < 1e-12);
        assert!(matches!(
            compose_compact_peakons(&[(w.clone(), 1.0, 0.0), (w.clone(), 1.0, 1.0)]),
            Err(WaveError::Overlap { .. })
        ));
        let single = compose_compact_peakons(&[(w.clone(), 2.0, 0.0)]).unwrap();
        for x in [-3.0, 0.0, 0.4, 7.0] {
            assert_eq!(single.eval(x, 0.0), w.phi(x).unwrap());
        }
    }
}
