//! Planar curves from periodic curvature.
//!
//! A periodic curvature `κ = κ_smooth + Σ Δθ_j δ(s - s_j)` defines the angle
//! function `θ(s) = ∫_(0,s] κ`, right-continuous with jumps at the atoms, and
//! the unit-speed curve `γ(s) = ∫_0^s e^{iθ}`. Atoms show up as corners:
//! a negative jump draws a cusp, a positive one a singular point. The module
//! also evolves discrete closed curves under `r_t = aτ + bn`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;
use thiserror::Error;

use crate::numerics::quad::{adaptive_gauss, gl10, gl20, AdaptiveOptions, QuadError};
use crate::phase_plane::{branch_value, Branch, ModelParams, PhaseError};
use crate::wave_builder::{find_h0, patch_candidates, ProfileKind, StopKind, WaveError, WaveProfile};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurveError {
    #[error(transparent)]
    Phase(#[from] PhaseError),
    #[error(transparent)]
    Wave(#[from] WaveError),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error("profile touches the jump hyperbola at (φ, v) = ({phi}, {v})")]
    Domain { phi: f64, v: f64 },
    #[error("h = {h} is not above the patch threshold h0 = {h0}")]
    NotAdmissible { h: f64, h0: f64 },
    #[error("no two-sided patch arc at h = {h}")]
    NoArc { h: f64 },
    #[error("|a| = {a:e} at vertex {index} is too small")]
    Division { index: usize, a: f64 },
    #[error("discrete curve self-intersects at step {step} (segments {i} and {j})")]
    SelfIntersection { step: usize, i: usize, j: usize },
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Dirac part of the curvature: the angle jumps by `jump` at `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Atom {
    pub s: f64,
    pub jump: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AtomKind {
    Cusp,
    Singular,
}

impl Atom {
    pub fn kind(&self) -> AtomKind {
        if self.jump < 0.0 {
            AtomKind::Cusp
        } else {
            AtomKind::Singular
        }
    }
}

/// Periodic curvature on `(0, T]`.
#[derive(Clone)]
pub struct CurvatureData {
    pub period: f64,
    /// Smooth part of κ on `(0, T)`.
    pub smooth: ScalarFn,
    /// `∫_0^s κ_smooth` on `[0, T]`, when known in closed form.
    pub primitive: Option<ScalarFn>,
    /// Points in `(0, T)` where the smooth part is not smooth.
    pub breaks: Vec<f64>,
    /// Sorted atoms with locations in `(0, T]`.
    pub atoms: Vec<Atom>,
}

impl fmt::Debug for CurvatureData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CurvatureData")
            .field("period", &self.period)
            .field("breaks", &self.breaks)
            .field("atoms", &self.atoms)
            .field("closed_form", &self.primitive.is_some())
            .finish()
    }
}

impl CurvatureData {
    pub fn new(period: f64, smooth: ScalarFn, mut breaks: Vec<f64>, mut atoms: Vec<Atom>) -> Result<Self, CurveError> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(CurveError::Invalid(format!("period {period}")));
        }
        atoms.sort_by(|a, b| a.s.total_cmp(&b.s));
        for a in &atoms {
            if !(a.s > 0.0 && a.s <= period) {
                return Err(CurveError::Invalid(format!("atom at {} outside (0, {period}]", a.s)));
            }
        }
        if atoms.windows(2).any(|w| w[0].s == w[1].s) {
            return Err(CurveError::Invalid("atoms at the same location".into()));
        }
        breaks.retain(|&b| b > 0.0 && b < period);
        breaks.sort_by(|a, b| a.total_cmp(b));
        breaks.dedup();
        Ok(Self {
            period,
            smooth,
            primitive: None,
            breaks,
            atoms,
        })
    }

    pub fn with_primitive(mut self, primitive: ScalarFn) -> Self {
        self.primitive = Some(primitive);
        self
    }

    /// Constant curvature `2π/T`: a circle of circumference `T`.
    pub fn circle(period: f64) -> Self {
        let k = 2.0 * PI / period;
        Self::new(period, Arc::new(move |_| k), vec![], vec![])
            .unwrap()
            .with_primitive(Arc::new(move |s| k * s))
    }

    /// The two-piece cusped-loop example: `κ = π/3 + σ + σ² - 17/6` with
    /// `σ = s` on `(0, 1)` and `σ = 2 - s` on `(1, 2)`, atoms `+6` at 1 and
    /// `-2` at 2.
    pub fn cusped_loop() -> Self {
        let smooth: ScalarFn = Arc::new(|s: f64| {
            let q = if s < 1.0 { s } else { 2.0 - s };
            PI / 3.0 + q + q * q - 17.0 / 6.0
        });
        let primitive: ScalarFn = Arc::new(|s: f64| {
            if s <= 1.0 {
                PI / 3.0 * s + 0.5 * s * s + s * s * s / 3.0 - 17.0 / 6.0 * s
            } else {
                // counted back from s = 2, where it equals 2π/3 - 4 (the atoms
                // sum to 4); the constant is exact, so θ(2) is exactly 2π/3
                let r = 2.0 - s;
                (2.0 * PI / 3.0 - 4.0) - (PI / 3.0 * r + 0.5 * r * r + r * r * r / 3.0 - 17.0 / 6.0 * r)
            }
        });
        Self::new(
            2.0,
            smooth,
            vec![1.0],
            vec![Atom { s: 1.0, jump: 6.0 }, Atom { s: 2.0, jump: -2.0 }],
        )
        .unwrap()
        .with_primitive(primitive)
    }

    /// `∫_0^s κ_smooth` for `s ∈ [0, T]`.
    pub fn smooth_integral(&self, s: f64) -> f64 {
        if let Some(p) = &self.primitive {
            return p(s);
        }
        let mut knots = vec![0.0];
        knots.extend(self.breaks.iter().copied().filter(|&b| b < s));
        knots.push(s);
        let f = &self.smooth;
        let opts = AdaptiveOptions {
            rtol: 1e-14,
            atol: 1e-15,
            max_depth: 30,
        };
        knots
            .windows(2)
            .map(|w| adaptive_gauss(|x| f(x), w[0], w[1], opts).unwrap_or_else(|e| match e {
                QuadError::NotConverged { value, .. } => value,
                QuadError::NonFinite { .. } => f64::NAN,
            }))
            .sum()
    }

    /// Sum of atom jumps in `(0, s]`.
    fn atoms_upto(&self, s: f64) -> f64 {
        self.atoms.iter().filter(|a| a.s <= s).map(|a| a.jump).sum()
    }

    /// `θ(T)`.
    pub fn total_angle(&self) -> f64 {
        self.smooth_integral(self.period) + self.atoms_upto(self.period)
    }
}

/// `θ(s) = ∫_(0,s] κ`, extended by `θ(s + T) = θ(s) + θ(T)`.
pub fn angle_function(curv: &CurvatureData, s: f64) -> f64 {
    let t = curv.period;
    let q = (s / t).floor();
    let mut r = s - q * t;
    let mut q = q;
    if r >= t {
        r -= t;
        q += 1.0;
    }
    q * curv.total_angle() + curv.smooth_integral(r) + curv.atoms_upto(r)
}

/// Left limit `θ(s-)`.
pub fn angle_left_limit(curv: &CurvatureData, s: f64) -> f64 {
    let t = curv.period;
    let q = (s / t).ceil() - 1.0;
    let r = s - q * t;
    // r ∈ (0, T]
    let jumps: f64 = curv.atoms.iter().filter(|a| a.s < r).map(|a| a.jump).sum();
    q * curv.total_angle() + curv.smooth_integral(r) + jumps
}

/// `∫_(0, nT] κ = n θ(T)`.
pub fn gauss_bonnet(curv: &CurvatureData, n: u32) -> f64 {
    n as f64 * curv.total_angle()
}

/// Best rational approximation `m/n` of `x` with `n ≤ n_max` from the
/// continued fraction; returns the first convergent within `tol`.
pub fn rational_approx(x: f64, n_max: i64, tol: f64) -> Option<(i64, i64)> {
    let (mut h0, mut h1) = (0i64, 1i64);
    let (mut k0, mut k1) = (1i64, 0i64);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        if a.abs() > 1e15 {
            break;
        }
        let a = a as i64;
        let h2 = a.checked_mul(h1)?.checked_add(h0)?;
        let k2 = a.checked_mul(k1)?.checked_add(k0)?;
        if k2 > n_max {
            break;
        }
        if (x - h2 as f64 / k2 as f64).abs() <= tol {
            return Some((h2, k2));
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = r - a as f64;
        if frac.abs() < 1e-300 {
            break;
        }
        r = 1.0 / frac;
    }
    None
}

/// Best convergent with denominator `≤ n_max` and its error.
pub fn nearest_rational(x: f64, n_max: i64) -> (i64, i64, f64) {
    let (mut h0, mut h1) = (0i64, 1i64);
    let (mut k0, mut k1) = (1i64, 0i64);
    let mut r = x;
    let mut best = (x.round() as i64, 1i64, (x - x.round()).abs());
    for _ in 0..64 {
        let a = r.floor();
        if a.abs() > 1e15 {
            break;
        }
        let a = a as i64;
        let h2 = a * h1 + h0;
        let k2 = a * k1 + k0;
        if k2 > n_max {
            break;
        }
        let e = (x - h2 as f64 / k2 as f64).abs();
        if e < best.2 {
            best = (h2, k2, e);
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = r - a as f64;
        if frac.abs() < 1e-300 {
            break;
        }
        r = 1.0 / frac;
    }
    best
}

pub const CLOSURE_N_MAX: i64 = 64;
pub const CLOSURE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ClosureStatus {
    /// `θ(T) ∈ 2π(ℚ∖ℤ)`: the curve closes after `n` periods.
    Closed,
    /// `θ(T)/2π` has no rational approximation within tolerance.
    NotClosed,
    /// `θ(T) ∈ 2πℤ`: the criterion is silent; see `fallback_closed`.
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosureReport {
    pub status: ClosureStatus,
    pub m: i64,
    pub n: i64,
    pub total_length: f64,
    /// Endpoint test over one period for the integer case.
    pub fallback_closed: Option<bool>,
    pub fallback_gap: Option<f64>,
}

impl ClosureReport {
    /// Whether the curve is known to close (criterion or fallback).
    pub fn closes(&self) -> bool {
        match self.status {
            ClosureStatus::Closed => true,
            ClosureStatus::NotClosed => false,
            ClosureStatus::Inconclusive => self.fallback_closed == Some(true),
        }
    }
}

pub fn closure_check(curv: &CurvatureData) -> ClosureReport {
    let x = curv.total_angle() / (2.0 * PI);
    match rational_approx(x, CLOSURE_N_MAX, CLOSURE_TOL) {
        Some((m, 1)) => {
            let poly = reconstruct_curve(curv, 1, 256);
            let gap = poly.gap();
            let ok = gap <= 1e-6 * curv.period;
            ClosureReport {
                status: ClosureStatus::Inconclusive,
                m,
                n: 1,
                total_length: if ok { curv.period } else { f64::INFINITY },
                fallback_closed: Some(ok),
                fallback_gap: Some(gap),
            }
        }
        Some((m, n)) => ClosureReport {
            status: ClosureStatus::Closed,
            m,
            n,
            total_length: n as f64 * curv.period,
            fallback_closed: None,
            fallback_gap: None,
        },
        None => ClosureReport {
            status: ClosureStatus::NotClosed,
            m: 0,
            n: 0,
            total_length: f64::INFINITY,
            fallback_closed: None,
            fallback_gap: None,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Marker {
    pub index: usize,
    pub s: f64,
    pub kind: AtomKind,
    pub jump: f64,
}

/// Polyline through `γ(s_i)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanarPolyline {
    pub vertices: Vec<[f64; 2]>,
    pub s: Vec<f64>,
    pub closed: bool,
    pub rotation_fraction: Option<(i64, i64)>,
    pub markers: Vec<Marker>,
}

impl PlanarPolyline {
    pub fn gap(&self) -> f64 {
        let (a, b) = (self.vertices[0], self.vertices[self.vertices.len() - 1]);
        (a[0] - b[0]).hypot(a[1] - b[1])
    }

    pub fn length(&self) -> f64 {
        self.s[self.s.len() - 1] - self.s[0]
    }

    pub fn cusp_count(&self) -> usize {
        self.markers.iter().filter(|m| m.kind == AtomKind::Cusp).count()
    }
}

/// Unit-speed reconstruction over `n_periods`, with `resolution` cells per
/// smooth piece and vertices at every atom and break.
pub fn reconstruct_curve(curv: &CurvatureData, n_periods: usize, resolution: usize) -> PlanarPolyline {
    let res = resolution.max(16);
    let t = curv.period;
    let total = curv.total_angle();
    let mut knots = vec![0.0];
    knots.extend(curv.breaks.iter().copied());
    knots.extend(curv.atoms.iter().map(|a| a.s).filter(|&s| s < t));
    knots.push(t);
    knots.sort_by(|a, b| a.total_cmp(b));
    knots.dedup();

    // one period of cell boundaries
    let mut cells = Vec::new();
    for w in knots.windows(2) {
        for i in 0..res {
            let a = w[0] + (w[1] - w[0]) * i as f64 / res as f64;
            let b = if i + 1 == res { w[1] } else { w[0] + (w[1] - w[0]) * (i + 1) as f64 / res as f64 };
            cells.push((a, b));
        }
    }

    let rule = gl10();
    let f = &curv.smooth;
    let cell_integral = |a: f64, b: f64| rule.integrate(|x| f(x), a, b);

    // θ at the start of each cell (right limit) within one period
    let mut theta_start = Vec::with_capacity(cells.len());
    let mut th = 0.0;
    for &(a, b) in &cells {
        theta_start.push(th);
        th += match &curv.primitive {
            Some(prim) => prim(b) - prim(a),
            None => cell_integral(a, b),
        };
        if let Some(at) = curv.atoms.iter().find(|x| x.s == b) {
            th += at.jump;
        }
    }
    // the running sum may differ from the closed form by round-off; the
    // period increment uses the exact total so the cocycle holds
    let mut vertices = vec![[0.0, 0.0]];
    let mut s_out = vec![0.0];
    let mut markers = Vec::new();
    if let Some(at) = curv.atoms.iter().find(|x| x.s == t) {
        markers.push(Marker {
            index: 0,
            s: 0.0,
            kind: at.kind(),
            jump: at.jump,
        });
    }
    let (mut x, mut y) = (0.0, 0.0);
    for p in 0..n_periods {
        let off = p as f64 * total;
        let s_off = p as f64 * t;
        for (ci, &(a, b)) in cells.iter().enumerate() {
            let th0 = off + theta_start[ci];
            let mut dx = 0.0;
            let mut dy = 0.0;
            for (node, w) in rule.mapped(a, b) {
                let th = match &curv.primitive {
                    Some(prim) => th0 + prim(node) - prim(a),
                    None => th0 + rule.integrate(|z| f(z), a, node),
                };
                dx += w * th.cos();
                dy += w * th.sin();
            }
            x += dx;
            y += dy;
            vertices.push([x, y]);
            s_out.push(s_off + b);
            if let Some(at) = curv.atoms.iter().find(|q| q.s == b) {
                markers.push(Marker {
                    index: vertices.len() - 1,
                    s: s_off + b,
                    kind: at.kind(),
                    jump: at.jump,
                });
            }
        }
    }
    let len = n_periods as f64 * t;
    let gap = {
        let l = vertices[vertices.len() - 1];
        l[0].hypot(l[1])
    };
    let rot = rational_approx(total / (2.0 * PI), CLOSURE_N_MAX, CLOSURE_TOL);
    PlanarPolyline {
        vertices,
        s: s_out,
        closed: n_periods > 0 && gap <= 1e-6 * len,
        rotation_fraction: rot,
        markers,
    }
}

// ---------------------------------------------------------------------------
// patched profiles

/// `θ_h(T_h)` for a patched `k = 1` profile, by both expressions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThetaTotal {
    pub h: f64,
    /// `2∫ φ/v dφ`.
    pub theta: f64,
    /// `2(∫ (2kφ - g)/((c - φ² + v²) v) dφ + v₂ - v₁)`.
    pub theta_alt: f64,
    /// `T_h = 2∫ dφ/v`.
    pub period: f64,
    pub phi1: f64,
    pub phi2: f64,
}

fn patch_arc(params: &ModelParams, h: f64) -> Result<(f64, f64), CurveError> {
    let cands = patch_candidates(params, h);
    cands
        .iter()
        .filter(|c| c.left == StopKind::Patch && c.right == StopKind::Patch)
        .max_by(|a, b| a.v_max.total_cmp(&b.v_max))
        .map(|c| (c.interval.lo, c.interval.hi))
        .ok_or(CurveError::NoArc { h })
}

/// GL20 on cells graded geometrically toward both ends. Near h0 the left
/// patch point approaches a point where the axis, both hyperbolas and the
/// outer-radicand root meet, so the integrands have a singularity just
/// outside the interval at an arbitrarily small distance.
fn graded_integral<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> Result<f64, CurveError> {
    const LEVELS: i32 = 60;
    let rule = gl20();
    let m = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut total = 0.0;
    for (end, dir) in [(a, 1.0), (b, -1.0)] {
        let mut outer = half;
        for j in 1..=LEVELS {
            let inner = if j == LEVELS { 0.0 } else { half * 0.5f64.powi(j) };
            let (x0, x1) = (end + dir * inner, end + dir * outer);
            total += dir * rule.integrate(&f, x0, x1);
            outer = inner;
        }
    }
    if !total.is_finite() {
        return Err(CurveError::Quadrature(QuadError::NonFinite { x: m }));
    }
    Ok(total)
}

pub fn theta_total(params: &ModelParams, h: f64) -> Result<ThetaTotal, CurveError> {
    if params.k != 1.0 {
        return Err(CurveError::Invalid(format!("theta_total requires k = 1 (got {})", params.k)));
    }
    let h0 = find_h0(params);
    if !(h > h0) {
        return Err(CurveError::NotAdmissible { h, h0 });
    }
    let (phi1, phi2) = patch_arc(params, h)?;
    let p = *params;
    // Plus branch with the outer radicand and φ² - c in factored form, so
    // √R and v² keep their digits next to the patch points
    let disc = (p.g * p.g + p.k * (p.c * p.c + 4.0 * h)).sqrt();
    let (r1, r2) = ((p.g - disc) / (2.0 * p.k), (p.g + disc) / (2.0 * p.k));
    let sc = p.c.sqrt();
    let sqrt_r = move |phi: f64| (4.0 * p.k * (phi - r1) * (r2 - phi)).max(0.0).sqrt();
    let vv = move |phi: f64| ((phi - sc) * (phi + sc) + sqrt_r(phi)).max(0.0).sqrt();
    // surface domain errors before integrating
    for x in [phi1, 0.5 * (phi1 + phi2), phi2] {
        branch_value(&p, h, Branch::Plus, x)?;
    }
    let theta = 2.0 * graded_integral(|phi| phi / vv(phi), phi1, phi2)?;
    let period = 2.0 * graded_integral(|phi| 1.0 / vv(phi), phi1, phi2)?;
    // in w = √(φ - r1) the factor √R = w√(4k(r2 - φ)) cancels against dφ = 2w dw
    let alt_int = graded_integral(
        |w| {
            let phi = r1 + w * w;
            let v2 = (phi - sc) * (phi + sc) + w * (4.0 * p.k * (r2 - phi)).sqrt();
            2.0 * (2.0 * p.k * phi - p.g) / ((4.0 * p.k * (r2 - phi)).sqrt() * v2.max(0.0).sqrt())
        },
        (phi1 - r1).max(0.0).sqrt(),
        (phi2 - r1).max(0.0).sqrt(),
    )?;
    let theta_alt = 2.0 * (alt_int + vv(phi2) - vv(phi1));
    Ok(ThetaTotal {
        h,
        theta,
        theta_alt,
        period,
        phi1,
        phi2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub h: f64,
    pub theta_total: f64,
    pub theta_alt: f64,
    #[serde(rename = "T")]
    pub period: f64,
    /// Best `m/n` (n ≤ 64) approximating `θ/2π` and its error.
    pub near_m: i64,
    pub near_n: i64,
    pub near_err: f64,
}

/// `θ_h(T_h)` on `points` equally spaced values in `(h_min, h_max]`
/// (`h_min` itself excluded), evaluated in parallel.
pub fn theta_sweep(params: &ModelParams, h_min: f64, h_max: f64, points: usize) -> Result<Vec<SweepPoint>, CurveError> {
    if points == 0 || !(h_max > h_min) {
        return Err(CurveError::Invalid(format!("empty h-range ({h_min}, {h_max}] with {points} points")));
    }
    (1..=points)
        .into_par_iter()
        .map(|i| {
            let h = if i == points {
                h_max
            } else {
                h_min + (h_max - h_min) * i as f64 / points as f64
            };
            let t = theta_total(params, h)?;
            let (m, n, e) = nearest_rational(t.theta / (2.0 * PI), CLOSURE_N_MAX);
            Ok(SweepPoint {
                h,
                theta_total: t.theta,
                theta_alt: t.theta_alt,
                period: t.period,
                near_m: m,
                near_n: n,
                near_err: e,
            })
        })
        .collect()
}

/// Cells on `[a, b]`: `n` uniform ones in the middle half plus `levels`
/// geometrically shrinking ones toward each end.
fn graded_cells(a: f64, b: f64, n: usize, levels: i32) -> Vec<(f64, f64)> {
    let q = 0.25 * (b - a);
    let mut pts: Vec<f64> = (1..=levels).rev().map(|j| a + q * 0.5f64.powi(j - 1)).collect();
    pts.insert(0, a);
    let mid: Vec<f64> = (1..n).map(|i| a + q + 2.0 * q * i as f64 / n as f64).collect();
    pts.extend(mid);
    pts.extend((1..=levels).map(|j| b - q * 0.5f64.powi(j - 1)));
    pts.push(b);
    pts.dedup();
    pts.windows(2).map(|w| (w[0], w[1])).collect()
}

/// Curvature of a periodic profile: smooth part `(2kφ - g)/(c - φ² + v²)`
/// and one atom `v_left - v_right` per joint.
pub fn profile_to_curvature(profile: &WaveProfile) -> Result<CurvatureData, CurveError> {
    if !matches!(profile.kind, ProfileKind::PatchedPeriodic | ProfileKind::SmoothPeriodic) || !profile.period.is_finite() {
        return Err(CurveError::Invalid(format!("profile of kind {:?} is not periodic", profile.kind)));
    }
    let t = profile.period;
    let x0 = profile.xi_range.lo;
    let p = profile.params;
    let prof = Arc::new(profile.clone());
    // guard the closed form away from the jump hyperbola
    for seg in &profile.segments {
        for s in &seg.samples {
            let d = p.c - s.phi * s.phi + s.v * s.v;
            if d.abs() < 1e-8 && (p.g - 2.0 * p.k * s.phi).abs() > 1e-8 {
                return Err(CurveError::Domain { phi: s.phi, v: s.v });
            }
        }
    }
    let smooth: ScalarFn = {
        let prof = prof.clone();
        Arc::new(move |s: f64| {
            let (phi, v) = prof.eval(x0 + s).unwrap_or((f64::NAN, f64::NAN));
            let d = p.c - phi * phi + v * v;
            if d.abs() < 1e-8 {
                // removable point: κ = φ - φ'' with both sides vanishing
                phi
            } else {
                (2.0 * p.k * phi - p.g) / d
            }
        })
    };
    let mut atoms = Vec::new();
    let mut breaks = Vec::new();
    for j in &profile.joints {
        let mut s = (j.xi - x0).rem_euclid(t);
        if s <= 1e-12 * t || (t - s) <= 1e-12 * t {
            s = t;
        }
        atoms.push(Atom {
            s,
            jump: j.v_left - j.v_right,
        });
        breaks.push(s);
    }
    for seg in &profile.segments {
        breaks.push(seg.xi.lo - x0);
        breaks.push(seg.xi.hi - x0);
    }
    let period = t;
    let data = CurvatureData::new(period, smooth, breaks, atoms)?;
    // tabulate the primitive once: θ is evaluated many times downstream
    let knots: Vec<f64> = {
        let mut k = vec![0.0];
        k.extend(data.breaks.iter().copied());
        k.push(period);
        k
    };
    let rule = gl10();
    let f = data.smooth.clone();
    let mut grid = vec![0.0];
    let mut cum = vec![0.0];
    for w in knots.windows(2) {
        for (a, b) in graded_cells(w[0], w[1], 64, 40) {
            let last = cum[cum.len() - 1];
            cum.push(last + rule.integrate(|x| f(x), a, b));
            grid.push(b);
        }
    }
    let f2 = data.smooth.clone();
    let primitive: ScalarFn = Arc::new(move |s: f64| {
        let i = match grid.binary_search_by(|g| g.total_cmp(&s)) {
            Ok(i) => return cum[i],
            Err(i) => i.clamp(1, grid.len() - 1) - 1,
        };
        cum[i] + rule.integrate(|x| f2(x), grid[i], s)
    });
    Ok(data.with_primitive(primitive))
}

// ---------------------------------------------------------------------------
// curve evolution

/// Normal/tangential speed laws for `r_t = aτ + bn`.
#[derive(Clone)]
pub enum FlowLaw {
    /// `(a, b)` as functions of the label and time.
    Prescribed(Arc<dyn Fn(f64, f64) -> (f64, f64) + Send + Sync>),
    /// mCH data `a = -(u² - u_s²) - 2`, `b = -2u_s` from a given
    /// `(u, u_s)(label, t)`.
    Mch(Arc<dyn Fn(f64, f64) -> (f64, f64) + Send + Sync>),
    /// mCH data with `u = (1 - ∂ss)⁻¹ κ` recomputed from the discrete
    /// curvature every step (spectral solve on the periodic label grid).
    MchSelfConsistent,
    /// mKdV data `a = κ²/2`, `b = κ_s`.
    Mkdv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Stepper {
    Euler,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub t: f64,
    pub length: f64,
    pub area: f64,
    /// `(L - L0)/L0`.
    pub length_drift: f64,
    /// `A - A0`.
    pub area_drift: f64,
    /// `-∫∮ b ds dt` accumulated with the same rule as the step.
    pub predicted_area_drift: f64,
    /// Max over vertices of `|κ_t - b_ss - (κa)_s|`.
    pub curvature_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveTrajectory {
    pub labels: Vec<f64>,
    pub frames: Vec<Vec<[f64; 2]>>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub a_final: Vec<f64>,
}

impl CurveTrajectory {
    pub fn max_length_drift(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.length_drift.abs()).fold(0.0, f64::max)
    }

    /// Max of `|ΔA - predicted|`.
    pub fn max_area_defect(&self) -> f64 {
        self.diagnostics
            .iter()
            .map(|d| (d.area_drift - d.predicted_area_drift).abs())
            .fold(0.0, f64::max)
    }
}

/// `½ Σ (x_i y_{i+1} - x_{i+1} y_i)` over the closed polygon.
pub fn signed_area(r: &[[f64; 2]]) -> f64 {
    let n = r.len();
    (0..n)
        .map(|i| {
            let (a, b) = (r[i], r[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        * 0.5
}

pub fn polygon_length(r: &[[f64; 2]]) -> f64 {
    let n = r.len();
    (0..n)
        .map(|i| {
            let (a, b) = (r[i], r[(i + 1) % n]);
            (b[0] - a[0]).hypot(b[1] - a[1])
        })
        .sum()
}

/// Signed three-point (circumscribed circle) curvature at every vertex.
pub fn discrete_curvature(r: &[[f64; 2]]) -> Vec<f64> {
    let n = r.len();
    (0..n)
        .map(|i| {
            let p = r[(i + n - 1) % n];
            let q = r[i];
            let s = r[(i + 1) % n];
            let a = [q[0] - p[0], q[1] - p[1]];
            let b = [s[0] - q[0], s[1] - q[1]];
            let c = [s[0] - p[0], s[1] - p[1]];
            let cross = a[0] * b[1] - a[1] * b[0];
            2.0 * cross / (a[0].hypot(a[1]) * b[0].hypot(b[1]) * c[0].hypot(c[1]))
        })
        .collect()
}

fn tangents(r: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let n = r.len();
    (0..n)
        .map(|i| {
            let p = r[(i + n - 1) % n];
            let s = r[(i + 1) % n];
            let d = [s[0] - p[0], s[1] - p[1]];
            let l = d[0].hypot(d[1]);
            [d[0] / l, d[1] / l]
        })
        .collect()
}

fn centered_diff(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    (0..n).map(|i| (f[(i + 1) % n] - f[(i + n - 1) % n]) / (2.0 * h)).collect()
}

fn second_diff(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    (0..n)
        .map(|i| (f[(i + 1) % n] - 2.0 * f[i] + f[(i + n - 1) % n]) / (h * h))
        .collect()
}

/// Solves `u - u_ss = κ` and returns `(u, u_s)` on a periodic grid of
/// length `len`.
pub fn helmholtz_periodic(kappa: &[f64], len: f64) -> (Vec<f64>, Vec<f64>) {
    let n = kappa.len();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut hat: Vec<Complex64> = kappa.iter().map(|&k| Complex64::new(k, 0.0)).collect();
    fwd.process(&mut hat);
    let w = 2.0 * PI / len;
    let mut d = hat.clone();
    for i in 0..n {
        let m = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
        let km = w * m;
        hat[i] /= 1.0 + km * km;
        let dm = if n % 2 == 0 && i == n / 2 { 0.0 } else { km };
        d[i] = hat[i] * Complex64::new(0.0, dm);
    }
    inv.process(&mut hat);
    inv.process(&mut d);
    let s = 1.0 / n as f64;
    (hat.iter().map(|c| c.re * s).collect(), d.iter().map(|c| c.re * s).collect())
}

struct Frame {
    a: Vec<f64>,
    b: Vec<f64>,
    kappa: Vec<f64>,
    vel: Vec<[f64; 2]>,
}

fn frame(r: &[[f64; 2]], labels: &[f64], h: f64, len0: f64, t: f64, law: &FlowLaw) -> Frame {
    let kappa = discrete_curvature(r);
    let (a, b): (Vec<f64>, Vec<f64>) = match law {
        FlowLaw::Prescribed(f) => labels.iter().map(|&s| f(s, t)).unzip(),
        FlowLaw::Mch(u) => labels
            .iter()
            .map(|&s| {
                let (u, us) = u(s, t);
                (-(u * u - us * us) - 2.0, -2.0 * us)
            })
            .unzip(),
        FlowLaw::MchSelfConsistent => {
            let (u, us) = helmholtz_periodic(&kappa, len0);
            u.iter().zip(&us).map(|(&u, &us)| (-(u * u - us * us) - 2.0, -2.0 * us)).unzip()
        }
        FlowLaw::Mkdv => {
            let ks = centered_diff(&kappa, h);
            (kappa.iter().map(|k| 0.5 * k * k).collect(), ks)
        }
    };
    let tau = tangents(r);
    let vel = (0..r.len())
        .map(|i| {
            let (t, n) = (tau[i], [-tau[i][1], tau[i][0]]);
            [a[i] * t[0] + b[i] * n[0], a[i] * t[1] + b[i] * n[1]]
        })
        .collect();
    Frame { a, b, kappa, vel }
}

fn segments_cross(p: [f64; 2], q: [f64; 2], r: [f64; 2], s: [f64; 2]) -> bool {
    let o = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    let d1 = o(p, q, r);
    let d2 = o(p, q, s);
    let d3 = o(r, s, p);
    let d4 = o(r, s, q);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// First pair of non-adjacent crossing segments, if any.
pub fn self_intersection(r: &[[f64; 2]]) -> Option<(usize, usize)> {
    let n = r.len();
    for i in 0..n {
        let (p, q) = (r[i], r[(i + 1) % n]);
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_cross(p, q, r[j], r[(j + 1) % n]) {
                return Some((i, j));
            }
        }
    }
    None
}

/// Evolves a closed polyline under `law`. Vertex labels are Lagrangian
/// coordinates, identified with the initial arclength; they must be
/// uniformly spaced (the closing duplicate vertex, if present, is dropped).
pub fn evolve_closed_curve(
    poly: &PlanarPolyline,
    law: &FlowLaw,
    dt: f64,
    n_steps: usize,
    stepper: Stepper,
) -> Result<CurveTrajectory, CurveError> {
    let mut r = poly.vertices.clone();
    let mut labels = poly.s.clone();
    if r.len() > 1 && poly.gap() <= 1e-6 * poly.length().max(1.0) {
        r.pop();
        labels.pop();
    }
    let n = r.len();
    if n < 8 {
        return Err(CurveError::Invalid(format!("{n} vertices")));
    }
    let len0 = poly.length();
    let h = len0 / n as f64;
    for (i, w) in labels.windows(2).enumerate() {
        if ((w[1] - w[0]) - h).abs() > 1e-8 * h {
            return Err(CurveError::Invalid(format!("non-uniform label spacing at vertex {i}")));
        }
    }
    let l0 = polygon_length(&r);
    let a0 = signed_area(&r);
    let mut frames = vec![r.clone()];
    let mut diags = vec![StepDiagnostics {
        step: 0,
        t: 0.0,
        length: l0,
        area: a0,
        length_drift: 0.0,
        area_drift: 0.0,
        predicted_area_drift: 0.0,
        curvature_residual: 0.0,
    }];
    let mut pred = 0.0;
    let mut last_a = vec![];
    let b_flux = |r: &[[f64; 2]], b: &[f64]| -> f64 {
        // ∮ b ds with the dual-cell length at each vertex
        let n = r.len();
        (0..n)
            .map(|i| {
                let p = r[(i + n - 1) % n];
                let q = r[i];
                let s = r[(i + 1) % n];
                0.5 * ((q[0] - p[0]).hypot(q[1] - p[1]) + (s[0] - q[0]).hypot(s[1] - q[1])) * b[i]
            })
            .sum()
    };
    for step in 1..=n_steps {
        let t = (step - 1) as f64 * dt;
        let f0 = frame(&r, &labels, h, len0, t, law);
        let new: Vec<[f64; 2]> = match stepper {
            Stepper::Euler => {
                pred -= dt * b_flux(&r, &f0.b);
                (0..n).map(|i| [r[i][0] + dt * f0.vel[i][0], r[i][1] + dt * f0.vel[i][1]]).collect()
            }
            Stepper::Rk4 => {
                let shift = |base: &[[f64; 2]], v: &[[f64; 2]], c: f64| -> Vec<[f64; 2]> {
                    base.iter().zip(v).map(|(p, q)| [p[0] + c * q[0], p[1] + c * q[1]]).collect()
                };
                let r2 = shift(&r, &f0.vel, 0.5 * dt);
                let f1 = frame(&r2, &labels, h, len0, t + 0.5 * dt, law);
                let r3 = shift(&r, &f1.vel, 0.5 * dt);
                let f2 = frame(&r3, &labels, h, len0, t + 0.5 * dt, law);
                let r4 = shift(&r, &f2.vel, dt);
                let f3 = frame(&r4, &labels, h, len0, t + dt, law);
                pred -= dt / 6.0
                    * (b_flux(&r, &f0.b) + 2.0 * b_flux(&r2, &f1.b) + 2.0 * b_flux(&r3, &f2.b) + b_flux(&r4, &f3.b));
                (0..n)
                    .map(|i| {
                        let mut p = r[i];
                        for d in 0..2 {
                            p[d] += dt / 6.0 * (f0.vel[i][d] + 2.0 * f1.vel[i][d] + 2.0 * f2.vel[i][d] + f3.vel[i][d]);
                        }
                        p
                    })
                    .collect()
            }
        };
        if let Some((i, j)) = self_intersection(&new) {
            return Err(CurveError::SelfIntersection { step, i, j });
        }
        // κ_t against b_ss + (κa)_s at the old frame
        let k_new = discrete_curvature(&new);
        let bss = second_diff(&f0.b, h);
        let ka: Vec<f64> = f0.kappa.iter().zip(&f0.a).map(|(k, a)| k * a).collect();
        let ka_s = centered_diff(&ka, h);
        let resid = (0..n)
            .map(|i| ((k_new[i] - f0.kappa[i]) / dt - bss[i] - ka_s[i]).abs())
            .fold(0.0, f64::max);
        r = new;
        let l = polygon_length(&r);
        let a = signed_area(&r);
        diags.push(StepDiagnostics {
            step,
            t: step as f64 * dt,
            length: l,
            area: a,
            length_drift: (l - l0) / l0,
            area_drift: a - a0,
            predicted_area_drift: pred,
            curvature_residual: resid,
        });
        frames.push(r.clone());
        last_a = f0.a;
    }
    Ok(CurveTrajectory {
        labels,
        frames,
        diagnostics: diags,
        a_final: last_a,
    })
}

/// `E = ∫ (χ - 1)/a dξ` with `χ = |r_ξ|` per segment and `a` averaged to
/// segment midpoints. `xi` are the reference labels; for a closed curve the
/// last segment wraps with reference length `xi_period - xi[n-1] + xi[0]`.
pub fn elastic_energy(vertices: &[[f64; 2]], xi: &[f64], a: &[f64], xi_period: Option<f64>) -> Result<f64, CurveError> {
    let n = vertices.len();
    if xi.len() != n || a.len() != n || n < 2 {
        return Err(CurveError::Invalid("vertices, labels and a differ in length".into()));
    }
    if let Some((i, v)) = a.iter().enumerate().find(|(_, v)| v.abs() < 1e-12) {
        return Err(CurveError::Division { index: i, a: *v });
    }
    let segs = if xi_period.is_some() { n } else { n - 1 };
    let mut e = 0.0;
    for i in 0..segs {
        let j = (i + 1) % n;
        let dxi = if j == 0 { xi_period.unwrap() - xi[i] + xi[0] } else { xi[j] - xi[i] };
        let (p, q) = (vertices[i], vertices[j]);
        let chi = (q[0] - p[0]).hypot(q[1] - p[1]) / dxi;
        e += (chi - 1.0) / (0.5 * (a[i] + a[j])) * dxi;
    }
    Ok(e)
}
