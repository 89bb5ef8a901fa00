//! Phase-plane geometry of the traveling-wave system
//!
//! ```text
//! φ' = v,   v' = (g - 2kφ) / (c - φ² + v²) + φ
//! ```
//!
//! and its first integral
//! `H(φ, v) = (φ² - v²)²/4 - c(φ² - v²)/2 + kφ² - gφ`.
//!
//! Level sets `H = h` split into two explicit branches
//! `v² = φ² - c ± √(c² - 4(kφ² - gφ - h))`; the `+` branch lies in
//! `φ² - v² ≤ c` and the `-` branch in `φ² - v² ≥ c`. The two meet on the
//! jump hyperbola `φ² - v² = c`, where the traveling-wave system degenerates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::roots::{poly_real_roots, PolyRoot};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhaseError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("φ = {phi} is outside the domain of the {sign:?} branch at level h = {h} (radicand {radicand:e})")]
    Domain {
        phi: f64,
        h: f64,
        sign: Branch,
        radicand: f64,
    },
    #[error("arc passes through ({phi0}, 0) on the jump hyperbola, where the profile is undefined")]
    ThroughJumpAxisPoint { phi0: f64 },
    #[error("empty or inverted φ-interval [{lo}, {hi}]")]
    EmptyInterval { lo: f64, hi: f64 },
}

/// Scalars of one problem instance. `ell = f64::INFINITY` is the whole line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub k: f64,
    pub c: f64,
    pub g: f64,
    pub ell: f64,
}

impl ModelParams {
    pub fn new(k: f64, c: f64, g: f64, ell: f64) -> Result<Self, PhaseError> {
        if !(k.is_finite() && c.is_finite() && g.is_finite()) {
            return Err(PhaseError::InvalidParams(format!(
                "k, c, g must be finite (got {k}, {c}, {g})"
            )));
        }
        if ell.is_nan() || ell <= 0.0 {
            return Err(PhaseError::InvalidParams(format!(
                "ell must be positive or infinite (got {ell})"
            )));
        }
        Ok(Self { k, c, g, ell })
    }

    /// Whole-line instance.
    pub fn line(k: f64, c: f64, g: f64) -> Self {
        Self {
            k,
            c,
            g,
            ell: f64::INFINITY,
        }
    }

    /// Canonical form with `g ≥ 0`; the flag is set when `φ ↦ -φ` was applied.
    pub fn normalized(&self) -> (Self, bool) {
        if self.g < 0.0 {
            (Self { g: -self.g, ..*self }, true)
        } else {
            (*self, false)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub phi: f64,
    pub v: f64,
}

impl PhasePoint {
    pub fn new(phi: f64, v: f64) -> Self {
        Self { phi, v }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CriticalKind {
    Center,
    Saddle,
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub location: PhasePoint,
    pub kind: CriticalKind,
    /// True for the off-axis pair on `φ² - v² = c`.
    pub on_c_hyperbola: bool,
    /// `H_φv² - H_φφ H_vv` at the point.
    pub discriminant: f64,
}

/// Which of the two explicit level-set branches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }

    pub fn other(self) -> Self {
        match self {
            Branch::Plus => Branch::Minus,
            Branch::Minus => Branch::Plus,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Branch::Plus => "plus",
            Branch::Minus => "minus",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HalfPlane {
    Upper,
    Lower,
}

impl HalfPlane {
    pub fn sign(self) -> f64 {
        match self {
            HalfPlane::Upper => 1.0,
            HalfPlane::Lower => -1.0,
        }
    }

    pub fn other(self) -> Self {
        match self {
            HalfPlane::Upper => HalfPlane::Lower,
            HalfPlane::Lower => HalfPlane::Upper,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    IncreasingPhi,
    DecreasingPhi,
}

impl Orientation {
    pub fn reversed(self) -> Self {
        match self {
            Orientation::IncreasingPhi => Orientation::DecreasingPhi,
            Orientation::DecreasingPhi => Orientation::IncreasingPhi,
        }
    }
}

/// Closed interval; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }
}

/// The two reference hyperbolas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hyperbola {
    /// `φ² - v² = c`
    Jump,
    /// `φ² - v²/3 = c`
    Patch,
}

/// An intersection of a branch with a hyperbola.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperbolaHit {
    pub point: PhasePoint,
    /// 1 for a transversal crossing, 2 or more for a tangency.
    pub multiplicity: usize,
}

pub fn hamiltonian(p: &ModelParams, pt: PhasePoint) -> f64 {
    let w = pt.phi * pt.phi - pt.v * pt.v;
    0.25 * w * w - 0.5 * p.c * w + p.k * pt.phi * pt.phi - p.g * pt.phi
}

/// `(∂H/∂φ, ∂H/∂v)`.
pub fn gradient(p: &ModelParams, pt: PhasePoint) -> (f64, f64) {
    let w = pt.phi * pt.phi - pt.v * pt.v;
    (
        pt.phi * w - p.c * pt.phi + 2.0 * p.k * pt.phi - p.g,
        -pt.v * w + p.c * pt.v,
    )
}

/// `[[H_φφ, H_φv], [H_φv, H_vv]]`.
pub fn hessian(p: &ModelParams, pt: PhasePoint) -> [[f64; 2]; 2] {
    let (f, v) = (pt.phi, pt.v);
    let hpp = 3.0 * f * f - v * v - p.c + 2.0 * p.k;
    let hvv = 3.0 * v * v - f * f + p.c;
    let hpv = -2.0 * f * v;
    [[hpp, hpv], [hpv, hvv]]
}

/// `H_φv² - H_φφ H_vv`.
pub fn discriminant(p: &ModelParams, pt: PhasePoint) -> f64 {
    let h = hessian(p, pt);
    h[0][1] * h[0][1] - h[0][0] * h[1][1]
}

/// Degeneracy band `|D| ≤ tol (1 + ‖Hess‖²)`.
pub const DEGENERACY_TOL: f64 = 1e-9;

pub fn classify_point(p: &ModelParams, pt: PhasePoint) -> (CriticalKind, f64) {
    let h = hessian(p, pt);
    let d = h[0][1] * h[0][1] - h[0][0] * h[1][1];
    let norm2 = h[0][0] * h[0][0] + 2.0 * h[0][1] * h[0][1] + h[1][1] * h[1][1];
    let kind = if d.abs() <= DEGENERACY_TOL * (1.0 + norm2) {
        CriticalKind::Degenerate
    } else if d > 0.0 {
        CriticalKind::Saddle
    } else {
        CriticalKind::Center
    };
    (kind, d)
}

/// Vector field of the traveling-wave system in ξ: `(φ', v')`.
pub fn xi_field(p: &ModelParams, pt: PhasePoint) -> (f64, f64) {
    let den = p.c - pt.phi * pt.phi + pt.v * pt.v;
    (pt.v, (p.g - 2.0 * p.k * pt.phi) / den + pt.phi)
}

/// Rescaled smooth Hamiltonian field `(dφ/dτ, dv/dτ)` with
/// `dξ = (c - φ² + v²) dτ`.
pub fn tau_field(p: &ModelParams, pt: PhasePoint) -> (f64, f64) {
    let (f, v) = (pt.phi, pt.v);
    let den = p.c - f * f + v * v;
    (v * den, p.g - 2.0 * p.k * f - f * (f * f - v * v - p.c))
}

/// Cubic `φ³ + (2k - c)φ - g` whose roots are the on-axis critical points.
fn axis_cubic(p: &ModelParams) -> [f64; 4] {
    [-p.g, 2.0 * p.k - p.c, 0.0, 1.0]
}

/// All critical points of `H`, sorted by `(φ, v)`.
pub fn classify_critical_points(p: &ModelParams) -> Vec<CriticalPoint> {
    let mut out = Vec::new();
    let cubic = axis_cubic(p);
    for r in poly_real_roots(&cubic) {
        let mut x = r.x;
        if r.multiplicity == 1 {
            for _ in 0..3 {
                let f = ((x * x) + cubic[1]) * x + cubic[0];
                let d = 3.0 * x * x + cubic[1];
                if d == 0.0 {
                    break;
                }
                let nx = x - f / d;
                if !nx.is_finite() {
                    break;
                }
                x = nx;
            }
        }
        let loc = PhasePoint::new(x, 0.0);
        let (kind, d) = classify_point(p, loc);
        out.push(CriticalPoint {
            location: loc,
            kind,
            on_c_hyperbola: false,
            discriminant: d,
        });
    }
    if p.k != 0.0 && p.g * p.g - 4.0 * p.k * p.k * p.c > 0.0 {
        let phi = p.g / (2.0 * p.k);
        let v = (phi * phi - p.c).sqrt();
        for vv in [-v, v] {
            let loc = PhasePoint::new(phi, vv);
            let (kind, d) = classify_point(p, loc);
            out.push(CriticalPoint {
                location: loc,
                kind,
                on_c_hyperbola: true,
                discriminant: d,
            });
        }
    }
    out.sort_by(|a, b| {
        (a.location.phi, a.location.v)
            .partial_cmp(&(b.location.phi, b.location.v))
            .unwrap()
    });
    out
}

/// `c² - 4(kφ² - gφ - h)`.
pub fn outer_radicand(p: &ModelParams, h: f64, phi: f64) -> f64 {
    p.c * p.c - 4.0 * (p.k * phi * phi - p.g * phi - h)
}

fn outer_scale(p: &ModelParams, h: f64, phi: f64) -> f64 {
    p.c * p.c + 4.0 * (p.k.abs() * phi * phi + p.g.abs() * phi.abs() + h.abs())
}

const DOMAIN_TOL: f64 = 1e-12;

/// `v²` on the selected branch at `φ`.
pub fn branch_value(p: &ModelParams, h: f64, sign: Branch, phi: f64) -> Result<f64, PhaseError> {
    let r = outer_radicand(p, h, phi);
    let rs = outer_scale(p, h, phi);
    if r < -DOMAIN_TOL * rs {
        return Err(PhaseError::Domain {
            phi,
            h,
            sign,
            radicand: r,
        });
    }
    let s = r.max(0.0).sqrt();
    let val = phi * phi - p.c + sign.sign() * s;
    let vs = phi * phi + p.c.abs() + s;
    if val < -DOMAIN_TOL * vs.max(1.0) {
        return Err(PhaseError::Domain {
            phi,
            h,
            sign,
            radicand: val,
        });
    }
    Ok(val.max(0.0))
}

/// Unchecked branch radicand (may be negative or NaN outside the domain).
pub fn branch_radicand(p: &ModelParams, h: f64, sign: Branch, phi: f64) -> f64 {
    let r = outer_radicand(p, h, phi);
    phi * phi - p.c + sign.sign() * r.max(0.0).sqrt()
}

fn in_branch(p: &ModelParams, h: f64, sign: Branch, phi: f64) -> bool {
    outer_radicand(p, h, phi) >= 0.0 && branch_radicand(p, h, sign, phi) >= 0.0
}

/// Roots of `c² - 4(kφ² - gφ - h) = 0`: where the branches meet on the jump
/// hyperbola.
pub fn outer_radicand_roots(p: &ModelParams, h: f64) -> Vec<PolyRoot> {
    poly_real_roots(&[p.c * p.c + 4.0 * h, 4.0 * p.g, -4.0 * p.k])
}

/// Roots of `H(φ, 0) = h`, i.e. `φ⁴ + (4k - 2c)φ² - 4gφ - 4h = 0`.
pub fn axis_crossings(p: &ModelParams, h: f64) -> Vec<PolyRoot> {
    poly_real_roots(&[-4.0 * h, -4.0 * p.g, 4.0 * p.k - 2.0 * p.c, 0.0, 1.0])
}

/// Maximal closed φ-intervals on which the branch is defined.
///
/// Breakpoints are the roots of the outer radicand and of `H(φ, 0) - h`, so
/// the result is exact up to polynomial root accuracy. Isolated points
/// (e.g. `h` equal to a center value) are omitted.
pub fn branch_domain(p: &ModelParams, h: f64, sign: Branch) -> Vec<Interval> {
    let mut knots: Vec<f64> = outer_radicand_roots(p, h)
        .into_iter()
        .chain(axis_crossings(p, h))
        .map(|r| r.x)
        .collect();
    knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    knots.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * (1.0 + a.abs()));

    if knots.is_empty() {
        return if in_branch(p, h, sign, 0.0) {
            vec![Interval::new(f64::NEG_INFINITY, f64::INFINITY)]
        } else {
            Vec::new()
        };
    }
    let n = knots.len();
    let mut pieces: Vec<(f64, f64, bool)> = Vec::with_capacity(n + 1);
    let probe_left = knots[0] - (1.0 + knots[0].abs());
    pieces.push((
        f64::NEG_INFINITY,
        knots[0],
        in_branch(p, h, sign, probe_left),
    ));
    for w in knots.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        pieces.push((w[0], w[1], in_branch(p, h, sign, mid)));
    }
    let probe_right = knots[n - 1] + (1.0 + knots[n - 1].abs());
    pieces.push((
        knots[n - 1],
        f64::INFINITY,
        in_branch(p, h, sign, probe_right),
    ));

    let mut out: Vec<Interval> = Vec::new();
    let mut cur: Option<Interval> = None;
    for (lo, hi, member) in pieces {
        if member {
            cur = Some(match cur {
                Some(iv) if iv.hi == lo => Interval::new(iv.lo, hi),
                Some(iv) => {
                    out.push(iv);
                    Interval::new(lo, hi)
                }
                None => Interval::new(lo, hi),
            });
        } else if let Some(iv) = cur.take() {
            out.push(iv);
        }
    }
    if let Some(iv) = cur {
        out.push(iv);
    }
    out
}

/// Intersections of a branch with one of the reference hyperbolas, sorted by
/// `(φ, v)`. Points with `v ≠ 0` are reported for both half planes.
pub fn intersect_hyperbola(p: &ModelParams, h: f64, sign: Branch, which: Hyperbola) -> Vec<HyperbolaHit> {
    let mut out = Vec::new();
    match which {
        Hyperbola::Jump => {
            for r in outer_radicand_roots(p, h) {
                let v2 = r.x * r.x - p.c;
                if v2 < -DOMAIN_TOL * (1.0 + p.c.abs()) {
                    continue;
                }
                push_pair(&mut out, r.x, v2.max(0.0).sqrt(), r.multiplicity);
            }
        }
        Hyperbola::Patch => {
            // 4(φ² - c)² = c² - 4(kφ² - gφ - h)
            let quartic = [
                3.0 * p.c * p.c - 4.0 * h,
                -4.0 * p.g,
                4.0 * p.k - 8.0 * p.c,
                0.0,
                4.0,
            ];
            for r in poly_real_roots(&quartic) {
                let d = r.x * r.x - p.c;
                let tol = DOMAIN_TOL * (1.0 + p.c.abs() + r.x * r.x);
                let ok = match sign {
                    Branch::Plus => d >= -tol,
                    Branch::Minus => d.abs() <= tol,
                };
                if ok {
                    push_pair(&mut out, r.x, (3.0 * d.max(0.0)).sqrt(), r.multiplicity);
                }
            }
        }
    }
    out.sort_by(|a, b| {
        (a.point.phi, a.point.v)
            .partial_cmp(&(b.point.phi, b.point.v))
            .unwrap()
    });
    out
}

fn push_pair(out: &mut Vec<HyperbolaHit>, phi: f64, v: f64, multiplicity: usize) {
    if v == 0.0 {
        out.push(HyperbolaHit {
            point: PhasePoint::new(phi, 0.0),
            multiplicity,
        });
    } else {
        for vv in [-v, v] {
            out.push(HyperbolaHit {
                point: PhasePoint::new(phi, vv),
                multiplicity,
            });
        }
    }
}

/// One branch-restricted arc of a level set.
///
/// `orientation` is the direction of the rescaled Hamiltonian flow along the
/// arc, which is fixed by the branch and half plane (see [`flow_orientation`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelArc {
    pub params: ModelParams,
    pub h: f64,
    pub sign: Branch,
    pub phi_interval: Interval,
    pub half_plane: HalfPlane,
    pub orientation: Orientation,
}

/// Flow direction in φ of the rescaled system on a branch/half-plane pair:
/// `dφ/dτ = v (c - φ² + v²)` and `c - φ² + v² = ±√(…)` on `Γ±`.
pub fn flow_orientation(sign: Branch, half: HalfPlane) -> Orientation {
    if sign.sign() * half.sign() > 0.0 {
        Orientation::IncreasingPhi
    } else {
        Orientation::DecreasingPhi
    }
}

impl LevelArc {
    /// Validated arc following the flow orientation.
    pub fn new(
        params: ModelParams,
        h: f64,
        sign: Branch,
        phi_interval: Interval,
        half_plane: HalfPlane,
    ) -> Result<Self, PhaseError> {
        let iv = phi_interval;
        if !(iv.lo < iv.hi) {
            return Err(PhaseError::EmptyInterval { lo: iv.lo, hi: iv.hi });
        }
        for x in [iv.lo, iv.hi] {
            if x.is_finite() {
                branch_value(&params, h, sign, x)?;
            }
        }
        let mid = if iv.is_bounded() {
            0.5 * (iv.lo + iv.hi)
        } else if iv.lo.is_finite() {
            iv.lo + 1.0
        } else if iv.hi.is_finite() {
            iv.hi - 1.0
        } else {
            0.0
        };
        branch_value(&params, h, sign, mid)?;
        if params.c >= 0.0 {
            let r = params.c.sqrt();
            for phi0 in [-r, r] {
                if iv.contains(phi0) {
                    if let Ok(v2) = branch_value(&params, h, sign, phi0) {
                        if v2 <= 1e-12 * (1.0 + params.c.abs()) {
                            return Err(PhaseError::ThroughJumpAxisPoint { phi0 });
                        }
                    }
                }
            }
        }
        Ok(Self {
            params,
            h,
            sign,
            phi_interval: iv,
            half_plane,
            orientation: flow_orientation(sign, half_plane),
        })
    }

    /// Signed `v` on the arc at `φ`.
    pub fn v_at(&self, phi: f64) -> f64 {
        let v2 = branch_radicand(&self.params, self.h, self.sign, phi).max(0.0);
        self.half_plane.sign() * v2.sqrt()
    }

    pub fn point_at(&self, phi: f64) -> PhasePoint {
        PhasePoint::new(phi, self.v_at(phi))
    }

    /// Start and end φ in flow order.
    pub fn flow_endpoints(&self) -> (f64, f64) {
        match self.orientation {
            Orientation::IncreasingPhi => (self.phi_interval.lo, self.phi_interval.hi),
            Orientation::DecreasingPhi => (self.phi_interval.hi, self.phi_interval.lo),
        }
    }
}

/// One sampled point of a level set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelSample {
    pub phi: f64,
    pub v: f64,
    pub h: f64,
    pub sign: Branch,
}

/// Samples both branches of `H = h` on `|φ| ≤ phi_max`, `n` points per
/// domain interval and half plane. Truncation applies to sampling only.
pub fn sample_level_set(p: &ModelParams, h: f64, n: usize, phi_max: f64) -> Vec<LevelSample> {
    let n = n.max(2);
    let mut out = Vec::new();
    for sign in [Branch::Plus, Branch::Minus] {
        for iv in branch_domain(p, h, sign) {
            let lo = iv.lo.max(-phi_max);
            let hi = iv.hi.min(phi_max);
            if !(lo < hi) {
                continue;
            }
            for half in [HalfPlane::Upper, HalfPlane::Lower] {
                for i in 0..n {
                    // cosine spacing resolves the square-root ends
                    let t = 0.5 - 0.5 * (std::f64::consts::PI * i as f64 / (n - 1) as f64).cos();
                    let phi = lo + (hi - lo) * t;
                    let v2 = branch_radicand(p, h, sign, phi).max(0.0);
                    out.push(LevelSample {
                        phi,
                        v: half.sign() * v2.sqrt(),
                        h,
                        sign,
                    });
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pp(k: f64, c: f64, g: f64) -> ModelParams {
        ModelParams::line(k, c, g)
    }

    #[test]
    fn hamiltonian_examples() {
        assert_eq!(hamiltonian(&pp(0.0, 2.0, 0.0), PhasePoint::new(0.0, 0.0)), 0.0);
        assert_eq!(hamiltonian(&pp(1.0, 0.0, 2.0), PhasePoint::new(1.0, 1.0)), -1.0);
        assert_eq!(hamiltonian(&pp(1.0, 2.0, 2.0), PhasePoint::new(1.0, 1.0)), -1.0);
    }

    #[test]
    fn hyperbola_critical_value() {
        // H at (g/2k, ±√(g²/4k² - c)) equals -c²/4 - g²/(4k)
        let p = pp(0.7, -1.3, 2.1);
        let cps = classify_critical_points(&p);
        let hyp: Vec<_> = cps.iter().filter(|c| c.on_c_hyperbola).collect();
        assert_eq!(hyp.len(), 2);
        for cp in hyp {
            let h = hamiltonian(&p, cp.location);
            let want = -p.c * p.c / 4.0 - p.g * p.g / (4.0 * p.k);
            assert!((h - want).abs() < 1e-12);
        }
    }

    #[test]
    fn classify_k0_saddle() {
        let cps = classify_critical_points(&pp(0.0, 2.0, 0.0));
        let origin = cps.iter().find(|c| c.location.phi == 0.0).unwrap();
        assert_eq!(origin.kind, CriticalKind::Saddle);
        // the remaining axis roots ±√c sit on the jump hyperbola, where
        // D = (3φ² + 2k - c)(φ² - c) vanishes
        assert_eq!(cps.len(), 3);
        for cp in cps.iter().filter(|c| c.location.phi != 0.0) {
            assert!((cp.location.phi.abs() - 2f64.sqrt()).abs() < 1e-14);
            assert_eq!(cp.kind, CriticalKind::Degenerate);
        }
    }

    #[test]
    fn classify_k1_c4() {
        let cps = classify_critical_points(&pp(1.0, 4.0, 0.0));
        assert_eq!(cps.len(), 3);
        assert!(cps.iter().all(|c| !c.on_c_hyperbola));
        let s2 = 2f64.sqrt();
        assert!((cps[0].location.phi + s2).abs() < 1e-14);
        assert_eq!(cps[0].kind, CriticalKind::Center);
        assert_eq!(cps[1].location.phi, 0.0);
        assert_eq!(cps[1].kind, CriticalKind::Saddle);
        assert!((cps[2].location.phi - s2).abs() < 1e-14);
        assert_eq!(cps[2].kind, CriticalKind::Center);
    }

    #[test]
    fn classify_kneg_saddles() {
        let cps = classify_critical_points(&pp(-1.0, 2.0, 0.0));
        let phis: Vec<f64> = cps.iter().map(|c| c.location.phi).collect();
        assert_eq!(cps.len(), 3);
        assert!((phis[0] + 2.0).abs() < 1e-14 && phis[1] == 0.0 && (phis[2] - 2.0).abs() < 1e-14);
        assert!(cps.iter().all(|c| c.kind == CriticalKind::Saddle));
    }

    #[test]
    fn degenerate_reported() {
        // k = -1, c = ... with g chosen so that (-1, 0) is a double root of the
        // axis cubic: φ³ + (2k - c)φ - g with a double root at -1 needs
        // 3 + 2k - c = 0 and -1 - (2k - c) - g = 0.
        let k = -1.0;
        let c = 3.0 + 2.0 * k;
        let g = -1.0 - (2.0 * k - c);
        let cps = classify_critical_points(&pp(k, c, g));
        let at = cps
            .iter()
            .find(|cp| (cp.location.phi + 1.0).abs() < 1e-6)
            .unwrap();
        assert_eq!(at.kind, CriticalKind::Degenerate);
    }

    #[test]
    fn branch_values() {
        let p = pp(0.0, 2.0, 0.0);
        let s3 = 3f64.sqrt();
        assert!((branch_value(&p, 0.0, Branch::Plus, s3).unwrap() - 3.0).abs() < 1e-14);
        assert!(matches!(
            branch_value(&p, 0.0, Branch::Minus, s3),
            Err(PhaseError::Domain { .. })
        ));
    }

    #[test]
    fn branch_value_at_domain_ends() {
        // where the outer radicand vanishes the branches meet at v² = φ² - c
        // (the square root amplifies round-off in the radicand)
        let p = pp(1.0, 2.0, 2.0);
        let h = 4.0;
        let end = (2.0 + 24f64.sqrt()) / 2.0;
        let v2 = branch_value(&p, h, Branch::Plus, end).unwrap();
        assert!((v2 - (end * end - 2.0)).abs() < 1e-6);
        // at a v = 0 crossing the branch value vanishes
        let p = pp(1.0, 2.0, 2.0);
        assert!(branch_value(&p, 0.0, Branch::Plus, 0.0).unwrap().abs() < 1e-15);
    }

    #[test]
    fn domain_k_negative_large_h_is_line() {
        let p = pp(-1.0, 2.0, 1.0);
        let d = branch_domain(&p, 10.0, Branch::Plus);
        assert_eq!(d, vec![Interval::new(f64::NEG_INFINITY, f64::INFINITY)]);
    }

    #[test]
    fn domain_k1_bounded() {
        let p = pp(1.0, 2.0, 2.0);
        let d = branch_domain(&p, 4.0, Branch::Plus);
        assert_eq!(d.len(), 1);
        let lo = (2.0 - 24f64.sqrt()) / 2.0;
        let hi = (2.0 + 24f64.sqrt()) / 2.0;
        assert!((d[0].lo - lo).abs() < 1e-14);
        assert!((d[0].hi - hi).abs() < 1e-14);
    }

    #[test]
    fn domain_empty_below_minimum() {
        let p = pp(1.0, 2.0, 2.0);
        assert!(branch_domain(&p, -100.0, Branch::Plus).is_empty());
        assert!(branch_domain(&p, -100.0, Branch::Minus).is_empty());
    }

    #[test]
    fn patch_intersections_k0() {
        let p = pp(0.0, 2.0, 0.0);
        let hits = intersect_hyperbola(&p, 0.0, Branch::Plus, Hyperbola::Patch);
        let s3 = 3f64.sqrt();
        let pos: Vec<_> = hits.iter().filter(|h| h.point.phi > 0.0).collect();
        assert_eq!(pos.len(), 2);
        assert!((pos[0].point.phi - s3).abs() < 1e-14);
        assert!((pos[0].point.v + s3).abs() < 1e-14);
        assert!((pos[1].point.v - s3).abs() < 1e-14);
    }

    #[test]
    fn patch_intersections_k1_above_threshold() {
        let p = pp(1.0, 2.0, 2.0);
        let h0 = 1.0 + 2.0 * 2f64.sqrt();
        for h in [h0 + 0.1, 10.0, 30.0] {
            let up: Vec<_> = intersect_hyperbola(&p, h, Branch::Plus, Hyperbola::Patch)
                .into_iter()
                .filter(|x| x.point.v > 0.0)
                .collect();
            assert_eq!(up.len(), 2, "h={h}");
            assert!(up[0].point.phi < up[1].point.phi);
        }
        assert!(intersect_hyperbola(&p, -50.0, Branch::Plus, Hyperbola::Patch).is_empty());
    }

    #[test]
    fn jump_intersections_are_branch_junctions() {
        let p = pp(1.0, 2.0, 2.0);
        let hits = intersect_hyperbola(&p, 0.0, Branch::Plus, Hyperbola::Jump);
        for hh in &hits {
            let w = hh.point.phi.powi(2) - hh.point.v.powi(2);
            assert!((w - 2.0).abs() < 1e-12);
            assert!(hamiltonian(&p, hh.point).abs() < 1e-12);
        }
        assert!(!hits.is_empty());
    }

    #[test]
    fn arc_rejects_jump_axis_point() {
        // k=1,g=2,c=2 at h = 1 + 2√2 the Plus branch touches (-√2, 0)
        let p = pp(1.0, 2.0, 2.0);
        let h = 1.0 + 2.0 * 2f64.sqrt();
        let s2 = 2f64.sqrt();
        let err = LevelArc::new(p, h, Branch::Plus, Interval::new(-s2, 1.0), HalfPlane::Upper);
        assert!(matches!(err, Err(PhaseError::ThroughJumpAxisPoint { .. })));
    }

    #[test]
    fn orientation_rules() {
        assert_eq!(flow_orientation(Branch::Plus, HalfPlane::Upper), Orientation::IncreasingPhi);
        assert_eq!(flow_orientation(Branch::Plus, HalfPlane::Lower), Orientation::DecreasingPhi);
        assert_eq!(flow_orientation(Branch::Minus, HalfPlane::Upper), Orientation::DecreasingPhi);
        assert_eq!(flow_orientation(Branch::Minus, HalfPlane::Lower), Orientation::IncreasingPhi);
    }

    #[test]
    fn normalization_flips_g() {
        let (n, f) = pp(1.0, 2.0, -3.0).normalized();
        assert!(f);
        assert_eq!(n.g, 3.0);
        let (n, f) = pp(1.0, 2.0, 3.0).normalized();
        assert!(!f);
        assert_eq!(n.g, 3.0);
    }

    #[test]
    fn invalid_ell_rejected() {
        assert!(ModelParams::new(0.0, 1.0, 0.0, 0.0).is_err());
        assert!(ModelParams::new(0.0, 1.0, 0.0, -1.0).is_err());
        assert!(ModelParams::new(0.0, 1.0, 0.0, f64::INFINITY).is_ok());
    }
}
