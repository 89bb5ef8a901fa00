//! Scalar root finding.
//!
//! Bracketed bisection with a safeguarded secant step, a uniform bracket
//! scanner, and real roots (with multiplicity) of low-degree polynomials.

const MAX_ITER: usize = 200;

/// Refines a sign-change bracket of `f` to (close to) machine precision.
///
/// Each iteration tries a secant step; when the bracket failed to halve on
/// the previous iteration a bisection step is forced instead, so the worst
/// case is plain bisection.
pub fn refine_bracket<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let (mut a, mut b) = if a <= b { (a, b) } else { (b, a) };
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return a;
    }
    if fb == 0.0 {
        return b;
    }
    let mut force_bisect = false;
    for _ in 0..MAX_ITER {
        let width = b - a;
        let mid = a + 0.5 * width;
        if mid <= a || mid >= b {
            break;
        }
        let mut x = if force_bisect {
            mid
        } else {
            b - fb * (b - a) / (fb - fa)
        };
        if !(x > a && x < b) {
            x = mid;
        }
        let fx = f(x);
        if fx == 0.0 {
            return x;
        }
        if (fx < 0.0) == (fa < 0.0) {
            a = x;
            fa = fx;
        } else {
            b = x;
            fb = fx;
        }
        force_bisect = (b - a) > 0.5 * width;
    }
    if fa.abs() <= fb.abs() {
        a
    } else {
        b
    }
}

/// Finds sign changes of `f` on `[a, b]` sampled at `n` uniform cells and
/// refines each one. Exact zeros at sample points are reported once.
pub fn scan_roots<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> Vec<f64> {
    let n = n.max(1);
    let mut roots: Vec<f64> = Vec::new();
    let mut x0 = a;
    let mut f0 = f(a);
    if f0 == 0.0 {
        roots.push(a);
    }
    for i in 1..=n {
        let x1 = if i == n {
            b
        } else {
            a + (b - a) * (i as f64) / (n as f64)
        };
        let f1 = f(x1);
        if f1 == 0.0 {
            roots.push(x1);
        } else if f0 != 0.0 && (f0 < 0.0) != (f1 < 0.0) && f0.is_finite() && f1.is_finite() {
            roots.push(refine_bracket(&f, x0, x1));
        }
        x0 = x1;
        f0 = f1;
    }
    roots
}

/// Evaluates a polynomial with coefficients in increasing degree order.
pub fn poly_eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

fn poly_abs_scale(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x.abs() + ci.abs())
}

fn poly_derivative(c: &[f64]) -> Vec<f64> {
    c.iter()
        .enumerate()
        .skip(1)
        .map(|(i, &ci)| ci * i as f64)
        .collect()
}

/// A real polynomial root together with its detected multiplicity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolyRoot {
    pub x: f64,
    pub multiplicity: usize,
}

/// Relative threshold below which a critical value counts as a multiple root.
const MULTIPLE_ROOT_TOL: f64 = 1e-12;

/// All real roots of the polynomial `c[0] + c[1] x + ...`, sorted.
///
/// Monotone pieces between critical points are bracketed and refined;
/// a critical point where the polynomial vanishes to relative round-off is
/// reported as a multiple root instead of being split into a fake pair.
pub fn poly_real_roots(c: &[f64]) -> Vec<PolyRoot> {
    let mut c: Vec<f64> = c.to_vec();
    while c.len() > 1 && *c.last().unwrap() == 0.0 {
        c.pop();
    }
    let deg = c.len() - 1;
    if deg == 0 {
        return Vec::new();
    }
    if deg == 1 {
        return vec![PolyRoot {
            x: -c[0] / c[1],
            multiplicity: 1,
        }];
    }
    let lead = c[deg];
    let bound = 1.0 + c[..deg].iter().map(|ci| (ci / lead).abs()).fold(0.0, f64::max);
    let crit = poly_real_roots(&poly_derivative(&c));

    let mut roots: Vec<PolyRoot> = Vec::new();
    let mut multiple: Vec<bool> = Vec::with_capacity(crit.len());
    for r in &crit {
        let val = poly_eval(&c, r.x);
        let is_root = val.abs() <= MULTIPLE_ROOT_TOL * poly_abs_scale(&c, r.x).max(f64::MIN_POSITIVE);
        multiple.push(is_root);
        if is_root {
            roots.push(PolyRoot {
                x: r.x,
                multiplicity: r.multiplicity + 1,
            });
        }
    }

    let mut knots: Vec<(f64, bool)> = Vec::with_capacity(crit.len() + 2);
    knots.push((-bound, false));
    for (r, &m) in crit.iter().zip(&multiple) {
        if r.x > -bound && r.x < bound {
            knots.push((r.x, m));
        }
    }
    knots.push((bound, false));
    for w in knots.windows(2) {
        let (p, pm) = w[0];
        let (q, qm) = w[1];
        if pm || qm {
            continue;
        }
        let fp = poly_eval(&c, p);
        let fq = poly_eval(&c, q);
        if fp == 0.0 {
            if !roots.iter().any(|r| r.x == p) {
                roots.push(PolyRoot { x: p, multiplicity: 1 });
            }
        } else if (fp < 0.0) != (fq < 0.0) {
            let x = refine_bracket(|x| poly_eval(&c, x), p, q);
            roots.push(PolyRoot { x, multiplicity: 1 });
        }
    }
    roots.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap());
    roots.dedup_by(|a, b| a.x == b.x);
    roots
}
