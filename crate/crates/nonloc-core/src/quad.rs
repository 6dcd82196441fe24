//! Deterministic one-dimensional quadrature built on Gauss-Legendre rules.
//!
//! Node tables are computed once per order with Newton iteration on the
//! Legendre recurrence and cached for the lifetime of the process, so every
//! caller sees bit-identical rules.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

fn rule_cache() -> &'static Mutex<HashMap<usize, &'static GaussRule>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, &'static GaussRule>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Nodes and weights of an `n`-point Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Legendre polynomial `P_n` and its derivative at `x`, by the three-term
/// recurrence.
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    // derivative from P_n and P_{n-1}
    let dp = (n as f64) * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

fn build_rule(n: usize) -> GaussRule {
    assert!(n >= 1, "quadrature order must be positive");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-style initial guess, then Newton.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_pair(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_pair(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
        let (_, dp) = legendre_pair(n, 0.0);
        weights[n / 2] = 2.0 / (dp * dp);
    }
    GaussRule { nodes, weights }
}

/// The cached `n`-point rule. Leaked once per order, shared afterwards.
pub fn gauss_rule(n: usize) -> &'static GaussRule {
    let mut cache = rule_cache().lock().expect("quadrature cache poisoned");
    cache
        .entry(n)
        .or_insert_with(|| Box::leak(Box::new(build_rule(n))))
}

/// Single-panel Gauss-Legendre integral of `f` over `[a, b]`.
pub fn integrate_panel<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, order: usize) -> f64 {
    if a == b {
        return 0.0;
    }
    let rule = gauss_rule(order);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (x, w) in rule.nodes.iter().zip(rule.weights.iter()) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

/// Composite rule: `panels` equal subintervals of `[a, b]`, `order` points each.
pub fn integrate_composite<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    panels: usize,
    order: usize,
) -> f64 {
    if a == b || panels == 0 {
        return 0.0;
    }
    let step = (b - a) / panels as f64;
    let mut acc = 0.0;
    for i in 0..panels {
        let lo = a + step * i as f64;
        let hi = if i + 1 == panels { b } else { lo + step };
        acc += integrate_panel(&mut f, lo, hi, order);
    }
    acc
}

/// Composite rule over an explicit partition. `points` must be sorted; each
/// consecutive pair becomes one subinterval, further split into `panels`
/// pieces of `order` points.
pub fn integrate_partition<F: FnMut(f64) -> f64>(
    mut f: F,
    points: &[f64],
    panels: usize,
    order: usize,
) -> f64 {
    let mut acc = 0.0;
    for w in points.windows(2) {
        acc += integrate_composite(&mut f, w[0], w[1], panels, order);
    }
    acc
}

/// Adaptive bisection driven by the difference between an `order` and a
/// `2*order` panel estimate. Intended for smooth integrands with isolated
/// difficult spots; depth is capped so it always terminates.
pub fn integrate_adaptive<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn go<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
        let coarse = integrate_panel(&mut *f, a, b, 16);
        let fine = integrate_panel(&mut *f, a, b, 32);
        if (fine - coarse).abs() <= tol * (1.0 + fine.abs()) || depth >= 24 {
            return fine;
        }
        let mid = 0.5 * (a + b);
        go(f, a, mid, tol * 0.5, depth + 1) + go(f, mid, b, tol * 0.5, depth + 1)
    }
    if a == b {
        return 0.0;
    }
    go(&mut f, a, b, tol, 0)
}

/// Sorts, deduplicates (within a relative tolerance), and clips a breakpoint
/// set to `[a, b]`, always including both endpoints.
pub fn breakpoints_in(a: f64, b: f64, raw: &[f64]) -> Vec<f64> {
    let mut pts: Vec<f64> = raw.iter().copied().filter(|t| *t > a && *t < b).collect();
    pts.push(a);
    pts.push(b);
    pts.sort_by(|x, y| x.partial_cmp(y).expect("breakpoints must be finite"));
    let span = (b - a).abs().max(f64::MIN_POSITIVE);
    let mut out: Vec<f64> = Vec::with_capacity(pts.len());
    for t in pts {
        if out.last().is_none_or(|last| t - last > 1e-12 * span) {
            out.push(t);
        }
    }
    // endpoint b may have been swallowed by the dedup; restore it
    if let Some(last) = out.last_mut() {
        if *last != b {
            if b - *last <= 1e-12 * span {
                *last = b;
            } else {
                out.push(b);
            }
        }
    }
    out
}
