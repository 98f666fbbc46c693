//! Brute-force reference minimizers for the per-entry subproblems.
//!
//! Nothing here calls into [`crate::prox`]; the objectives are written out
//! directly and minimized by refined grid search, so the results can be used
//! to check the closed-form kernels and to generate test vectors.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::signal::RngSpec;

/// Points per grid level.
const GRID_POINTS: usize = 2001;
/// Grid refinement stops once the spacing drops below this.
const FINEST_STEP: f64 = 1e-10;

/// Minimize a 1-D function on `[lo, hi]`: evaluate a uniform grid, then
/// repeatedly re-grid the two cells around the best point. Reliable for
/// unimodal objectives, which all of the magnitude-fit problems are.
pub fn grid_minimize(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    assert!(hi >= lo);
    let (mut lo, mut hi) = (lo, hi);
    let (lo0, hi0) = (lo, hi);
    let mut best = (lo, f(lo));
    loop {
        let step = (hi - lo) / (GRID_POINTS - 1) as f64;
        for i in 0..GRID_POINTS {
            let t = if i + 1 == GRID_POINTS { hi } else { lo + step * i as f64 };
            let v = f(t);
            if v < best.1 {
                best = (t, v);
            }
        }
        if step <= FINEST_STEP || step == 0.0 {
            return best;
        }
        lo = (best.0 - 2.0 * step).max(lo0);
        hi = (best.0 + 2.0 * step).min(hi0);
    }
}

/// `(1/2)(b - k w)^2 + (r2/2)(1 - k)^2 w^2`
pub fn l2_length_objective(k: f64, w_abs: f64, b: f64, r2: f64) -> f64 {
    0.5 * (b - k * w_abs).powi(2) + 0.5 * r2 * (1.0 - k).powi(2) * w_abs * w_abs
}

/// `|b - k w| + (r2/2)(1 - k)^2 w^2`
pub fn l1_length_objective(k: f64, w_abs: f64, b: f64, r2: f64) -> f64 {
    (b - k * w_abs).abs() + 0.5 * r2 * (1.0 - k).powi(2) * w_abs * w_abs
}

/// `|y| + (r/2)(y - y0)^2`
pub fn abs_quadratic_objective(y: f64, y0: f64, r: f64) -> f64 {
    y.abs() + 0.5 * r * (y - y0).powi(2)
}

/// `lambda 1{q != 0} + (r1/2)|q - v|^2`
pub fn hard_threshold_objective(q: Complex64, v: Complex64, r1: f64, lambda: f64) -> f64 {
    let penalty = if q.re.abs() + q.im.abs() != 0.0 { lambda } else { 0.0 };
    penalty + 0.5 * r1 * (q - v).norm_sqr()
}

/// Full complex z-entry objective `(1/p)|b - |z||^p + (r2/2)|z - W|^2`.
pub fn z_entry_objective(z: Complex64, w: Complex64, b: f64, r2: f64, p: u32) -> f64 {
    let misfit = (b - z.norm()).abs();
    let fidelity = if p == 1 { misfit } else { 0.5 * misfit * misfit };
    fidelity + 0.5 * r2 * (z - w).norm_sqr()
}

fn length_upper_bound(w_abs: f64, b: f64) -> f64 {
    2.0 * (b.max(0.0) / w_abs).max(1.0) + 1.0
}

/// Oracle for the L2 length problem over `k >= 0`; returns `(k, value)`.
pub fn l2_length(w_abs: f64, b: f64, r2: f64) -> (f64, f64) {
    grid_minimize(
        |k| l2_length_objective(k, w_abs, b, r2),
        0.0,
        length_upper_bound(w_abs, b),
    )
}

/// Oracle for the L1 length problem over `k >= 0`; returns `(k, value)`.
pub fn l1_length(w_abs: f64, b: f64, r2: f64) -> (f64, f64) {
    grid_minimize(
        |k| l1_length_objective(k, w_abs, b, r2),
        0.0,
        length_upper_bound(w_abs, b),
    )
}

/// Oracle for `min |y| + (r/2)(y - y0)^2` over `y >= y1`.
pub fn constrained_abs_quadratic(y0: f64, y1: f64, r: f64) -> (f64, f64) {
    let hi = y1.max(y0) + 2.0;
    grid_minimize(|y| abs_quadratic_objective(y, y0, r), y1, hi)
}

/// Two-candidate oracle for the complex hard-threshold problem: the optimum
/// is either `q = 0` or, for `q != 0`, the unpenalized minimizer `q = v`.
pub fn hard_threshold(v: Complex64, r1: f64, lambda: f64) -> (Complex64, f64) {
    let zero = Complex64::new(0.0, 0.0);
    let e0 = hard_threshold_objective(zero, v, r1, lambda);
    let ev = hard_threshold_objective(v, v, r1, lambda);
    if ev < e0 {
        (v, ev)
    } else {
        (zero, e0)
    }
}

/// 2-D polar grid search for the z-entry objective over all of C.
pub fn z_entry(w: Complex64, b: f64, r2: f64, p: u32) -> (Complex64, f64) {
    const POINTS: usize = 201;
    let f = |m: f64, th: f64| z_entry_objective(Complex64::from_polar(m, th), w, b, r2, p);
    let m_hi0 = 2.0 * (w.norm() + b.abs()) + 1.0;
    let (mut m_lo, mut m_hi) = (0.0, m_hi0);
    let (mut t_lo, mut t_hi) = (-PI, PI);
    let mut best = (0.0, 0.0, f(0.0, 0.0));
    loop {
        let dm = (m_hi - m_lo) / (POINTS - 1) as f64;
        let dt = (t_hi - t_lo) / (POINTS - 1) as f64;
        for i in 0..POINTS {
            let m = m_lo + dm * i as f64;
            for j in 0..POINTS {
                let th = t_lo + dt * j as f64;
                let v = f(m, th);
                if v < best.2 {
                    best = (m, th, v);
                }
            }
        }
        if dm.max(dt) <= 1e-9 {
            break;
        }
        m_lo = (best.0 - 2.0 * dm).max(0.0);
        m_hi = (best.0 + 2.0 * dm).min(m_hi0);
        t_lo = best.1 - 2.0 * dt;
        t_hi = best.1 + 2.0 * dt;
    }
    (Complex64::from_polar(best.0, best.1), best.2)
}

/// One line of oracle output for test-vector generation.
#[derive(Debug, Clone, Serialize)]
pub struct OracleVector {
    pub kernel: &'static str,
    pub inputs: Vec<f64>,
    pub argmin: f64,
    pub value: f64,
}

/// Random test vectors for `kernel` in `l2`, `l1` or `cst` (constrained
/// absolute quadratic). Inputs are `[w_abs, b, r2]` or `[y0, y1, r]`.
pub fn generate_vectors(kernel: &str, count: usize, rng: RngSpec) -> Result<Vec<OracleVector>> {
    let mut rng = rng.rng();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let v = match kernel {
            "l2" | "l1" => {
                let w_abs = rng.random_range(0.01..3.0);
                let b = rng.random_range(0.0..3.0);
                let r2 = 10f64.powf(rng.random_range(-2.0..2.0));
                let (argmin, value) = if kernel == "l2" {
                    l2_length(w_abs, b, r2)
                } else {
                    l1_length(w_abs, b, r2)
                };
                OracleVector {
                    kernel: if kernel == "l2" { "l2" } else { "l1" },
                    inputs: vec![w_abs, b, r2],
                    argmin,
                    value,
                }
            }
            "cst" => {
                let y0 = rng.random_range(-3.0..3.0);
                let y1 = rng.random_range(-3.0..1.0);
                let r = 10f64.powf(rng.random_range(-1.0..1.0));
                let (argmin, value) = constrained_abs_quadratic(y0, y1, r);
                OracleVector { kernel: "cst", inputs: vec![y0, y1, r], argmin, value }
            }
            other => return Err(Error::invalid(format!("unknown oracle kernel `{other}`"))),
        };
        out.push(v);
    }
    Ok(out)
}
