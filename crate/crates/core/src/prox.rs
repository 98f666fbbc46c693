//! Closed-form solutions of the ADMM subproblems.
//!
//! * x-step: normal equation `(r1 I + r2 A*A) x = r1 q + r2 A*z + A*lam2 - lam1`,
//!   solved by componentwise division since `A*A` is diagonal.
//! * q-step: complex hard thresholding of `x + lam1 / r1` at `|v|^2 <= 2 lambda / r1`.
//! * z-step: the minimizer lies on the ray through `W = A x - lam2 / r2`, so
//!   only a scalar length `k` per entry has to be found.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{MeasurementOperator, Workspace};

/// Data-fidelity exponent `p` of `(1/p) || b - |z| ||_p^p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Fidelity {
    L1,
    L2,
}

impl Fidelity {
    pub fn from_exponent(p: u32) -> Result<Self> {
        match p {
            1 => Ok(Fidelity::L1),
            2 => Ok(Fidelity::L2),
            _ => Err(Error::invalid(format!("fidelity exponent must be 1 or 2, got {p}"))),
        }
    }

    pub fn exponent(self) -> u32 {
        match self {
            Fidelity::L1 => 1,
            Fidelity::L2 => 2,
        }
    }
}

impl TryFrom<u32> for Fidelity {
    type Error = Error;

    fn try_from(p: u32) -> Result<Self> {
        Self::from_exponent(p)
    }
}

impl From<Fidelity> for u32 {
    fn from(f: Fidelity) -> u32 {
        f.exponent()
    }
}

/// Per-entry input of the magnitude-fit kernels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagnitudeFitInput {
    /// `|W_i|`
    pub w_abs: f64,
    /// Observed magnitude. Noisy data may make this slightly negative.
    pub b: f64,
    pub r2: f64,
}

impl MagnitudeFitInput {
    pub fn new(w_abs: f64, b: f64, r2: f64) -> Result<Self> {
        if !(w_abs.is_finite() && b.is_finite() && r2.is_finite()) {
            return Err(Error::invalid("magnitude-fit inputs must be finite"));
        }
        if w_abs < 0.0 || r2 <= 0.0 {
            return Err(Error::invalid("need w_abs >= 0 and r2 > 0"));
        }
        Ok(Self { w_abs, b, r2 })
    }
}

/// Solve the x-subproblem. All vectors are checked against `op`.
#[allow(clippy::too_many_arguments)]
pub fn update_x(
    op: &MeasurementOperator,
    q: &[Complex64],
    z: &[Complex64],
    lam1: &[Complex64],
    lam2: &[Complex64],
    r1: f64,
    r2: f64,
) -> Result<Vec<Complex64>> {
    let (n, m) = (op.n(), op.output_len());
    if q.len() != n || lam1.len() != n || z.len() != m || lam2.len() != m {
        return Err(Error::invalid(format!(
            "update_x: expected q, lam1 of length {n} and z, lam2 of length {m}"
        )));
    }
    if !(r1 > 0.0 && r2 > 0.0) {
        return Err(Error::invalid("update_x: penalties must be positive"));
    }
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    let mut combined = vec![Complex64::new(0.0, 0.0); m];
    update_x_into(op, q, z, lam1, lam2, r1, r2, &mut x, &mut combined, &mut op.workspace());
    Ok(x)
}

/// Allocation-free x-step. `combined` is scratch of length `output_len`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn update_x_into(
    op: &MeasurementOperator,
    q: &[Complex64],
    z: &[Complex64],
    lam1: &[Complex64],
    lam2: &[Complex64],
    r1: f64,
    r2: f64,
    x: &mut [Complex64],
    combined: &mut [Complex64],
    ws: &mut Workspace,
) {
    // A* is linear: r2 A*z + A*lam2 = A*(r2 z + lam2)
    for ((c, zi), li) in combined.iter_mut().zip(z).zip(lam2) {
        *c = zi * r2 + li;
    }
    op.adjoint_into(combined, x, ws);
    let gram = op.gram_diagonal().as_slice();
    for i in 0..x.len() {
        x[i] = (q[i] * r1 + x[i] - lam1[i]) / (r1 + r2 * gram[i]);
    }
}

/// Hard threshold of a single `v = x_i + lam1_i / r1`; ties go to zero.
#[inline]
pub fn hard_threshold_entry(v: Complex64, r1: f64, lambda: f64) -> Complex64 {
    // lambda = 0 keeps everything, even entries whose square underflows
    if lambda > 0.0 && v.norm_sqr() <= 2.0 * lambda / r1 {
        Complex64::new(0.0, 0.0)
    } else {
        v
    }
}

pub fn hard_threshold_q(x: &[Complex64], lam1: &[Complex64], r1: f64, lambda: f64) -> Vec<Complex64> {
    assert_eq!(x.len(), lam1.len(), "hard_threshold_q: length mismatch");
    x.iter()
        .zip(lam1)
        .map(|(xi, li)| hard_threshold_entry(xi + li / r1, r1, lambda))
        .collect()
}

/// Optimal length `k` for the L2 fidelity.
///
/// For `w_abs = 0` the ray is undefined and the returned value is the output
/// magnitude itself, `max(b, 0) / (1 + r2)`.
pub fn magnitude_fit_l2(input: MagnitudeFitInput) -> f64 {
    let MagnitudeFitInput { w_abs, b, r2 } = input;
    if w_abs > 0.0 {
        ((b + r2 * w_abs) / ((1.0 + r2) * w_abs)).max(0.0)
    } else {
        (b / (1.0 + r2)).max(0.0)
    }
}

/// `sign(y) max(|y| - t, 0)`.
#[inline]
pub fn soft_threshold(y: f64, t: f64) -> f64 {
    if y > t {
        y - t
    } else if y < -t {
        y + t
    } else {
        0.0
    }
}

/// Minimizer of `|y| + (r/2)(y - y0)^2` subject to `y >= y1`.
///
/// The objective is convex, so the constrained minimizer is the unconstrained
/// one (soft threshold of `y0` at `1/r`) clipped from below at `y1`.
pub fn constrained_soft_threshold(y0: f64, y1: f64, r: f64) -> f64 {
    soft_threshold(y0, 1.0 / r).max(y1)
}

/// Optimal length `k` for the L1 fidelity; requires `w_abs > 0`.
///
/// Substituting `t = k |W| - b` turns the problem into
/// `min |t| + (r2/2)(t - R)^2, t >= -b` with `R = |W| - b`.
pub fn magnitude_fit_l1(input: MagnitudeFitInput) -> f64 {
    let MagnitudeFitInput { w_abs, b, r2 } = input;
    debug_assert!(w_abs > 0.0, "degenerate |W| = 0 is handled by update_z");
    let t = constrained_soft_threshold(w_abs - b, -b, r2);
    (t + b) / w_abs
}

/// Output magnitude for `|W_i| = 0` under the L1 fidelity: argmin over
/// `m >= 0` of `|b - m| + (r2/2) m^2`.
pub fn degenerate_magnitude_l1(b: f64, r2: f64) -> f64 {
    constrained_soft_threshold(-b, -b, r2) + b
}

/// Single-entry z-step. `|W| = 0` entries get direction `1 + 0i`.
#[inline]
pub fn update_z_entry(w: Complex64, b: f64, r2: f64, fidelity: Fidelity) -> Complex64 {
    let w_abs = w.norm_sqr().sqrt();
    if w_abs > 0.0 {
        let input = MagnitudeFitInput { w_abs, b, r2 };
        let k = match fidelity {
            Fidelity::L2 => magnitude_fit_l2(input),
            Fidelity::L1 => magnitude_fit_l1(input),
        };
        w * k
    } else {
        let m = match fidelity {
            Fidelity::L2 => magnitude_fit_l2(MagnitudeFitInput { w_abs: 0.0, b, r2 }),
            Fidelity::L1 => degenerate_magnitude_l1(b, r2),
        };
        Complex64::new(m, 0.0)
    }
}

pub fn update_z(w: &[Complex64], b: &[f64], r2: f64, fidelity: Fidelity) -> Result<Vec<Complex64>> {
    if w.len() != b.len() {
        return Err(Error::invalid(format!(
            "update_z: W has length {}, b has length {}",
            w.len(),
            b.len()
        )));
    }
    if !(r2 > 0.0) {
        return Err(Error::invalid("update_z: r2 must be positive"));
    }
    Ok(w.iter()
        .zip(b)
        .map(|(&wi, &bi)| update_z_entry(wi, bi, r2, fidelity))
        .collect())
}
