//! Sparse Fienup baseline: alternate between the magnitude set
//! `{x : |F x| = b}` and the sparsity set `{x : ||x||_0 <= s}`.

use std::cmp::Ordering;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{MeasurementOperator, Workspace};
use crate::signal::{self, complex_gaussian_vec, ComplexSignal, RngSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SprConfig {
    /// Sparsity budget. Only the count is known to the solver, not the support.
    pub s: usize,
    pub max_iters: usize,
    /// Relative-change stopping tolerance.
    pub tol: f64,
    pub rng: RngSpec,
}

impl SprConfig {
    pub fn new(s: usize) -> Self {
        Self {
            s,
            max_iters: 10_000,
            tol: 1e-8,
            rng: RngSpec::new(0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.s == 0 {
            return Err(Error::config("s", "sparsity budget must be >= 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::config("tol", "must be > 0"));
        }
        if self.max_iters == 0 {
            return Err(Error::config("max_iters", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SprOutput {
    pub estimate: ComplexSignal,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time: f64,
}

/// Keep the `s` largest-modulus entries (ties to the lower index), zero the rest.
pub fn project_sparsity(x: &[Complex64], s: usize) -> Vec<Complex64> {
    let mut out = x.to_vec();
    let mut order = Vec::with_capacity(x.len());
    project_sparsity_in_place(&mut out, s, &mut order);
    out
}

fn project_sparsity_in_place(x: &mut [Complex64], s: usize, order: &mut Vec<usize>) {
    if s >= x.len() {
        return;
    }
    order.clear();
    order.extend(0..x.len());
    let key = |i: usize| x[i].norm_sqr();
    // total order: larger modulus first, then lower index
    let cmp = |&a: &usize, &b: &usize| {
        key(b)
            .partial_cmp(&key(a))
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    };
    order.select_nth_unstable_by(s, cmp);
    for &i in &order[s..] {
        x[i] = Complex64::new(0.0, 0.0);
    }
}

/// Closest point with `|F y| = b` (unitary DFT); zero bins get phase 1.
pub fn project_magnitude(x: &[Complex64], b: &[f64]) -> Result<Vec<Complex64>> {
    if x.len() != b.len() {
        return Err(Error::invalid(format!(
            "project_magnitude: x has length {}, b has length {}",
            x.len(),
            b.len()
        )));
    }
    let op = MeasurementOperator::unitary_dft(x.len())?;
    let mut ws = op.workspace();
    let mut spectrum = vec![Complex64::new(0.0, 0.0); x.len()];
    let mut out = vec![Complex64::new(0.0, 0.0); x.len()];
    project_magnitude_into(&op, x, b, &mut spectrum, &mut out, &mut ws);
    Ok(out)
}

fn project_magnitude_into(
    op: &MeasurementOperator,
    x: &[Complex64],
    b: &[f64],
    spectrum: &mut [Complex64],
    out: &mut [Complex64],
    ws: &mut Workspace,
) {
    op.forward_into(x, spectrum, ws);
    for (y, &bi) in spectrum.iter_mut().zip(b) {
        let m = y.norm();
        *y = if m > 0.0 { *y * (bi / m) } else { Complex64::new(bi, 0.0) };
    }
    op.adjoint_into(spectrum, out, ws);
}

pub fn spr_solve(b: &[f64], cfg: &SprConfig) -> Result<SprOutput> {
    cfg.validate()?;
    let n = b.len();
    if n == 0 {
        return Err(Error::invalid("empty measurements"));
    }
    if cfg.s > n {
        return Err(Error::config("s", format!("sparsity budget {} exceeds n = {n}", cfg.s)));
    }
    let start = std::time::Instant::now();
    let op = MeasurementOperator::unitary_dft(n)?;
    let mut ws = op.workspace();
    let mut rng = cfg.rng.rng();
    let mut x = complex_gaussian_vec(&mut rng, n);
    let mut next = vec![Complex64::new(0.0, 0.0); n];
    let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
    let mut order = Vec::with_capacity(n);

    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iters {
        project_magnitude_into(&op, &x, b, &mut spectrum, &mut next, &mut ws);
        project_sparsity_in_place(&mut next, cfg.s, &mut order);
        iterations += 1;
        let change = signal::norm_diff(&next, &x);
        let scale = signal::norm(&x);
        std::mem::swap(&mut x, &mut next);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("SPR produced a non-finite iterate"));
        }
        if change <= cfg.tol * scale {
            converged = true;
            break;
        }
    }
    Ok(SprOutput {
        estimate: ComplexSignal::new(x)?,
        iterations,
        converged,
        wall_time: start.elapsed().as_secs_f64(),
    })
}
