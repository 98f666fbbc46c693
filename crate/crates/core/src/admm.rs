//! ADMM with dynamically growing penalties for
//! `min lambda ||x||_0 + (1/p) || b - |A x| ||_p^p`.
//!
//! The problem is split as `x = q`, `z = A x`. Each iteration performs the
//! x-, q- and z-steps from [`crate::prox`], a multiplier ascent, and then
//! multiplies both penalties by `rho`. The loop ends once `r1 >= r_max`
//! (or at `max_iters`).

use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::MeasurementOperator;
use crate::prox::{self, Fidelity};
use crate::signal::{self, complex_gaussian_vec, ComplexSignal, RngSpec};

pub const DEFAULT_SAMPLE_EVERY: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub lambda: f64,
    pub fidelity: Fidelity,
    pub r1_0: f64,
    pub r2_0: f64,
    pub rho: f64,
    pub r_max: f64,
    /// Hard cap on iterations. Required when `rho == 1`.
    pub max_iters: Option<usize>,
    pub rng: RngSpec,
    /// Diagnostics are recorded every this many iterations.
    pub sample_every: usize,
}

impl SolverConfig {
    /// L0L2PR defaults.
    pub fn l0l2pr() -> Self {
        Self {
            lambda: 1e-4,
            fidelity: Fidelity::L2,
            r1_0: 1e-3,
            r2_0: 1e-3,
            rho: 1.0005,
            r_max: 100.0,
            max_iters: None,
            rng: RngSpec::new(0),
            sample_every: DEFAULT_SAMPLE_EVERY,
        }
    }

    /// L0L1PR defaults.
    pub fn l0l1pr() -> Self {
        Self {
            lambda: 1e-3,
            fidelity: Fidelity::L1,
            r1_0: 1e-2,
            r2_0: 1e-2,
            ..Self::l0l2pr()
        }
    }

    /// Growth factor recommended for noisy measurements.
    pub const NOISY_RHO: f64 = 1.0001;

    pub fn with_lambda(self, lambda: f64) -> Self {
        Self { lambda, ..self }
    }

    pub fn with_rng(self, rng: RngSpec) -> Self {
        Self { rng, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| Err(Error::config(field, msg));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda", "must be finite and >= 0");
        }
        if !(self.r1_0 > 0.0 && self.r2_0 > 0.0) {
            return bad("r1_0", "initial penalties must be > 0");
        }
        if !(self.rho >= 1.0 && self.rho.is_finite()) {
            return bad("rho", "must be finite and >= 1");
        }
        if !(self.r_max >= self.r1_0) {
            return bad("r_max", "must be >= r1_0");
        }
        if self.rho == 1.0 && self.max_iters.is_none() {
            return bad("max_iters", "required when rho = 1 (r_max is never reached)");
        }
        if self.max_iters == Some(0) {
            return bad("max_iters", "must be >= 1");
        }
        if self.sample_every == 0 {
            return bad("sample_every", "must be >= 1");
        }
        Ok(())
    }

    /// `ceil(ln(r_max / r1_0) / ln rho)`, the number of iterations before the
    /// penalty cap stops the loop. `None` for `rho = 1`.
    pub fn termination_count(&self) -> Option<usize> {
        if self.rho <= 1.0 {
            return None;
        }
        let n = ((self.r_max / self.r1_0).ln() / self.rho.ln()).ceil();
        Some((n as usize).max(1))
    }

    /// Iterations a solve will actually run.
    pub fn iteration_budget(&self) -> usize {
        match (self.termination_count(), self.max_iters) {
            (Some(t), Some(m)) => t.min(m),
            (Some(t), None) => t,
            (None, Some(m)) => m,
            (None, None) => 0,
        }
    }

    /// Penalties at iteration `n`: `(r1_0 rho^n, r2_0 rho^n)`.
    pub fn penalties_at(&self, n: usize) -> (f64, f64) {
        let g = pow_usize(self.rho, n);
        (self.r1_0 * g, self.r2_0 * g)
    }
}

/// `base^n` by binary exponentiation. Unlike `powi`, the result does not
/// depend on whether the compiler constant-folds the call.
pub fn pow_usize(base: f64, mut n: usize) -> f64 {
    let (mut acc, mut sq) = (1.0, base);
    while n > 0 {
        if n & 1 == 1 {
            acc *= sq;
        }
        sq *= sq;
        n >>= 1;
    }
    acc
}

/// Full iterate `(x, q, z, lam1, lam2)` with the current penalties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverState {
    #[serde(with = "complex_vec")]
    pub x: Vec<Complex64>,
    #[serde(with = "complex_vec")]
    pub q: Vec<Complex64>,
    #[serde(with = "complex_vec")]
    pub z: Vec<Complex64>,
    #[serde(with = "complex_vec")]
    pub lam1: Vec<Complex64>,
    #[serde(with = "complex_vec")]
    pub lam2: Vec<Complex64>,
    pub r1: f64,
    pub r2: f64,
    pub iteration: usize,
}

impl SolverState {
    fn is_finite(&self) -> bool {
        [&self.x, &self.q, &self.z, &self.lam1, &self.lam2]
            .iter()
            .all(|v| v.iter().all(|c| c.is_finite()))
    }
}

/// Random `q0`, `z0` (standard complex Gaussian), zero `x0` and multipliers.
pub fn initialize(cfg: &SolverConfig, op: &MeasurementOperator) -> SolverState {
    let mut rng = cfg.rng.rng();
    let q = complex_gaussian_vec(&mut rng, op.n());
    let z = complex_gaussian_vec(&mut rng, op.output_len());
    let zero = Complex64::new(0.0, 0.0);
    SolverState {
        x: vec![zero; op.n()],
        q,
        z,
        lam1: vec![zero; op.n()],
        lam2: vec![zero; op.output_len()],
        r1: cfg.r1_0,
        r2: cfg.r2_0,
        iteration: 0,
    }
}

/// `lambda ||q||_0 + (1/p) || b - |z| ||_p^p`
pub fn energy(q: &[Complex64], z: &[Complex64], b: &[f64], lambda: f64, fidelity: Fidelity) -> f64 {
    assert_eq!(z.len(), b.len(), "energy: z and b lengths differ");
    let misfit: f64 = match fidelity {
        Fidelity::L1 => z.iter().zip(b).map(|(zi, bi)| (bi - zi.norm()).abs()).sum(),
        Fidelity::L2 => 0.5 * z.iter().zip(b).map(|(zi, bi)| (bi - zi.norm()).powi(2)).sum::<f64>(),
    };
    lambda * signal::l0_norm(q) as f64 + misfit
}

/// KKT residuals in the max norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    /// `||x - q||_inf`
    pub splitting: f64,
    /// `||z - A x||_inf`
    pub measurement: f64,
    /// `||lam1 - A* lam2||_inf`
    pub dual: f64,
}

pub fn kkt_residuals(state: &SolverState, op: &MeasurementOperator) -> Result<KktResiduals> {
    let ax = op.forward(&state.x)?;
    let at_lam2 = op.adjoint(&state.lam2)?;
    if state.q.len() != op.n() || state.lam1.len() != op.n() || state.z.len() != op.output_len() {
        return Err(Error::invalid("kkt_residuals: state dimensions do not match operator"));
    }
    let sup = |a: &[Complex64], b: &[Complex64]| {
        a.iter().zip(b).map(|(u, v)| (u - v).norm()).fold(0.0, f64::max)
    };
    Ok(KktResiduals {
        splitting: sup(&state.x, &state.q),
        measurement: sup(&state.z, &ax),
        dual: sup(&state.lam1, &at_lam2),
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Iteration index (after the update) of each sample.
    pub sampled_iterations: Vec<usize>,
    pub energy_trace: Vec<f64>,
    /// `(||x - q||, ||z - A x||)` in the 2-norm.
    pub primal_residuals: Vec<(f64, f64)>,
    pub iterations: usize,
    pub wall_time: f64,
}

impl Diagnostics {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("diagnostics serialize")
    }
}

/// Passed to the sampling callback.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleEvent {
    pub iteration: usize,
    pub energy: f64,
    pub splitting_residual: f64,
    pub measurement_residual: f64,
}

#[derive(Debug, Clone)]
pub struct AdmmOutput {
    /// The exactly sparse iterate `q`.
    pub estimate: ComplexSignal,
    pub state: SolverState,
    pub diagnostics: Diagnostics,
}

pub fn admm_solve(op: &MeasurementOperator, b: &[f64], cfg: &SolverConfig) -> Result<AdmmOutput> {
    admm_solve_with(op, b, cfg, |_| {})
}

/// Like [`admm_solve`], calling `on_sample` at every sampled iteration.
pub fn admm_solve_with(
    op: &MeasurementOperator,
    b: &[f64],
    cfg: &SolverConfig,
    on_sample: impl FnMut(&SampleEvent),
) -> Result<AdmmOutput> {
    cfg.validate()?;
    check_measurements(op, b)?;
    let state = initialize(cfg, op);
    run_from(op, b, cfg, state, on_sample)
}

fn check_measurements(op: &MeasurementOperator, b: &[f64]) -> Result<()> {
    if b.len() != op.output_len() {
        return Err(Error::invalid(format!(
            "measurement length {} != operator output length {}",
            b.len(),
            op.output_len()
        )));
    }
    if let Some(i) = b.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("measurement {i} is not finite")));
    }
    Ok(())
}

/// Continue iterating from an explicit state.
pub fn run_from(
    op: &MeasurementOperator,
    b: &[f64],
    cfg: &SolverConfig,
    mut state: SolverState,
    mut on_sample: impl FnMut(&SampleEvent),
) -> Result<AdmmOutput> {
    cfg.validate()?;
    check_measurements(op, b)?;
    let (n, m) = (op.n(), op.output_len());
    if state.x.len() != n || state.q.len() != n || state.lam1.len() != n {
        return Err(Error::invalid("state signal-domain vectors have wrong length"));
    }
    if state.z.len() != m || state.lam2.len() != m {
        return Err(Error::invalid("state measurement-domain vectors have wrong length"));
    }

    let start = Instant::now();
    let mut ws = op.workspace();
    let mut ax = vec![Complex64::new(0.0, 0.0); m];
    let mut scratch = vec![Complex64::new(0.0, 0.0); m];
    let mut diag = Diagnostics::default();
    let mut snapshot = state.clone();
    let fidelity = cfg.fidelity;
    let lambda = cfg.lambda;
    let start_iter = state.iteration;

    loop {
        let it = state.iteration;
        let (r1, r2) = cfg.penalties_at(it);
        let SolverState { x, q, z, lam1, lam2, .. } = &mut state;

        prox::update_x_into(op, q, z, lam1, lam2, r1, r2, x, &mut scratch, &mut ws);

        let inv_r1 = 1.0 / r1;
        for ((qi, xi), li) in q.iter_mut().zip(x.iter()).zip(lam1.iter()) {
            *qi = prox::hard_threshold_entry(xi + li * inv_r1, r1, lambda);
        }

        op.forward_into(x, &mut ax, &mut ws);
        let inv_r2 = 1.0 / r2;
        // any non-finite x, q or z propagates into the multipliers
        let mut guard = 0.0;
        for (((zi, li), ai), &bi) in z.iter_mut().zip(lam2.iter_mut()).zip(&ax).zip(b) {
            let w = ai - *li * inv_r2;
            *zi = prox::update_z_entry(w, bi, r2, fidelity);
            *li += (*zi - ai) * r2;
            guard += li.re.abs() + li.im.abs();
        }
        for ((li, xi), qi) in lam1.iter_mut().zip(x.iter()).zip(q.iter()) {
            *li += (xi - qi) * r1;
            guard += li.re.abs() + li.im.abs();
        }

        state.iteration = it + 1;
        let (r1_next, r2_next) = cfg.penalties_at(state.iteration);
        state.r1 = r1_next;
        state.r2 = r2_next;

        if !guard.is_finite() {
            return Err(Error::Diverged {
                iteration: state.iteration,
                last_finite: Box::new(snapshot),
            });
        }

        let done = (cfg.rho > 1.0 && r1_next >= cfg.r_max)
            || cfg
                .max_iters
                .is_some_and(|cap| state.iteration - start_iter >= cap);

        if state.iteration.is_multiple_of(cfg.sample_every) || done {
            let e = energy(&state.q, &state.z, b, lambda, fidelity);
            let split = signal::norm_diff(&state.x, &state.q);
            let meas = signal::norm_diff(&state.z, &ax);
            diag.sampled_iterations.push(state.iteration);
            diag.energy_trace.push(e);
            diag.primal_residuals.push((split, meas));
            on_sample(&SampleEvent {
                iteration: state.iteration,
                energy: e,
                splitting_residual: split,
                measurement_residual: meas,
            });
            if state.is_finite() {
                snapshot.clone_from(&state);
            }
        }

        if done {
            break;
        }
    }

    diag.iterations = state.iteration - start_iter;
    diag.wall_time = start.elapsed().as_secs_f64();
    let estimate = ComplexSignal::new(state.q.clone())?;
    Ok(AdmmOutput {
        estimate,
        state,
        diagnostics: diag,
    })
}

mod complex_vec {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|c| [c.re, c.im]).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(pairs.into_iter().map(|[re, im]| Complex64::new(re, im)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::generate_sparse_signal;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn default_termination_counts() {
        // ceil(ln(1e5) / ln(1.0005)) = ceil(23031.61)
        assert_eq!(SolverConfig::l0l2pr().termination_count(), Some(23_032));
        // ceil(ln(1e4) / ln(1.0005)) = ceil(18425.29)
        assert_eq!(SolverConfig::l0l1pr().termination_count(), Some(18_426));
    }

    #[test]
    fn config_validation() {
        let mut cfg = SolverConfig::l0l1pr();
        assert!(cfg.validate().is_ok());
        cfg.rho = 1.0;
        assert!(matches!(cfg.validate(), Err(Error::Config { ref field, .. }) if field == "max_iters"));
        cfg.max_iters = Some(10);
        assert!(cfg.validate().is_ok());
        cfg.rho = 0.9;
        assert!(cfg.validate().is_err());
        let cfg = SolverConfig { lambda: -1.0, ..SolverConfig::l0l2pr() };
        assert!(cfg.validate().is_err());
        let cfg = SolverConfig { r_max: 1e-4, ..SolverConfig::l0l2pr() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn energy_examples() {
        let b = [2.0, 0.0];
        assert_eq!(energy(&[c(0.0, 0.0); 2], &[c(0.0, 2.0), c(0.0, 0.0)], &b, 1.0, Fidelity::L2), 0.0);
        let e = energy(&[c(1.0, 0.0), c(0.0, 0.0)], &[c(0.0, 0.0); 2], &b, 1.0, Fidelity::L2);
        assert_eq!(e, 3.0);
        let e = energy(&[c(1.0, 0.0), c(0.0, 0.0)], &[c(0.0, 0.0); 2], &b, 1.0, Fidelity::L1);
        assert_eq!(e, 3.0);
    }

    #[test]
    fn initialize_is_deterministic_with_zero_multipliers() {
        let op = MeasurementOperator::unitary_dft(16).unwrap();
        let cfg = SolverConfig::l0l1pr().with_rng(RngSpec::new(12));
        let a = initialize(&cfg, &op);
        assert_eq!(a, initialize(&cfg, &op));
        assert!(a.lam1.iter().chain(&a.lam2).chain(&a.x).all(|v| *v == c(0.0, 0.0)));
        assert_eq!((a.r1, a.r2, a.iteration), (cfg.r1_0, cfg.r2_0, 0));
    }

    #[test]
    fn initial_q_has_unit_variance_parts() {
        let op = MeasurementOperator::unitary_dft(1024).unwrap();
        let s = initialize(&SolverConfig::l0l2pr().with_rng(RngSpec::new(99)), &op);
        let mean_sq = s.q.iter().map(|v| v.norm_sqr()).sum::<f64>() / 1024.0;
        assert!((mean_sq - 2.0).abs() < 0.3, "{mean_sq}");
    }

    #[test]
    fn kkt_zero_at_feasible_point() {
        let op = MeasurementOperator::unitary_dft(8).unwrap();
        let mut rng = RngSpec::new(1).rng();
        let x = complex_gaussian_vec(&mut rng, 8);
        let lam2 = complex_gaussian_vec(&mut rng, 8);
        let state = SolverState {
            q: x.clone(),
            z: op.forward(&x).unwrap(),
            lam1: op.adjoint(&lam2).unwrap(),
            lam2,
            x,
            r1: 1.0,
            r2: 1.0,
            iteration: 0,
        };
        let k = kkt_residuals(&state, &op).unwrap();
        assert!(k.splitting == 0.0 && k.measurement < 1e-15 && k.dual < 1e-15, "{k:?}");
    }

    #[test]
    fn fixed_step_keeps_penalty_constant() {
        let gt = generate_sparse_signal(32, 3, RngSpec::new(2), true).unwrap();
        let op = MeasurementOperator::unitary_dft(32).unwrap();
        let b = op.magnitudes(&gt.signal).unwrap();
        let cfg = SolverConfig {
            lambda: 1e-2,
            r1_0: 0.5,
            r2_0: 0.5,
            rho: 1.0,
            max_iters: Some(200),
            ..SolverConfig::l0l1pr()
        };
        let out = admm_solve(&op, &b, &cfg).unwrap();
        assert_eq!(out.diagnostics.iterations, 200);
        assert_eq!((out.state.r1, out.state.r2), (0.5, 0.5));
    }

    #[test]
    fn max_iters_caps_dynamic_run() {
        let op = MeasurementOperator::unitary_dft(16).unwrap();
        let b = vec![1.0; 16];
        let cfg = SolverConfig { max_iters: Some(25), ..SolverConfig::l0l2pr() };
        let out = admm_solve(&op, &b, &cfg).unwrap();
        assert_eq!(out.diagnostics.iterations, 25);
        assert_eq!(out.diagnostics.sampled_iterations, vec![10, 20, 25]);
        assert_eq!(out.state.r1, cfg.r1_0 * pow_usize(cfg.rho, 25));
    }

    #[test]
    fn rejects_wrong_measurement_length() {
        let op = MeasurementOperator::unitary_dft(16).unwrap();
        assert!(admm_solve(&op, &[1.0; 8], &SolverConfig::l0l2pr()).is_err());
        assert!(admm_solve(&op, &[f64::NAN; 16], &SolverConfig::l0l2pr()).is_err());
    }

    #[test]
    fn divergence_is_reported_with_finite_snapshot() {
        let op = MeasurementOperator::unitary_dft(4).unwrap();
        let b = vec![1.0; 4];
        let cfg = SolverConfig { max_iters: Some(50), ..SolverConfig::l0l2pr() };
        let mut state = initialize(&cfg, &op);
        state.lam2[0] = c(f64::MAX, 0.0);
        state.lam2[1] = c(f64::MAX, 0.0);
        match run_from(&op, &b, &cfg, state, |_| {}) {
            Err(Error::Diverged { last_finite, .. }) => assert!(last_finite.is_finite()),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn callback_sees_every_sample() {
        let op = MeasurementOperator::unitary_dft(16).unwrap();
        let b = vec![1.0; 16];
        let cfg = SolverConfig { max_iters: Some(40), ..SolverConfig::l0l1pr() };
        let mut seen = Vec::new();
        let out = admm_solve_with(&op, &b, &cfg, |e| seen.push(e.iteration)).unwrap();
        assert_eq!(seen, out.diagnostics.sampled_iterations);
        assert_eq!(out.diagnostics.energy_trace.len(), seen.len());
        let json = out.diagnostics.to_json();
        let back: Diagnostics = serde_json::from_str(&json).unwrap();
        assert_eq!(back, out.diagnostics);
    }
}
