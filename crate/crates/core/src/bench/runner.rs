//! Seeded, paired trial execution over a parameter sweep.

use num_complex::Complex64;
use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::table::ResultTable;
use crate::admm::admm_solve;
use crate::error::{Error, Result};
use crate::metrics::{self, AlignmentPolicy, Method, TrialResult};
use crate::operators::{make_octanary_masks, MeasurementOperator, OperatorKind};
use crate::signal::{generate_sparse_signal, RngSpec, SparseGroundTruth};
use crate::spr::spr_solve;

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "SPARSE_PR_THREADS";

const STREAM_SIGNAL: u64 = 0;
const STREAM_NOISE: u64 = 1;
const STREAM_MASKS: u64 = 2;
const STREAM_ADMM_INIT: u64 = 3;
const STREAM_SPR_INIT: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub n: usize,
    pub k_masks: usize,
    pub s: usize,
    pub snr: f64,
}

impl ExperimentConfig {
    /// Sweep points in canonical order: n, then k, then s, then snr.
    pub fn sweep_points(&self) -> Vec<SweepPoint> {
        let mut out = Vec::new();
        for &n in &self.n_list {
            for &k_masks in &self.k_list {
                for s in self.sparsity.levels(n) {
                    for &snr in &self.snr_list {
                        out.push(SweepPoint { n, k_masks, s, snr });
                    }
                }
            }
        }
        out
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable seed for one trial. Depends only on the base seed, the sweep point
/// and the trial index, so adding points never perturbs the others.
pub fn trial_seed(base_seed: u64, point: &SweepPoint, trial: usize) -> u64 {
    let snr = if metrics::is_noiseless(point.snr) { f64::INFINITY } else { point.snr };
    [point.n as u64, point.k_masks as u64, point.s as u64, snr.to_bits(), trial as u64]
        .iter()
        .fold(splitmix64(base_seed), |h, &v| splitmix64(h ^ v))
}

/// Everything the methods share within one trial.
#[derive(Debug, Clone)]
pub struct TrialData {
    pub truth: SparseGroundTruth,
    pub operator: MeasurementOperator,
    pub clean: Vec<f64>,
    pub measurements: Vec<f64>,
}

pub fn make_trial_data(cfg: &ExperimentConfig, point: &SweepPoint, seed: u64) -> Result<TrialData> {
    let rng = RngSpec::new(seed);
    let mut truth =
        generate_sparse_signal(point.n, point.s, rng.with_stream(STREAM_SIGNAL), cfg.complex_valued)?;
    if cfg.normalize {
        let scale = 1.0 / truth.signal.norm();
        truth.signal = truth.signal.scale(Complex64::new(scale, 0.0))?;
    }
    let operator = match cfg.operator {
        OperatorKind::UnitaryDft => MeasurementOperator::unitary_dft(point.n)?,
        OperatorKind::Cdp => MeasurementOperator::cdp(make_octanary_masks(
            point.k_masks,
            point.n,
            rng.with_stream(STREAM_MASKS),
        )?)?,
    };
    let clean = operator.magnitudes(&truth.signal)?;
    let measurements = if metrics::is_noiseless(point.snr) {
        clean.clone()
    } else {
        metrics::add_noise(&clean, point.snr, rng.with_stream(STREAM_NOISE))?
    };
    Ok(TrialData { truth, operator, clean, measurements })
}

/// Run one method on shared trial data. Divergence is a failed trial with
/// infinite NMSE, not an error.
pub fn run_trial(
    cfg: &ExperimentConfig,
    method: Method,
    point: &SweepPoint,
    seed: u64,
    data: &TrialData,
) -> Result<TrialResult> {
    let rng = RngSpec::new(seed);
    let policy = match cfg.operator {
        OperatorKind::UnitaryDft => AlignmentPolicy::FOURIER,
        OperatorKind::Cdp => AlignmentPolicy::PHASE_ONLY,
    };
    let (estimate, iterations, wall) = match method {
        Method::Spr => {
            let sc = cfg.spr_config(point.s, point.snr, rng.with_stream(STREAM_SPR_INIT))?;
            let out = spr_solve(&data.measurements, &sc)?;
            (Some(out.estimate), out.iterations, out.wall_time)
        }
        _ => {
            let sc = cfg.solver_config(method, point.snr, rng.with_stream(STREAM_ADMM_INIT))?;
            let start = std::time::Instant::now();
            match admm_solve(&data.operator, &data.measurements, &sc) {
                Ok(out) => (Some(out.estimate), out.diagnostics.iterations, out.diagnostics.wall_time),
                Err(Error::Diverged { iteration, .. }) => {
                    (None, iteration, start.elapsed().as_secs_f64())
                }
                Err(e) => return Err(e),
            }
        }
    };
    let nmse = match &estimate {
        Some(est) => metrics::nmse(est, &data.truth.signal, policy)?,
        None => f64::INFINITY,
    };
    Ok(TrialResult {
        method,
        n: point.n,
        s: point.s,
        snr: point.snr,
        k_masks: point.k_masks,
        seed,
        nmse,
        success: nmse <= cfg.success_threshold,
        iterations,
        wall_time_s: if cfg.no_timing { 0.0 } else { wall },
    })
}

/// Worker count: available cores, capped by `SPARSE_PR_THREADS` if set.
pub fn worker_count() -> usize {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        Some(cap) if cap >= 1 => cap.min(cores),
        _ => cores,
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    run_experiment_with_threads(cfg, worker_count())
}

/// Rows come back in canonical order (sweep point, trial, method) whatever
/// the thread count.
pub fn run_experiment_with_threads(cfg: &ExperimentConfig, threads: usize) -> Result<ResultTable> {
    cfg.validate()?;
    let points = cfg.sweep_points();
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..cfg.trials).map(move |t| (p, t)))
        .collect();
    let run_job = |&(p, t): &(usize, usize)| -> Result<Vec<TrialResult>> {
        let point = &points[p];
        let seed = trial_seed(cfg.base_seed, point, t);
        let data = make_trial_data(cfg, point, seed)?;
        cfg.methods
            .iter()
            .map(|&m| run_trial(cfg, m, point, seed, &data))
            .collect()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let per_job: Vec<Vec<TrialResult>> =
        pool.install(|| jobs.par_iter().map(run_job).collect::<Result<_>>())?;
    Ok(ResultTable::new(per_job.into_iter().flatten().collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::config::SparsitySpec;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            methods: vec![Method::L0L1Pr, Method::Spr],
            n_list: vec![16],
            sparsity: SparsitySpec::Counts(vec![2, 3]),
            trials: 3,
            base_seed: 11,
            no_timing: true,
            ..Default::default()
        }
    }

    #[test]
    fn seeds_ignore_other_points() {
        let p = SweepPoint { n: 16, k_masks: 1, s: 2, snr: f64::INFINITY };
        let q = SweepPoint { s: 3, ..p };
        assert_eq!(trial_seed(1, &p, 0), trial_seed(1, &p, 0));
        assert_ne!(trial_seed(1, &p, 0), trial_seed(1, &p, 1));
        assert_ne!(trial_seed(1, &p, 0), trial_seed(1, &q, 0));
        assert_ne!(trial_seed(1, &p, 0), trial_seed(2, &p, 0));
        // 1001 dB and inf are the same noiseless point
        assert_eq!(trial_seed(1, &p, 0), trial_seed(1, &SweepPoint { snr: 1001.0, ..p }, 0));

        let mut cfg = small();
        let a = run_experiment_with_threads(&cfg, 1).unwrap();
        cfg.sparsity = SparsitySpec::Counts(vec![3]);
        let b = run_experiment_with_threads(&cfg, 1).unwrap();
        let a3: Vec<_> = a.rows.iter().filter(|r| r.s == 3).cloned().collect();
        assert_eq!(a3, b.rows);
    }

    #[test]
    fn canonical_order_and_pairing() {
        let t = run_experiment_with_threads(&small(), 2).unwrap();
        assert_eq!(t.rows.len(), 2 * 3 * 2);
        let keys: Vec<_> = t.rows.iter().map(|r| (r.s, r.method)).collect();
        assert_eq!(keys[0], (2, Method::L0L1Pr));
        assert_eq!(keys[1], (2, Method::Spr));
        assert_eq!(keys[6], (3, Method::L0L1Pr));
        for pair in t.rows.chunks(2) {
            assert_eq!(pair[0].seed, pair[1].seed);
        }
        assert_eq!(t, run_experiment_with_threads(&small(), 1).unwrap());
    }

    #[test]
    fn normalized_truth_and_noise() {
        let cfg = ExperimentConfig::default();
        let p = SweepPoint { n: 32, k_masks: 1, s: 4, snr: 30.0 };
        let d = make_trial_data(&cfg, &p, 5).unwrap();
        assert!((d.truth.signal.norm() - 1.0).abs() < 1e-12);
        let noise: f64 = d.clean.iter().zip(&d.measurements).map(|(a, b)| (a - b).powi(2)).sum();
        let clean: f64 = d.clean.iter().map(|a| a * a).sum();
        assert!((10.0 * (clean / noise).log10() - 30.0).abs() < 1e-9);
        // the estimator normalizes by the noisy norm, so it is only close
        let snr = metrics::measure_snr(&d.clean, &d.measurements).unwrap();
        assert!((snr - 30.0).abs() < 0.5, "{snr}");
    }
}
