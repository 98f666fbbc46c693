//! Noise injection, SNR, ambiguity-aligned NMSE and recovery statistics.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{self, RngSpec};

/// SNR values at or above this (including `+inf`) mean "no noise".
pub const NOISELESS_SNR_DB: f64 = 1001.0;

/// Default success threshold on aligned NMSE.
pub const DEFAULT_SUCCESS_THRESHOLD: f64 = 1e-3;

pub fn is_noiseless(snr_db: f64) -> bool {
    snr_db >= NOISELESS_SNR_DB
}

/// `b + sigma g` with `g` real Gaussian, scaled so that
/// `||sigma g|| / ||b|| = 10^(-snr_db / 20)` exactly.
pub fn add_noise(b: &[f64], snr_db: f64, rng: RngSpec) -> Result<Vec<f64>> {
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::invalid("snr_db must be a number or +inf"));
    }
    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if b_norm == 0.0 {
        return Err(Error::invalid("cannot set an SNR for all-zero measurements"));
    }
    if is_noiseless(snr_db) {
        return Ok(b.to_vec());
    }
    let mut rng = rng.rng();
    let g: Vec<f64> = (0..b.len()).map(|_| rng.sample(StandardNormal)).collect();
    let g_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let sigma = b_norm / (g_norm * 10f64.powf(snr_db / 20.0));
    Ok(b.iter().zip(&g).map(|(bi, gi)| bi + sigma * gi).collect())
}

/// `-20 min_{c = +-1} log10(||b - c b_hat|| / ||b_hat||)`; `+inf` for identical data.
pub fn measure_snr(clean: &[f64], noisy: &[f64]) -> Result<f64> {
    if clean.len() != noisy.len() {
        return Err(Error::invalid("measure_snr: length mismatch"));
    }
    let noisy_norm = noisy.iter().map(|v| v * v).sum::<f64>().sqrt();
    if noisy_norm == 0.0 {
        return Err(Error::invalid("measure_snr: noisy measurements are all zero"));
    }
    let dist = |c: f64| {
        clean
            .iter()
            .zip(noisy)
            .map(|(b, h)| (b - c * h).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let best = dist(1.0).min(dist(-1.0));
    if best == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-20.0 * (best / noisy_norm).log10())
}

/// Which trivial ambiguities are factored out before comparing signals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentPolicy {
    pub allow_shift: bool,
    pub allow_conj_flip: bool,
    pub allow_global_phase: bool,
}

impl AlignmentPolicy {
    /// Shift, conjugate flip and global phase: the Fourier magnitude ambiguities.
    pub const FOURIER: Self = Self {
        allow_shift: true,
        allow_conj_flip: true,
        allow_global_phase: true,
    };
    /// Global phase only; used for CDP where masks break the other symmetries.
    pub const PHASE_ONLY: Self = Self {
        allow_shift: false,
        allow_conj_flip: false,
        allow_global_phase: true,
    };
    pub const NONE: Self = Self {
        allow_shift: false,
        allow_conj_flip: false,
        allow_global_phase: false,
    };
}

/// `min ||x_hat - c T(x)|| / ||x||` over allowed transforms `T` of the truth
/// and unit scalars `c`.
///
/// Candidate shifts are scored with an FFT cross-correlation; every candidate
/// whose score is within rounding of the best is then evaluated directly, so
/// the result matches exhaustive search.
pub fn nmse(estimate: &[Complex64], truth: &[Complex64], policy: AlignmentPolicy) -> Result<f64> {
    let n = truth.len();
    if estimate.len() != n {
        return Err(Error::invalid(format!(
            "nmse: estimate length {} != truth length {n}",
            estimate.len()
        )));
    }
    let truth_norm = signal::norm(truth);
    if truth_norm == 0.0 {
        return Err(Error::invalid("nmse: truth is all zero"));
    }

    let flips: &[bool] = if policy.allow_conj_flip { &[false, true] } else { &[false] };
    let score = |corr: Complex64| {
        if policy.allow_global_phase {
            corr.norm()
        } else {
            corr.re
        }
    };

    // (flip, shift, score)
    let mut candidates: Vec<(bool, usize, f64)> = Vec::new();
    if policy.allow_shift {
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let ifft = planner.plan_fft_inverse(n);
        let mut xf = truth.to_vec();
        let mut yf = estimate.to_vec();
        fft.process(&mut xf);
        fft.process(&mut yf);
        for &flip in flips {
            // <shift_t x, y> = ifft(conj(X) Y)[t] / n; the flipped signal has spectrum conj(X)
            let mut prod: Vec<Complex64> = xf
                .iter()
                .zip(&yf)
                .map(|(xk, yk)| if flip { xk * yk } else { xk.conj() * yk })
                .collect();
            ifft.process(&mut prod);
            candidates.extend(
                prod.iter()
                    .enumerate()
                    .map(|(t, v)| (flip, t, score(v / n as f64))),
            );
        }
    } else {
        for &flip in flips {
            let corr = inner(&transform(truth, flip, 0), estimate);
            candidates.push((flip, 0, score(corr)));
        }
    }

    let best_score = candidates
        .iter()
        .map(|c| c.2)
        .fold(f64::NEG_INFINITY, f64::max);
    let slack = 1e-9 * (best_score.abs() + signal::norm(estimate) * truth_norm) + 1e-300;
    let mut best = f64::INFINITY;
    for &(flip, shift, s) in &candidates {
        if s >= best_score - slack {
            let t = transform(truth, flip, shift);
            best = best.min(aligned_distance(estimate, &t, policy.allow_global_phase));
        }
    }
    Ok(best / truth_norm)
}

/// `sum conj(a_i) b_i`
fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(u, v)| u.conj() * v).sum()
}

/// `T(x)_i = x_{(i - shift) mod n}`, optionally after the conjugate flip.
fn transform(x: &[Complex64], flip: bool, shift: usize) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let j = (i + n - shift % n) % n;
            if flip {
                x[(n - j) % n].conj()
            } else {
                x[j]
            }
        })
        .collect()
}

/// `min_c ||y - c t||`, with `c = <t, y> / |<t, y>|` (or 1 when that is 0 or
/// phase alignment is off).
fn aligned_distance(y: &[Complex64], t: &[Complex64], phase: bool) -> f64 {
    let c = if phase {
        let corr = inner(t, y);
        let m = corr.norm();
        if m > 0.0 {
            corr / m
        } else {
            Complex64::new(1.0, 0.0)
        }
    } else {
        Complex64::new(1.0, 0.0)
    };
    y.iter()
        .zip(t)
        .map(|(yi, ti)| (yi - c * ti).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "L0L2PR")]
    L0L2Pr,
    #[serde(rename = "L0L1PR")]
    L0L1Pr,
    #[serde(rename = "SPR")]
    Spr,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::L0L2Pr, Method::L0L1Pr, Method::Spr];

    pub fn label(self) -> &'static str {
        match self {
            Method::L0L2Pr => "L0L2PR",
            Method::L0L1Pr => "L0L1PR",
            Method::Spr => "SPR",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l0l2pr" => Ok(Method::L0L2Pr),
            "l0l1pr" => Ok(Method::L0L1Pr),
            "spr" => Ok(Method::Spr),
            other => Err(Error::invalid(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub method: Method,
    pub n: usize,
    pub s: usize,
    /// `+inf` for noiseless trials.
    #[serde(with = "nonfinite")]
    pub snr: f64,
    /// Number of CDP masks; 1 for the plain DFT.
    pub k_masks: usize,
    pub seed: u64,
    /// `+inf` when the solver diverged.
    #[serde(with = "nonfinite")]
    pub nmse: f64,
    pub success: bool,
    pub iterations: usize,
    pub wall_time_s: f64,
}

pub const TRIAL_CSV_HEADER: &str =
    "method,n,s,snr,k_masks,seed,nmse,success,iterations,wall_time_s";

impl TrialResult {
    pub fn to_csv_row(&self) -> String {
        let mut row = String::new();
        write!(
            row,
            "{},{},{},{},{},{},{},{},{},{}",
            self.method,
            self.n,
            self.s,
            fmt_f64(self.snr),
            self.k_masks,
            self.seed,
            fmt_f64(self.nmse),
            self.success,
            self.iterations,
            fmt_f64(self.wall_time_s)
        )
        .unwrap();
        row
    }

    pub fn from_csv_row(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 10 {
            return Err(Error::Parse(format!("expected 10 fields, got {}", f.len())));
        }
        let p = |i: usize| -> Result<f64> {
            f[i].parse()
                .map_err(|_| Error::Parse(format!("field {i}: cannot parse `{}`", f[i])))
        };
        let u = |i: usize| -> Result<u64> {
            f[i].parse()
                .map_err(|_| Error::Parse(format!("field {i}: cannot parse `{}`", f[i])))
        };
        Ok(Self {
            method: f[0].parse().map_err(|e: Error| Error::Parse(e.to_string()))?,
            n: u(1)? as usize,
            s: u(2)? as usize,
            snr: p(3)?,
            k_masks: u(4)? as usize,
            seed: u(5)?,
            nmse: p(6)?,
            success: f[7]
                .parse()
                .map_err(|_| Error::Parse(format!("field 7: cannot parse `{}`", f[7])))?,
            iterations: u(8)? as usize,
            wall_time_s: p(9)?,
        })
    }
}

/// Shortest round-trip decimal representation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// JSON has no infinities; non-finite floats travel as the strings `"inf"`,
/// `"-inf"` and `"NaN"`.
pub mod nonfinite {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&super::fmt_f64(*v))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Fraction of successful trials.
pub fn recovery_probability(results: &[TrialResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::invalid("recovery_probability: no trials"));
    }
    let ok = results.iter().filter(|r| r.success).count();
    Ok(ok as f64 / results.len() as f64)
}
