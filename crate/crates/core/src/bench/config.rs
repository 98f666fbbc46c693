//! Experiment configuration and its INI-style text format.
//!
//! ```text
//! # noiseless sparsity sweep
//! methods = l0l2pr, l0l1pr, spr
//! operator = dft
//! n = 128
//! s = 2..30:2
//! snr = inf
//! trials = 100
//! seed = 7
//!
//! [l0l1pr]
//! lambda = 1e-3
//! ```
//!
//! Keys inside a `[method]` section (or written as `method.key`) override the
//! solver parameters of that method only. Top-level `lambda`, `rho`,
//! `r1_0`, `r2_0`, `r_max` and `max_iters` apply to both L0 methods.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::admm::SolverConfig;
use crate::error::{Error, Result};
use crate::metrics::{self, Method, DEFAULT_SUCCESS_THRESHOLD};
use crate::operators::OperatorKind;
use crate::signal::RngSpec;
use crate::spr::SprConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SparsitySpec {
    /// Absolute nonzero counts.
    Counts(Vec<usize>),
    /// Sparsity ratios in percent of `n`.
    RatioPercent(Vec<f64>),
}

impl SparsitySpec {
    /// Sparsity levels for signal length `n`. Ratios round up, so 8% of 1024
    /// gives 82.
    pub fn levels(&self, n: usize) -> Vec<usize> {
        match self {
            SparsitySpec::Counts(v) => v.clone(),
            SparsitySpec::RatioPercent(v) => v
                .iter()
                .map(|sr| ((sr * n as f64 / 100.0) - 1e-9).ceil().max(1.0) as usize)
                .collect(),
        }
    }
}

/// Optional per-method solver parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverOverrides {
    pub lambda: Option<f64>,
    pub rho: Option<f64>,
    pub r1_0: Option<f64>,
    pub r2_0: Option<f64>,
    pub r_max: Option<f64>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
}

impl SolverOverrides {
    fn merged_over(&self, base: &SolverOverrides) -> SolverOverrides {
        SolverOverrides {
            lambda: self.lambda.or(base.lambda),
            rho: self.rho.or(base.rho),
            r1_0: self.r1_0.or(base.r1_0),
            r2_0: self.r2_0.or(base.r2_0),
            r_max: self.r_max.or(base.r_max),
            max_iters: self.max_iters.or(base.max_iters),
            tol: self.tol.or(base.tol),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub methods: Vec<Method>,
    pub operator: OperatorKind,
    /// Mask counts swept for CDP; `[1]` for the DFT.
    pub k_list: Vec<usize>,
    pub n_list: Vec<usize>,
    pub sparsity: SparsitySpec,
    /// dB; `+inf` (or >= 1001) is noiseless.
    pub snr_list: Vec<f64>,
    pub trials: usize,
    pub base_seed: u64,
    /// Applies to both L0 methods.
    pub common: SolverOverrides,
    pub per_method: BTreeMap<Method, SolverOverrides>,
    pub success_threshold: f64,
    /// Rescale every ground truth to unit l2 norm before measuring.
    pub normalize: bool,
    pub complex_valued: bool,
    /// Write zero wall times so repeated runs are byte-identical.
    pub no_timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::L0L1Pr],
            operator: OperatorKind::UnitaryDft,
            k_list: vec![1],
            n_list: vec![128],
            sparsity: SparsitySpec::Counts(vec![10]),
            snr_list: vec![f64::INFINITY],
            trials: 100,
            base_seed: 0,
            common: SolverOverrides::default(),
            per_method: BTreeMap::new(),
            success_threshold: DEFAULT_SUCCESS_THRESHOLD,
            normalize: true,
            complex_valued: true,
            no_timing: false,
        }
    }
}

/// Default lambda per SNR (dB) for the noisy experiments.
pub fn noisy_lambda(method: Method, snr_db: f64) -> Option<f64> {
    let col = [40.0, 30.0, 20.0].iter().position(|&s| s == snr_db)?;
    match method {
        Method::L0L2Pr => Some([1e-4, 5e-4, 3e-3][col]),
        Method::L0L1Pr => Some([2e-2, 8e-3, 1.5e-3][col]),
        Method::Spr => None,
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::config("methods", "at least one method is required"));
        }
        if self.n_list.is_empty() || self.n_list.contains(&0) {
            return Err(Error::config("n", "need a nonempty list of lengths >= 1"));
        }
        match &self.sparsity {
            SparsitySpec::Counts(v) if v.is_empty() || v.contains(&0) => {
                return Err(Error::config("s", "need a nonempty list of sparsities >= 1"))
            }
            SparsitySpec::RatioPercent(v)
                if v.is_empty() || v.iter().any(|r| !(*r > 0.0 && *r <= 100.0)) =>
            {
                return Err(Error::config("sr", "ratios must lie in (0, 100]"))
            }
            _ => {}
        }
        for &n in &self.n_list {
            if let Some(s) = self.sparsity.levels(n).into_iter().find(|&s| s > n) {
                return Err(Error::config("s", format!("sparsity {s} exceeds n = {n}")));
            }
        }
        if self.snr_list.is_empty() || self.snr_list.iter().any(|s| s.is_nan()) {
            return Err(Error::config("snr", "need a nonempty list of SNR values"));
        }
        if self.trials == 0 {
            return Err(Error::config("trials", "must be >= 1"));
        }
        if self.k_list.is_empty() || self.k_list.contains(&0) {
            return Err(Error::config("k", "mask counts must be >= 1"));
        }
        if self.operator == OperatorKind::UnitaryDft && self.k_list != [1] {
            return Err(Error::config("k", "mask counts only apply to the cdp operator"));
        }
        if self.operator == OperatorKind::Cdp && self.methods.contains(&Method::Spr) {
            return Err(Error::config("methods", "SPR is only defined for the dft operator"));
        }
        if !(self.success_threshold > 0.0) {
            return Err(Error::config("success_threshold", "must be > 0"));
        }
        // resolve every solver config once so errors surface before running
        for &m in &self.methods {
            for &snr in &self.snr_list {
                match m {
                    Method::Spr => {
                        self.spr_config(1, snr, RngSpec::new(0))?;
                    }
                    _ => {
                        self.solver_config(m, snr, RngSpec::new(0))?;
                    }
                }
            }
        }
        Ok(())
    }

    fn overrides_for(&self, method: Method) -> SolverOverrides {
        self.per_method
            .get(&method)
            .cloned()
            .unwrap_or_default()
            .merged_over(&self.common)
    }

    /// Solver parameters for an L0 method at a given noise level.
    ///
    /// Starts from the method defaults (or the CDP parameters for the cdp
    /// operator). Noisy points switch to `rho = 1.0001` and the `noisy_lambda`
    /// value; other SNRs need an explicit lambda.
    pub fn solver_config(&self, method: Method, snr_db: f64, rng: RngSpec) -> Result<SolverConfig> {
        let mut cfg = match method {
            Method::L0L2Pr => SolverConfig::l0l2pr(),
            Method::L0L1Pr => SolverConfig::l0l1pr(),
            Method::Spr => return Err(Error::invalid("SPR has no ADMM solver config")),
        };
        if self.operator == OperatorKind::Cdp {
            cfg.lambda = 2e-2;
            cfg.r1_0 = 1e-5;
            cfg.r2_0 = 1e-6;
        }
        let ov = self.overrides_for(method);
        let key = method.label().to_ascii_lowercase();
        if !metrics::is_noiseless(snr_db) {
            cfg.rho = SolverConfig::NOISY_RHO;
            match (ov.lambda, noisy_lambda(method, snr_db)) {
                (Some(_), _) => {}
                (None, Some(l)) => cfg.lambda = l,
                (None, None) => {
                    return Err(Error::config(
                        format!("{key}.lambda"),
                        format!("no default lambda for SNR {snr_db} dB; set lambda explicitly"),
                    ))
                }
            }
        }
        if let Some(v) = ov.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = ov.rho {
            cfg.rho = v;
        }
        if let Some(v) = ov.r1_0 {
            cfg.r1_0 = v;
        }
        if let Some(v) = ov.r2_0 {
            cfg.r2_0 = v;
        }
        if let Some(v) = ov.r_max {
            cfg.r_max = v;
        }
        cfg.max_iters = ov.max_iters;
        cfg.rng = rng;
        cfg.validate().map_err(|e| match e {
            Error::Config { field, message } => Error::config(format!("{key}.{field}"), message),
            other => other,
        })?;
        Ok(cfg)
    }

    pub fn spr_config(&self, s: usize, _snr_db: f64, rng: RngSpec) -> Result<SprConfig> {
        let ov = self.overrides_for(Method::Spr);
        let mut cfg = SprConfig { rng, ..SprConfig::new(s) };
        if let Some(m) = self.per_method.get(&Method::Spr).and_then(|o| o.max_iters) {
            cfg.max_iters = m;
        }
        if let Some(t) = ov.tol {
            cfg.tol = t;
        }
        cfg.validate().map_err(|e| match e {
            Error::Config { field, message } => Error::config(format!("spr.{field}"), message),
            other => other,
        })?;
        Ok(cfg)
    }

    /// Parse the INI-style text format on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut section: Option<String> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split(['#', ';']).next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = Some(name.trim().to_ascii_lowercase());
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}", lineno + 1), "expected `key = value`")
            })?;
            let key = key.trim().to_ascii_lowercase();
            let key = match &section {
                Some(sec) => format!("{sec}.{key}"),
                None => key,
            };
            cfg.set(&key, value.trim())?;
        }
        Ok(cfg)
    }

    /// Set one key; used by both the file parser and CLI flag overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let err = |msg: String| Error::config(key, msg);
        if let Some((method, param)) = key.split_once('.') {
            let method: Method = method
                .parse()
                .map_err(|_| err(format!("unknown section `{method}`")))?;
            let ov = self.per_method.entry(method).or_default();
            return set_override(ov, param, value).map_err(err);
        }
        match key {
            "methods" | "method" => {
                self.methods = split_list(value)
                    .map(Method::from_str)
                    .collect::<Result<_>>()
                    .map_err(|e| err(e.to_string()))?;
            }
            "operator" => {
                self.operator = match value.to_ascii_lowercase().as_str() {
                    "dft" => OperatorKind::UnitaryDft,
                    "cdp" => OperatorKind::Cdp,
                    other => return Err(err(format!("unknown operator `{other}`"))),
                }
            }
            "k" | "k_masks" => self.k_list = parse_usize_list(value).map_err(err)?,
            "n" => self.n_list = parse_usize_list(value).map_err(err)?,
            "s" => self.sparsity = SparsitySpec::Counts(parse_usize_list(value).map_err(err)?),
            "sr" => self.sparsity = SparsitySpec::RatioPercent(parse_f64_list(value).map_err(err)?),
            "snr" => self.snr_list = parse_f64_list(value).map_err(err)?,
            "trials" => self.trials = parse_one(value).map_err(err)?,
            "seed" => self.base_seed = parse_one(value).map_err(err)?,
            "success_threshold" => self.success_threshold = parse_one(value).map_err(err)?,
            "normalize" => self.normalize = parse_one(value).map_err(err)?,
            "complex" => self.complex_valued = parse_one(value).map_err(err)?,
            "no_timing" => self.no_timing = parse_one(value).map_err(err)?,
            param => set_override(&mut self.common, param, value).map_err(err)?,
        }
        Ok(())
    }
}

fn set_override(ov: &mut SolverOverrides, param: &str, value: &str) -> std::result::Result<(), String> {
    match param {
        "lambda" => ov.lambda = Some(parse_one(value)?),
        "rho" => ov.rho = Some(parse_one(value)?),
        "r1_0" | "r1" => ov.r1_0 = Some(parse_one(value)?),
        "r2_0" | "r2" => ov.r2_0 = Some(parse_one(value)?),
        "r_max" => ov.r_max = Some(parse_one(value)?),
        "max_iters" => ov.max_iters = Some(parse_one(value)?),
        "tol" => ov.tol = Some(parse_one(value)?),
        other => return Err(format!("unknown key `{other}`")),
    }
    Ok(())
}

fn split_list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_one<T: FromStr>(value: &str) -> std::result::Result<T, String> {
    value
        .trim()
        .parse()
        .map_err(|_| format!("cannot parse `{}`", value.trim()))
}

/// Comma list whose items may be ranges `a..b` or `a..b:step` (inclusive).
fn parse_usize_list(value: &str) -> std::result::Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for item in split_list(value) {
        if let Some((lo, rest)) = item.split_once("..") {
            let (hi, step) = match rest.split_once(':') {
                Some((h, s)) => (h, parse_one::<usize>(s)?),
                None => (rest, 1),
            };
            let (lo, hi): (usize, usize) = (parse_one(lo)?, parse_one(hi)?);
            if step == 0 || lo > hi {
                return Err(format!("bad range `{item}`"));
            }
            out.extend((lo..=hi).step_by(step));
        } else {
            out.push(parse_one(item)?);
        }
    }
    if out.is_empty() {
        return Err("empty list".into());
    }
    Ok(out)
}

/// Comma list of floats; `inf`/`none` mean noiseless when used for SNR.
fn parse_f64_list(value: &str) -> std::result::Result<Vec<f64>, String> {
    let out: Vec<f64> = split_list(value)
        .map(|item| match item.to_ascii_lowercase().as_str() {
            "inf" | "none" | "noiseless" => Ok(f64::INFINITY),
            _ => parse_one(item),
        })
        .collect::<std::result::Result<_, _>>()?;
    if out.is_empty() {
        return Err("empty list".into());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_levels_round_up() {
        let sp = SparsitySpec::RatioPercent(vec![2.0, 4.0, 6.0, 8.0, 10.0]);
        assert_eq!(sp.levels(1024), vec![21, 41, 62, 82, 103]);
        assert_eq!(SparsitySpec::RatioPercent(vec![8.0]).levels(100), vec![8]);
    }

    #[test]
    fn parses_sections_and_ranges() {
        let cfg = ExperimentConfig::parse(
            "methods = l0l2pr, spr\n n = 64,128\n s = 2..10:4 # comment\n snr = inf\n\
             [l0l2pr]\nlambda = 2e-4\n[spr]\nmax_iters = 50\n",
        )
        .unwrap();
        assert_eq!(cfg.methods, vec![Method::L0L2Pr, Method::Spr]);
        assert_eq!(cfg.n_list, vec![64, 128]);
        assert_eq!(cfg.sparsity, SparsitySpec::Counts(vec![2, 6, 10]));
        assert_eq!(cfg.per_method[&Method::L0L2Pr].lambda, Some(2e-4));
        assert_eq!(cfg.per_method[&Method::Spr].max_iters, Some(50));
        cfg.validate().unwrap();
    }

    #[test]
    fn errors_carry_field_paths() {
        match ExperimentConfig::parse("[l0l1pr]\nlambda = abc\n") {
            Err(Error::Config { field, .. }) => assert_eq!(field, "l0l1pr.lambda"),
            other => panic!("{other:?}"),
        }
        match ExperimentConfig::parse("bogus = 1\n") {
            Err(Error::Config { field, .. }) => assert_eq!(field, "bogus"),
            other => panic!("{other:?}"),
        }
        let cfg = ExperimentConfig { trials: 0, ..Default::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config { field, .. }) if field == "trials"));
    }

    #[test]
    fn noisy_defaults_follow_table() {
        let cfg = ExperimentConfig::default();
        let sc = cfg.solver_config(Method::L0L1Pr, 30.0, RngSpec::new(0)).unwrap();
        assert_eq!((sc.lambda, sc.rho), (8e-3, 1.0001));
        let sc = cfg.solver_config(Method::L0L2Pr, 20.0, RngSpec::new(0)).unwrap();
        assert_eq!(sc.lambda, 3e-3);
        let sc = cfg.solver_config(Method::L0L2Pr, f64::INFINITY, RngSpec::new(0)).unwrap();
        assert_eq!((sc.lambda, sc.rho), (1e-4, 1.0005));
        match cfg.solver_config(Method::L0L1Pr, 25.0, RngSpec::new(0)) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "l0l1pr.lambda"),
            other => panic!("{other:?}"),
        }
        let mut cfg = cfg;
        cfg.set("lambda", "1e-3").unwrap();
        assert_eq!(cfg.solver_config(Method::L0L1Pr, 25.0, RngSpec::new(0)).unwrap().lambda, 1e-3);
    }

    #[test]
    fn cdp_rules() {
        let mut cfg = ExperimentConfig { operator: OperatorKind::Cdp, k_list: vec![1, 4], ..Default::default() };
        cfg.validate().unwrap();
        let sc = cfg.solver_config(Method::L0L1Pr, f64::INFINITY, RngSpec::new(0)).unwrap();
        assert_eq!((sc.lambda, sc.r1_0, sc.r2_0), (2e-2, 1e-5, 1e-6));
        cfg.methods.push(Method::Spr);
        assert!(cfg.validate().is_err());
        let dft = ExperimentConfig { k_list: vec![2], ..Default::default() };
        assert!(dft.validate().is_err());
    }

    #[test]
    fn fixed_step_needs_iteration_cap() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("rho", "1").unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config { field, .. }) if field == "l0l1pr.max_iters"));
        cfg.set("max_iters", "100").unwrap();
        cfg.validate().unwrap();
    }
}
