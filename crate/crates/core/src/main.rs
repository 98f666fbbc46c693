//! Command-line front end.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 1 runtime failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sparse_pr::admm::{admm_solve, energy};
use sparse_pr::bench::{
    self, emit_figure_data, emit_results, energy_trace_csv, ExperimentConfig, OutputFormat,
};
use sparse_pr::metrics::{self, fmt_f64, AlignmentPolicy, Method};
use sparse_pr::operators::{self, MeasurementOperator, OperatorKind};
use sparse_pr::signal::{self, ComplexSignal, RngSpec};
use sparse_pr::spr::spr_solve;
use sparse_pr::{oracle, Error, Result};

#[derive(Parser)]
#[command(name = "sparse-pr", version, about = "Sparse phase retrieval from Fourier magnitudes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Recover one signal from magnitude measurements.
    Solve(SolveArgs),
    /// Run a seeded sweep of paired trials.
    Bench(BenchArgs),
    /// Draw random octanary CDP masks.
    Masks(MasksArgs),
    /// Print brute-force reference values for the magnitude-fit kernels.
    Oracle(OracleArgs),
}

/// Solver parameters shared by `solve` and `bench`.
#[derive(Args, Default)]
struct SolverFlags {
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long = "r1")]
    r1_0: Option<f64>,
    #[arg(long = "r2")]
    r2_0: Option<f64>,
    #[arg(long)]
    r_max: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
}

impl SolverFlags {
    fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        let pairs = [
            ("lambda", self.lambda.map(fmt_f64)),
            ("rho", self.rho.map(fmt_f64)),
            ("r1_0", self.r1_0.map(fmt_f64)),
            ("r2_0", self.r2_0.map(fmt_f64)),
            ("r_max", self.r_max.map(fmt_f64)),
            ("max_iters", self.max_iters.map(|v| v.to_string())),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        Ok(())
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Ground-truth signal (`.csv` with `index,re,im` or `.json`); enables NMSE.
    #[arg(long)]
    signal: Option<PathBuf>,
    /// Measurements (`index,b` CSV). Computed from --signal when omitted.
    #[arg(long)]
    measurements: Option<PathBuf>,
    #[arg(long, default_value = "l0l1pr")]
    method: String,
    #[arg(long, default_value = "dft")]
    operator: String,
    /// CDP masks file (`.csv` or `.json`).
    #[arg(long)]
    masks: Option<PathBuf>,
    /// Draw this many CDP masks from --seed instead of reading --masks.
    #[arg(long)]
    k: Option<usize>,
    /// Sparsity budget for SPR; defaults to the support size of --signal.
    #[arg(long)]
    s: Option<usize>,
    /// Add noise at this SNR (dB) to measurements computed from --signal and
    /// pick the noisy parameter defaults.
    #[arg(long)]
    snr: Option<f64>,
    /// Assert the measurements are noiseless magnitudes (all nonnegative).
    #[arg(long)]
    no_noise: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    solver: SolverFlags,
    /// Write the estimate here (`.csv` or `.json`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write solver diagnostics as JSON.
    #[arg(long)]
    diagnostics: Option<PathBuf>,
    /// Write the energy trace CSV into this directory.
    #[arg(long)]
    emit_figure_data: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// INI-style experiment file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated methods (l0l2pr, l0l1pr, spr).
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    operator: Option<String>,
    /// CDP mask counts, e.g. `1,2,3,4`.
    #[arg(long)]
    k: Option<String>,
    /// Signal lengths, e.g. `128` or `512,1024`.
    #[arg(long)]
    n: Option<String>,
    /// Sparsity counts; ranges like `2..30:2` are accepted.
    #[arg(long)]
    s: Option<String>,
    /// Sparsity ratios in percent of n.
    #[arg(long)]
    sr: Option<String>,
    /// SNR values in dB; `inf` means noiseless.
    #[arg(long)]
    snr: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    solver: SolverFlags,
    /// Extra `key=value` settings, as in the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,
    #[arg(long, default_value = "csv")]
    format: String,
    /// Write plot-ready aggregate CSVs into this directory.
    #[arg(long)]
    emit_figure_data: Option<PathBuf>,
    /// Record zero wall times so reruns are byte-identical.
    #[arg(long)]
    no_timing: bool,
    /// Worker threads (also capped by SPARSE_PR_THREADS).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct MasksArgs {
    #[arg(long)]
    k: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: String,
}

#[derive(Args)]
struct OracleArgs {
    /// `l2`, `l1` or `cst`.
    #[arg(long, default_value = "l2")]
    kernel: String,
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
    }
    fs::write(path, text).map_err(|e| Error::Io { path: path.into(), source: e })
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "json")
}

fn parse_operator(s: &str) -> Result<OperatorKind> {
    match s.to_ascii_lowercase().as_str() {
        "dft" => Ok(OperatorKind::UnitaryDft),
        "cdp" => Ok(OperatorKind::Cdp),
        other => Err(Error::Config {
            field: "operator".into(),
            message: format!("unknown operator `{other}`"),
        }),
    }
}

fn as_config(field: &str, e: Error) -> Error {
    match e {
        Error::InvalidArgument(m) | Error::Parse(m) => Error::Config { field: field.into(), message: m },
        other => other,
    }
}

fn solve(args: SolveArgs) -> Result<()> {
    let method: Method = args.method.parse().map_err(|e| as_config("method", e))?;
    let kind = parse_operator(&args.operator)?;
    let truth = match &args.signal {
        Some(p) => {
            let text = read(p)?;
            Some(if is_json(p) { ComplexSignal::from_json(&text)? } else { ComplexSignal::from_csv(&text)? })
        }
        None => None,
    };
    let snr = args.snr.unwrap_or(f64::INFINITY);
    if args.no_noise && args.snr.is_some_and(|s| !metrics::is_noiseless(s)) {
        return Err(Error::Config { field: "snr".into(), message: "conflicts with --no-noise".into() });
    }

    let n = match (&truth, &args.measurements) {
        (Some(t), _) => t.len(),
        (None, Some(_)) => 0, // fixed below from the file
        (None, None) => {
            return Err(Error::Config {
                field: "measurements".into(),
                message: "need --measurements or --signal".into(),
            })
        }
    };
    let file_b = match &args.measurements {
        Some(p) => Some(signal::measurements_from_csv(&read(p)?)?),
        None => None,
    };

    let op = match kind {
        OperatorKind::UnitaryDft => {
            let n = if n > 0 { n } else { file_b.as_ref().map_or(0, Vec::len) };
            MeasurementOperator::unitary_dft(n)?
        }
        OperatorKind::Cdp => {
            let masks = match (&args.masks, args.k) {
                (Some(p), _) => {
                    let text = read(p)?;
                    if is_json(p) { operators::masks_from_json(&text)? } else { operators::masks_from_csv(&text)? }
                }
                (None, Some(k)) if n > 0 => {
                    operators::make_octanary_masks(k, n, RngSpec::new(args.seed).with_stream(2))?
                }
                _ => {
                    return Err(Error::Config {
                        field: "masks".into(),
                        message: "cdp needs --masks, or --k together with --signal".into(),
                    })
                }
            };
            MeasurementOperator::cdp(masks)?
        }
    };
    if let Some(t) = &truth {
        if t.len() != op.n() {
            return Err(Error::Config { field: "signal".into(), message: "length does not match the masks".into() });
        }
    }

    let b = match (file_b, &truth) {
        (Some(b), _) => b,
        (None, Some(t)) => {
            let clean = op.magnitudes(t)?;
            metrics::add_noise(&clean, snr, RngSpec::new(args.seed).with_stream(1))?
        }
        (None, None) => unreachable!(),
    };
    if b.len() != op.output_len() {
        return Err(Error::Config {
            field: "measurements".into(),
            message: format!("expected {} values, found {}", op.output_len(), b.len()),
        });
    }
    if args.no_noise {
        if let Some(i) = b.iter().position(|&v| v < 0.0) {
            return Err(Error::Config {
                field: "measurements".into(),
                message: format!("negative value at index {i}, but --no-noise was given"),
            });
        }
    }

    let mut cfg = ExperimentConfig { operator: kind, ..Default::default() };
    if kind == OperatorKind::Cdp {
        cfg.k_list = vec![op.num_masks()];
    }
    args.solver.apply(&mut cfg)?;
    let policy = match kind {
        OperatorKind::UnitaryDft => AlignmentPolicy::FOURIER,
        OperatorKind::Cdp => AlignmentPolicy::PHASE_ONLY,
    };

    let (estimate, iterations, wall, diag_json, trace) = match method {
        Method::Spr => {
            if kind == OperatorKind::Cdp {
                return Err(Error::Config { field: "method".into(), message: "SPR needs the dft operator".into() });
            }
            let s = match (args.s, &truth) {
                (Some(s), _) => s,
                (None, Some(t)) => t.l0_norm().max(1),
                (None, None) => {
                    return Err(Error::Config { field: "s".into(), message: "SPR needs --s".into() })
                }
            };
            let mut sc = cfg.spr_config(s, snr, RngSpec::new(args.seed).with_stream(4))?;
            if let Some(m) = args.solver.max_iters {
                sc.max_iters = m;
            }
            let out = spr_solve(&b, &sc)?;
            let diag = serde_json::json!({
                "iterations": out.iterations,
                "converged": out.converged,
                "wall_time": out.wall_time,
            });
            (out.estimate, out.iterations, out.wall_time, diag.to_string(), None)
        }
        _ => {
            let sc = cfg.solver_config(method, snr, RngSpec::new(args.seed).with_stream(3))?;
            let out = admm_solve(&op, &b, &sc)?;
            let d = &out.diagnostics;
            println!(
                "final_energy={}",
                fmt_f64(energy(&out.state.q, &out.state.z, &b, sc.lambda, sc.fidelity))
            );
            let trace = energy_trace_csv(method, &d.sampled_iterations, &d.energy_trace);
            (out.estimate.clone(), d.iterations, d.wall_time, d.to_json(), Some(trace))
        }
    };

    println!("method={method}");
    println!("iterations={iterations}");
    println!("nonzeros={}", estimate.l0_norm());
    println!("wall_time_s={}", fmt_f64(wall));
    if let Some(t) = &truth {
        println!("nmse={}", fmt_f64(metrics::nmse(&estimate, t, policy)?));
    }
    if let Some(p) = &args.out {
        write(p, &if is_json(p) { estimate.to_json() + "\n" } else { estimate.to_csv() })?;
    }
    if let Some(p) = &args.diagnostics {
        write(p, &(diag_json + "\n"))?;
    }
    if let (Some(dir), Some(trace)) = (&args.emit_figure_data, trace) {
        write(&dir.join("energy_trace.csv"), &trace)?;
    }
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::parse(&read(p)?)?,
        None => ExperimentConfig::default(),
    };
    let flags = [
        ("methods", &args.method),
        ("operator", &args.operator),
        ("k", &args.k),
        ("n", &args.n),
        ("s", &args.s),
        ("sr", &args.sr),
        ("snr", &args.snr),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    if let Some(t) = args.trials {
        cfg.set("trials", &t.to_string())?;
    }
    if let Some(s) = args.seed {
        cfg.base_seed = s;
    }
    if args.operator.as_deref().is_some_and(|o| o.eq_ignore_ascii_case("dft")) && args.k.is_none() {
        cfg.k_list = vec![1];
    }
    args.solver.apply(&mut cfg)?;
    for kv in &args.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config {
            field: kv.clone(),
            message: "expected KEY=VALUE".into(),
        })?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.no_timing |= args.no_timing;
    let format: OutputFormat = args.format.parse()?;
    cfg.validate()?;

    let threads = match args.threads {
        Some(t) => t.min(bench::worker_count()).max(1),
        None => bench::worker_count(),
    };
    let table = bench::run_experiment_with_threads(&cfg, threads)?;
    for path in emit_results(&table, &args.out, format)? {
        eprintln!("wrote {}", path.display());
    }
    if let Some(dir) = &args.emit_figure_data {
        for path in emit_figure_data(&table, dir)? {
            eprintln!("wrote {}", path.display());
        }
    }
    print!("{}", table.aggregates_to_csv());
    Ok(())
}

fn masks(args: MasksArgs) -> Result<()> {
    let masks = operators::make_octanary_masks(args.k, args.n, RngSpec::new(args.seed))
        .map_err(|e| as_config("k", e))?;
    let text = match args.format.parse::<OutputFormat>()? {
        OutputFormat::Csv => operators::masks_to_csv(&masks),
        OutputFormat::Json => operators::masks_to_json(&masks) + "\n",
    };
    match &args.out {
        Some(p) => write(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn oracle(args: OracleArgs) -> Result<()> {
    let vectors = oracle::generate_vectors(&args.kernel, args.count, RngSpec::new(args.seed))
        .map_err(|e| as_config("kernel", e))?;
    for v in vectors {
        println!("{}", serde_json::to_string(&v).expect("finite oracle output"));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(), // 2 for usage errors, 0 for --help/--version
    };
    let result = match cli.command {
        Command::Solve(a) => solve(a),
        Command::Bench(a) => bench(a),
        Command::Masks(a) => masks(a),
        Command::Oracle(a) => oracle(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
