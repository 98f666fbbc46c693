//! Experiment harness: sweep configuration, seeded paired trials, result
//! tables and plot data.

pub mod config;
pub mod runner;
pub mod table;

pub use config::{noisy_lambda, ExperimentConfig, SolverOverrides, SparsitySpec};
pub use runner::{
    make_trial_data, run_experiment, run_experiment_with_threads, run_trial, trial_seed,
    worker_count, SweepPoint, TrialData, THREADS_ENV,
};
pub use table::{
    emit_figure_data, emit_results, energy_trace_csv, load_results, AggregateRow, OutputFormat,
    ResultTable, FIGURE_FILES,
};
