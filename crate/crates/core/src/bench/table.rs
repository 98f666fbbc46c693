//! Trial tables, aggregates and their file formats.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{self, fmt_f64, nonfinite, Method, TrialResult, TRIAL_CSV_HEADER};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::config("format", format!("unknown format `{other}`"))),
        }
    }
}

/// Summary of every trial sharing (method, n, k, s, snr).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: Method,
    pub n: usize,
    pub s: usize,
    #[serde(with = "nonfinite")]
    pub snr: f64,
    pub k_masks: usize,
    pub trials: usize,
    pub successes: usize,
    pub recovery_probability: f64,
    /// Over all trials; infinite if any trial diverged.
    #[serde(with = "nonfinite")]
    pub mean_nmse: f64,
    #[serde(with = "nonfinite")]
    pub median_nmse: f64,
    /// Over successful trials only; NaN when there are none.
    #[serde(with = "nonfinite")]
    pub mean_runtime_s: f64,
}

pub const AGGREGATE_CSV_HEADER: &str =
    "method,n,s,snr,k_masks,trials,successes,recovery_probability,mean_nmse,median_nmse,mean_runtime_s";

impl AggregateRow {
    fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.method,
            self.n,
            self.s,
            fmt_f64(self.snr),
            self.k_masks,
            self.trials,
            self.successes,
            fmt_f64(self.recovery_probability),
            fmt_f64(self.mean_nmse),
            fmt_f64(self.median_nmse),
            fmt_f64(self.mean_runtime_s)
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<TrialResult>,
}

#[derive(Serialize, Deserialize)]
struct JsonDoc {
    rows: Vec<TrialResult>,
    aggregates: Vec<AggregateRow>,
}

fn same_group(a: &TrialResult, b: &TrialResult) -> bool {
    a.method == b.method
        && a.n == b.n
        && a.s == b.s
        && a.k_masks == b.k_masks
        && a.snr.to_bits() == b.snr.to_bits()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

impl ResultTable {
    pub fn new(rows: Vec<TrialResult>) -> Self {
        Self { rows }
    }

    /// One row per group, in order of first appearance.
    pub fn aggregates(&self) -> Vec<AggregateRow> {
        let mut groups: Vec<Vec<&TrialResult>> = Vec::new();
        for r in &self.rows {
            match groups.iter_mut().find(|g| same_group(g[0], r)) {
                Some(g) => g.push(r),
                None => groups.push(vec![r]),
            }
        }
        groups
            .into_iter()
            .map(|g| {
                let first = g[0];
                let trials = g.len();
                let ok: Vec<&&TrialResult> = g.iter().filter(|r| r.success).collect();
                let nmse: Vec<f64> = g.iter().map(|r| r.nmse).collect();
                AggregateRow {
                    method: first.method,
                    n: first.n,
                    s: first.s,
                    snr: first.snr,
                    k_masks: first.k_masks,
                    trials,
                    successes: ok.len(),
                    recovery_probability: ok.len() as f64 / trials as f64,
                    mean_nmse: nmse.iter().sum::<f64>() / trials as f64,
                    median_nmse: median(nmse),
                    mean_runtime_s: if ok.is_empty() {
                        f64::NAN
                    } else {
                        ok.iter().map(|r| r.wall_time_s).sum::<f64>() / ok.len() as f64
                    },
                }
            })
            .collect()
    }

    pub fn filter(&self, pred: impl Fn(&TrialResult) -> bool) -> ResultTable {
        Self::new(self.rows.iter().filter(|r| pred(r)).cloned().collect())
    }

    pub fn recovery_probability(&self) -> Result<f64> {
        metrics::recovery_probability(&self.rows)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{TRIAL_CSV_HEADER}\n");
        for r in &self.rows {
            writeln!(out, "{}", r.to_csv_row()).unwrap();
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == TRIAL_CSV_HEADER => {}
            other => return Err(Error::Parse(format!("unexpected header {other:?}"))),
        }
        let rows = lines
            .enumerate()
            .map(|(i, l)| {
                TrialResult::from_csv_row(l).map_err(|e| Error::Parse(format!("row {i}: {e}")))
            })
            .collect::<Result<_>>()?;
        Ok(Self { rows })
    }

    pub fn aggregates_to_csv(&self) -> String {
        let mut out = format!("{AGGREGATE_CSV_HEADER}\n");
        for a in self.aggregates() {
            writeln!(out, "{}", a.to_csv_row()).unwrap();
        }
        out
    }

    /// `{"rows": [...], "aggregates": [...]}`, newline-terminated.
    pub fn to_json(&self) -> String {
        let doc = JsonDoc { rows: self.rows.clone(), aggregates: self.aggregates() };
        let mut s = serde_json::to_string_pretty(&doc).expect("table serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: JsonDoc = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Ok(Self { rows: doc.rows })
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// `results.csv` -> `results_aggregate.csv`.
pub fn aggregate_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
    let ext = path.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    path.with_file_name(format!("{stem}_aggregate.{ext}"))
}

/// Write the table. CSV writes the per-trial file plus a sibling
/// `_aggregate` file; JSON holds both in one document. Returns written paths.
pub fn emit_results(table: &ResultTable, path: &Path, format: OutputFormat) -> Result<Vec<PathBuf>> {
    match format {
        OutputFormat::Csv => {
            let agg = aggregate_path(path);
            write_file(path, &table.to_csv())?;
            write_file(&agg, &table.aggregates_to_csv())?;
            Ok(vec![path.to_path_buf(), agg])
        }
        OutputFormat::Json => {
            write_file(path, &table.to_json())?;
            Ok(vec![path.to_path_buf()])
        }
    }
}

pub fn load_results(path: &Path) -> Result<ResultTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => ResultTable::from_json(&text),
        _ => ResultTable::from_csv(&text),
    }
}

/// File names written by [`emit_figure_data`].
pub const FIGURE_FILES: [&str; 4] = [
    "prob_vs_sparsity.csv",
    "nmse_vs_sparsity.csv",
    "time_vs_sparsity.csv",
    "time_vs_length.csv",
];

/// Plot-ready aggregate CSVs, one per curve family. The energy trace comes
/// from single solves instead, see [`energy_trace_csv`].
pub fn emit_figure_data(table: &ResultTable, dir: &Path) -> Result<Vec<PathBuf>> {
    let agg = table.aggregates();
    let mut files = Vec::new();
    let mut emit = |name: &str, header: &str, row: &dyn Fn(&AggregateRow) -> String| -> Result<()> {
        let mut out = format!("{header}\n");
        for a in &agg {
            writeln!(out, "{}", row(a)).unwrap();
        }
        let path = dir.join(name);
        write_file(&path, &out)?;
        files.push(path);
        Ok(())
    };
    let key = |a: &AggregateRow| {
        format!("{},{},{},{},{}", a.method, a.n, a.k_masks, fmt_f64(a.snr), a.s)
    };
    emit(FIGURE_FILES[0], "method,n,k_masks,snr,s,recovery_probability", &|a| {
        format!("{},{}", key(a), fmt_f64(a.recovery_probability))
    })?;
    emit(FIGURE_FILES[1], "method,n,k_masks,snr,s,mean_nmse,median_nmse", &|a| {
        format!("{},{},{}", key(a), fmt_f64(a.mean_nmse), fmt_f64(a.median_nmse))
    })?;
    emit(FIGURE_FILES[2], "method,n,k_masks,snr,s,mean_runtime_s", &|a| {
        format!("{},{}", key(a), fmt_f64(a.mean_runtime_s))
    })?;
    emit(FIGURE_FILES[3], "method,s,k_masks,snr,n,mean_runtime_s", &|a| {
        format!(
            "{},{},{},{},{},{}",
            a.method,
            a.s,
            a.k_masks,
            fmt_f64(a.snr),
            a.n,
            fmt_f64(a.mean_runtime_s)
        )
    })?;
    Ok(files)
}

/// Energy trace of one solve, for the convergence plot.
pub fn energy_trace_csv(method: Method, iterations: &[usize], energy: &[f64]) -> String {
    let mut out = String::from("method,iteration,energy\n");
    for (it, e) in iterations.iter().zip(energy) {
        writeln!(out, "{method},{it},{}", fmt_f64(*e)).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: Method, s: usize, nmse: f64, t: f64) -> TrialResult {
        TrialResult {
            method,
            n: 8,
            s,
            snr: f64::INFINITY,
            k_masks: 1,
            seed: 3,
            nmse,
            success: nmse <= 1e-3,
            iterations: 10,
            wall_time_s: t,
        }
    }

    fn table() -> ResultTable {
        ResultTable::new(vec![
            row(Method::L0L1Pr, 2, 1e-9, 1.0),
            row(Method::Spr, 2, 0.5, 2.0),
            row(Method::L0L1Pr, 2, f64::INFINITY, 9.0),
            row(Method::Spr, 2, 1e-12, 4.0),
            row(Method::L0L1Pr, 3, 1e-5, 3.0),
        ])
    }

    #[test]
    fn aggregates_use_successes_for_runtime() {
        let agg = table().aggregates();
        assert_eq!(agg.len(), 3);
        assert_eq!((agg[0].method, agg[0].s, agg[0].trials, agg[0].successes), (Method::L0L1Pr, 2, 2, 1));
        assert_eq!(agg[0].recovery_probability, 0.5);
        assert_eq!(agg[0].mean_runtime_s, 1.0);
        assert_eq!(agg[0].mean_nmse, f64::INFINITY);
        assert_eq!(agg[1].median_nmse, 0.5 * (0.5 + 1e-12));
        let none = ResultTable::new(vec![row(Method::Spr, 1, 1.0, 1.0)]).aggregates();
        assert!(none[0].mean_runtime_s.is_nan());
    }

    #[test]
    fn csv_and_json_round_trip() {
        let t = table();
        let csv = t.to_csv();
        assert!(csv.ends_with('\n'));
        assert_eq!(ResultTable::from_csv(&csv).unwrap().to_csv(), csv);
        let json = t.to_json();
        assert!(json.ends_with('\n'));
        assert!(json.contains("\"inf\""));
        let back = ResultTable::from_json(&json).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_json(), json);
    }

    #[test]
    fn emits_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out/results.csv");
        let written = emit_results(&table(), &p, OutputFormat::Csv).unwrap();
        assert_eq!(written[1], dir.path().join("out/results_aggregate.csv"));
        assert_eq!(load_results(&p).unwrap(), table());
        let pj = dir.path().join("results.json");
        emit_results(&table(), &pj, OutputFormat::Json).unwrap();
        assert_eq!(load_results(&pj).unwrap(), table());
        let figs = emit_figure_data(&table(), &dir.path().join("fig")).unwrap();
        assert_eq!(figs.len(), 4);
        let rec = fs::read_to_string(&figs[0]).unwrap();
        assert_eq!(rec.lines().nth(1), Some("L0L1PR,8,1,inf,2,0.5"));
    }
}
