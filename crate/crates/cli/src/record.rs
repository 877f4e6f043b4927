//! The append-only JSONL result store and CSV export.

use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use percolab::estimators::{Estimate, TailCurve};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const CSV_HEADER: &str = "abscissa,mean,stderr,trials,accepted,truncated";

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub trials: u64,
    pub accepted: u64,
    pub truncated: u64,
}

impl Counters {
    pub fn from_estimates<'a>(es: impl IntoIterator<Item = &'a Estimate>) -> Self {
        let mut c = Counters::default();
        for e in es {
            c.trials = c.trials.max(e.trials);
            c.accepted = c.accepted.max(e.accepted);
            c.truncated = c.truncated.max(e.truncated);
        }
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordError {
    pub kind: String,
    pub message: String,
}

/// One line of the result store.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    /// `estimate`, `fit`, `pc` or `oracle-suite`.
    pub record_type: String,
    pub config_hash: String,
    pub tool_version: String,
    pub sampler: String,
    pub estimand: String,
    /// The configuration plus the grid cell this record covers.
    pub inputs: Value,
    pub payload: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<RecordError>,
    pub wall_time_s: f64,
    pub counters: Counters,
    /// Config hashes of the records a fit consumed.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sources: Vec<String>,
}

impl ResultRecord {
    pub fn p(&self) -> Option<f64> {
        self.inputs.get("cell")?.get("p")?.as_f64()
    }

    pub fn n(&self) -> Option<i64> {
        self.inputs.get("cell")?.get("n")?.as_i64()
    }

    /// Data points carried by the payload, with the abscissa the fit uses.
    /// Curves give their own abscissae; scalar estimates use the cell's `n`,
    /// or else its `p`.
    pub fn rows(&self) -> Vec<(f64, Estimate)> {
        if self.error.is_some() {
            return vec![];
        }
        let curve = |v: &Value| serde_json::from_value::<TailCurve>(v.clone()).ok();
        let scalar = |v: &Value| serde_json::from_value::<Estimate>(v.clone()).ok();
        let x = self.n().map(|n| n as f64).or(self.p());
        let from_curve = |c: TailCurve| c.abscissae.into_iter().zip(c.estimates).collect::<Vec<_>>();
        if let Some(c) = curve(&self.payload) {
            return from_curve(c);
        }
        for key in ["curve", "estimate"] {
            if let Some(v) = self.payload.get(key) {
                if let Some(c) = curve(v) {
                    return from_curve(c);
                }
                if let (Some(e), Some(x)) = (scalar(v), x) {
                    return vec![(x, e)];
                }
            }
        }
        match (scalar(&self.payload), x) {
            (Some(e), Some(x)) => vec![(x, e)],
            _ => vec![],
        }
    }
}

pub fn csv_row(x: f64, e: &Estimate) -> String {
    format!("{x},{},{},{},{},{}", e.mean, e.stderr, e.trials, e.accepted, e.truncated)
}

/// Appends records, one JSON object per line.
pub fn append(path: &Path, records: &[ResultRecord]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut buf = String::new();
    for r in records {
        buf.push_str(&serde_json::to_string(r).expect("records serialize"));
        buf.push('\n');
    }
    f.write_all(buf.as_bytes()).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn read_glob(pattern: &str) -> Result<Vec<(PathBuf, ResultRecord)>, CliError> {
    let paths = glob::glob(pattern).map_err(|e| CliError::Validation(format!("records glob: {e}")))?;
    let mut out = vec![];
    for path in paths {
        let path = path.map_err(|e| CliError::Io(e.to_string()))?;
        let f = std::fs::File::open(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            if line.trim().is_empty() {
                continue;
            }
            let r: ResultRecord = serde_json::from_str(&line)
                .map_err(|e| CliError::Validation(format!("{}:{}: not a result record: {e}", path.display(), i + 1)))?;
            out.push((path.clone(), r));
        }
    }
    Ok(out)
}

/// Output file for `--out`, else `$PERCOLAB_RESULTS_DIR/<name>.jsonl`, else
/// `results/<name>.jsonl`.
pub fn default_out(out: Option<&Path>, name: &str) -> PathBuf {
    if let Some(p) = out {
        return p.to_path_buf();
    }
    let root = std::env::var_os("PERCOLAB_RESULTS_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("results"));
    root.join(format!("{name}.jsonl"))
}
