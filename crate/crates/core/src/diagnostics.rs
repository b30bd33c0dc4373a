//! Run outputs, error metrics against a reference, and artifact writers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{BvsError, Result};
use crate::samplers::SamplerKind;

pub const DEFAULT_IMPORTANCE_THRESHOLD: f64 = 0.01;

/// One `(iteration, chain)` line of `trace.jsonl`. Non-finite acceptance
/// probabilities are written as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub chain: usize,
    pub log_post: f64,
    pub p_gamma: usize,
    pub accepted: bool,
    pub log_accept_prob: Option<f64>,
    pub omega: Option<f64>,
    pub zeta_or_xi: Option<f64>,
}

/// Everything a run reports. Rates and averages cover post-burn-in steps.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub sampler: SamplerKind,
    pub n_chains: usize,
    /// Rao-Blackwellised inclusion probabilities.
    pub pip_estimate: Vec<f64>,
    /// Raw inclusion frequencies.
    pub pip_freq: Vec<f64>,
    pub acceptance_rate: f64,
    pub mean_accept_prob: f64,
    pub mean_asjd: f64,
    pub mean_k_size: f64,
    pub models_evaluated: usize,
    pub post_burn_in_steps: usize,
    pub iterations_completed: usize,
    /// Centre value of `omega` used at each iteration.
    pub omega_trace: Vec<f64>,
    pub final_zeta: f64,
    pub final_xi: f64,
    pub final_omega: f64,
    pub trace: Vec<TraceRecord>,
    pub wall_time_s: f64,
}

/// Mean squared errors over variables whose reference PIP exceeds
/// `threshold` (important) and over the rest. An empty group is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PipMse {
    pub important: Option<f64>,
    pub unimportant: Option<f64>,
}

pub fn pip_mse(estimate: &[f64], reference: &[f64], threshold: f64) -> Result<PipMse> {
    if estimate.len() != reference.len() {
        return Err(BvsError::DimensionMismatch(format!(
            "estimate has {} entries, reference has {}",
            estimate.len(),
            reference.len()
        )));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(BvsError::Domain {
            value: threshold,
            lo: 0.0,
            hi: 1.0,
        });
    }
    let group = |want: bool| {
        let sq: Vec<f64> = estimate
            .iter()
            .zip(reference)
            .filter(|(_, &r)| (r > threshold) == want)
            .map(|(e, r)| (e - r) * (e - r))
            .collect();
        (!sq.is_empty()).then(|| sq.iter().sum::<f64>() / sq.len() as f64)
    };
    Ok(PipMse {
        important: group(true),
        unimportant: group(false),
    })
}

/// `log10(candidate / baseline)`; negative means the candidate is better.
pub fn relative_log10_mse(candidate_mse: f64, baseline_mse: f64) -> Result<f64> {
    if !(baseline_mse > 0.0) {
        return Err(BvsError::InvalidInput(format!("baseline MSE must be positive, got {baseline_mse}")));
    }
    if !(candidate_mse > 0.0) {
        return Err(BvsError::InvalidInput(format!("candidate MSE must be positive, got {candidate_mse}")));
    }
    Ok((candidate_mse / baseline_mse).log10())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| BvsError::io(format!("cannot create {}", path.display()), e))
}

/// Writes `variable,pip_rb,pip_freq`.
pub fn write_pips_csv(path: &Path, names: &[String], pip_rb: &[f64], pip_freq: &[f64]) -> Result<()> {
    if names.len() != pip_rb.len() || names.len() != pip_freq.len() {
        return Err(BvsError::DimensionMismatch("names and PIP vectors differ in length".into()));
    }
    let mut w = csv::Writer::from_writer(create(path)?);
    let to_csv = |source| BvsError::Csv {
        path: path.to_path_buf(),
        source,
    };
    w.write_record(["variable", "pip_rb", "pip_freq"]).map_err(to_csv)?;
    for ((n, a), b) in names.iter().zip(pip_rb).zip(pip_freq) {
        w.write_record([n.clone(), a.to_string(), b.to_string()]).map_err(to_csv)?;
    }
    w.flush().map_err(|e| BvsError::io(format!("cannot write {}", path.display()), e))
}

/// Reads the `pip_rb` column of a `pips.csv` file, e.g. a long reference run.
pub fn read_pips_csv(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path).map_err(|source| BvsError::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    let headers = r
        .headers()
        .map_err(|source| BvsError::Csv {
            path: path.to_path_buf(),
            source,
        })?
        .clone();
    let col = headers
        .iter()
        .position(|h| h == "pip_rb")
        .ok_or_else(|| BvsError::MissingColumn("pip_rb".into()))?;
    let mut out = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(|source| BvsError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let cell = rec.get(col).unwrap_or("");
        out.push(cell.trim().parse::<f64>().map_err(|_| BvsError::NonNumeric {
            row: row + 1,
            column: "pip_rb".into(),
            cell: cell.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_trace_jsonl(path: &Path, trace: &[TraceRecord]) -> Result<()> {
    let mut w = create(path)?;
    for rec in trace {
        serde_json::to_writer(&mut w, rec).map_err(|e| BvsError::Serialize(e.to_string()))?;
        w.write_all(b"\n")
            .map_err(|e| BvsError::io(format!("cannot write {}", path.display()), e))?;
    }
    w.flush().map_err(|e| BvsError::io(format!("cannot write {}", path.display()), e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| BvsError::Serialize(e.to_string()))?;
    w.write_all(b"\n")
        .and_then(|_| w.flush())
        .map_err(|e| BvsError::io(format!("cannot write {}", path.display()), e))
}
