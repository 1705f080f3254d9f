//! Output files. Every file is written to a temporary sibling and renamed
//! into place, so readers never observe a partial file.

use std::io::Write;
use std::path::Path;

use adabatch_core::trainer::{RunRecord, RunSummary};
use anyhow::{bail, Context, Result};
use serde::Serialize;

pub const METRICS_CSV: &str = "metrics.csv";
pub const METRICS_JSONL: &str = "metrics.jsonl";
pub const PARAMS_BIN: &str = "params.bin";
pub const RESOLVED_CONFIG: &str = "config.resolved";
pub const SUMMARY_JSON: &str = "summary.json";

pub const METRICS_HEADER: [&str; 11] = [
    "step",
    "samples",
    "batch_size",
    "loss",
    "grad_norm",
    "statistic",
    "passed",
    "lr",
    "val_loss",
    "val_acc",
    "wall_ms",
];

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Shortest round-trip text, exponent form for extreme magnitudes.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn opt_f64(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn metrics_csv(records: &[RunRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(METRICS_HEADER)?;
    for r in records {
        w.write_record([
            r.step.to_string(),
            r.samples_seen.to_string(),
            r.batch_size.to_string(),
            fmt_f64(r.train_loss),
            fmt_f64(r.grad_norm),
            opt_f64(r.statistic),
            r.passed.map(|p| p.to_string()).unwrap_or_default(),
            fmt_f64(r.lr),
            opt_f64(r.val_loss),
            opt_f64(r.val_acc),
            r.wall_ms.to_string(),
        ])?;
    }
    w.into_inner().context("flushing CSV")
}

#[derive(Serialize)]
struct JsonRecord {
    step: u64,
    samples: u64,
    batch_size: usize,
    loss: f64,
    grad_norm: f64,
    statistic: Option<f64>,
    passed: Option<bool>,
    lr: f64,
    val_loss: Option<f64>,
    val_acc: Option<f64>,
    wall_ms: u64,
}

pub fn metrics_jsonl(records: &[RunRecord]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(
            &mut out,
            &JsonRecord {
                step: r.step,
                samples: r.samples_seen,
                batch_size: r.batch_size,
                loss: r.train_loss,
                grad_norm: r.grad_norm,
                statistic: r.statistic,
                passed: r.passed,
                lr: r.lr,
                val_loss: r.val_loss,
                val_acc: r.val_acc,
                wall_ms: r.wall_ms,
            },
        )?;
        out.push(b'\n');
    }
    Ok(out)
}

/// `u64` little-endian element count followed by little-endian `f64`s.
pub fn encode_params(params: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 8 * params.len());
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for v in params {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_params(bytes: &[u8]) -> Result<Vec<f64>> {
    let Some((head, body)) = bytes.split_first_chunk::<8>() else {
        bail!("parameter file shorter than its 8-byte length prefix");
    };
    let len = u64::from_le_bytes(*head);
    if body.len() as u64 != len.saturating_mul(8) {
        bail!(
            "parameter file declares {len} values but holds {} bytes",
            body.len()
        );
    }
    Ok(body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

#[derive(Serialize)]
pub struct SummaryJson {
    pub steps: u64,
    pub samples: u64,
    pub avg_batch_size: f64,
    pub max_batch_size: usize,
    pub final_train_loss: f64,
    pub final_train_acc: Option<f64>,
    pub final_val_loss: Option<f64>,
    pub final_val_acc: Option<f64>,
    pub indeterminate_steps: u64,
}

impl From<&RunSummary> for SummaryJson {
    fn from(s: &RunSummary) -> Self {
        Self {
            steps: s.steps,
            samples: s.samples,
            avg_batch_size: s.avg_batch_size,
            max_batch_size: s.max_batch_size,
            final_train_loss: s.final_train_loss,
            final_train_acc: s.final_train_acc,
            final_val_loss: s.final_val_loss,
            final_val_acc: s.final_val_acc,
            indeterminate_steps: s.indeterminate_steps,
        }
    }
}
