//! The four subcommands. Each returns a [`Failure`] carrying its exit code.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use adabatch_core::data::{Dataset, Targets};
use adabatch_core::trainer::{run_with, RunSummary, Stopwatch};
use anyhow::Context;
use log::{info, warn};

use crate::audit::{run_audit, AuditReport, AUDIT_JSON};
use crate::config::{Config, ConfigError, DataSource};
use crate::failure::Failure;
use crate::output::{self, fmt_f64, write_atomic};
use crate::setup::{build_objective, load_data, prepare};

struct WallClock(Instant);

impl Stopwatch for WallClock {
    fn elapsed_ms(&self) -> u64 {
        self.0.elapsed().as_millis() as u64
    }
}

/// Trains once and writes metrics, parameters, summary and the resolved config into `out_dir`.
pub fn cmd_run(cfg: &Config, out_dir: &Path) -> Result<RunSummary, Failure> {
    let prepared = prepare(cfg)?;
    info!(
        "training {} on n={} (p={}), {} samples",
        prepared.run.objective.kind_name(),
        prepared.train.len(),
        prepared.train.feature_dim(),
        cfg.total_samples
    );
    let clock = WallClock(Instant::now());
    let no_clock = adabatch_core::trainer::NoClock;
    let clock: &dyn Stopwatch = if cfg.wall_clock { &clock } else { &no_clock };
    let out = run_with(
        &prepared.run,
        &prepared.train,
        prepared.val.as_ref(),
        clock,
        |_| {},
    )?;
    if out.summary.indeterminate_steps > 0 {
        warn!(
            "{} steps had an undefined test statistic; their batch size was kept",
            out.summary.indeterminate_steps
        );
    }

    write_atomic(
        &out_dir.join(output::RESOLVED_CONFIG),
        cfg.serialize().as_bytes(),
    )?;
    write_atomic(
        &out_dir.join(output::METRICS_CSV),
        &output::metrics_csv(&out.records)?,
    )?;
    write_atomic(
        &out_dir.join(output::METRICS_JSONL),
        &output::metrics_jsonl(&out.records)?,
    )?;
    write_atomic(
        &out_dir.join(output::PARAMS_BIN),
        &output::encode_params(&out.params),
    )?;
    let summary = serde_json::to_vec_pretty(&output::SummaryJson::from(&out.summary))
        .context("encoding summary")?;
    write_atomic(&out_dir.join(output::SUMMARY_JSON), &summary)?;
    info!(
        "{} steps, avg batch {:.1}, final loss {:.4}",
        out.summary.steps, out.summary.avg_batch_size, out.summary.final_train_loss
    );
    Ok(out.summary)
}

/// `key=v1,v2,...` as given on the command line.
pub fn parse_grid_arg(arg: &str) -> Result<(String, Vec<String>), ConfigError> {
    let err = |m: String| ConfigError {
        source: "--grid".to_owned(),
        line: 0,
        column: 0,
        message: format!("{m} (in `{arg}`)"),
    };
    let (key, values) = arg
        .split_once('=')
        .ok_or_else(|| err("expected `key=v1,v2,...`".to_owned()))?;
    let values: Vec<String> = values.split(',').map(|v| v.trim().to_owned()).collect();
    if values.iter().any(String::is_empty) {
        return Err(err("empty grid value".to_owned()));
    }
    Ok((key.trim().to_owned(), values))
}

#[derive(Debug, Clone)]
pub struct SweepCell {
    pub index: usize,
    pub dir: PathBuf,
    pub assignments: Vec<(String, String)>,
    pub result: Result<RunSummary, String>,
}

/// Runs the cartesian product of `grid` over `base`, one subfolder per cell,
/// and writes `summary.csv`. Failed cells are recorded and the sweep goes on.
pub fn cmd_sweep(
    base: &Config,
    grid: &[(String, Vec<String>)],
    out_dir: &Path,
    parallel: usize,
) -> Result<Vec<SweepCell>, Failure> {
    let mut cells: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for (key, values) in grid {
        cells = cells
            .into_iter()
            .flat_map(|cell| {
                values.iter().map(move |v| {
                    let mut c = cell.clone();
                    c.push((key.clone(), v.clone()));
                    c
                })
            })
            .collect();
    }
    let configs = cells
        .iter()
        .map(|cell| {
            let mut cfg = base.clone();
            for (k, v) in cell {
                cfg.set(k, v).map_err(|m| ConfigError {
                    source: "--grid".to_owned(),
                    line: 0,
                    column: 0,
                    message: format!("{k}={v}: {m}"),
                })?;
            }
            Ok(cfg)
        })
        .collect::<Result<Vec<Config>, ConfigError>>()?;

    let dirs: Vec<PathBuf> = cells
        .iter()
        .enumerate()
        .map(|(i, cell)| out_dir.join(cell_dir_name(i, cell)))
        .collect();
    let results: Vec<Mutex<Option<Result<RunSummary, String>>>> =
        cells.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..parallel.clamp(1, cells.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= configs.len() {
                    break;
                }
                let r = cmd_run(&configs[i], &dirs[i]).map_err(|e| e.to_string());
                if let Err(e) = &r {
                    warn!("sweep cell {} failed: {e}", dirs[i].display());
                }
                *results[i].lock().expect("result slot") = Some(r);
            });
        }
    });

    let cells: Vec<SweepCell> = cells
        .into_iter()
        .zip(dirs)
        .zip(results)
        .enumerate()
        .map(|(index, ((assignments, dir), r))| SweepCell {
            index,
            dir,
            assignments,
            result: r
                .into_inner()
                .expect("result slot")
                .expect("every cell ran"),
        })
        .collect();
    let keys: Vec<&str> = grid.iter().map(|(k, _)| k.as_str()).collect();
    write_atomic(&out_dir.join("summary.csv"), &sweep_summary(&keys, &cells)?)?;
    Ok(cells)
}

fn cell_dir_name(i: usize, cell: &[(String, String)]) -> String {
    let label: String = if cell.is_empty() {
        "base".to_owned()
    } else {
        cell.iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(",")
    };
    let label: String = label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._=,-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{i:03}_{label}")
}

fn sweep_summary(keys: &[&str], cells: &[SweepCell]) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["cell", "dir"];
    header.extend_from_slice(keys);
    header.extend_from_slice(&[
        "status",
        "steps",
        "avg_bsz",
        "final_loss",
        "final_acc",
        "final_val_loss",
        "final_val_acc",
        "error",
    ]);
    w.write_record(&header)?;
    let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
    for c in cells {
        let mut row = vec![
            c.index.to_string(),
            c.dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
        ];
        row.extend(c.assignments.iter().map(|(_, v)| v.clone()));
        match &c.result {
            Ok(s) => row.extend([
                "ok".to_owned(),
                s.steps.to_string(),
                fmt_f64(s.avg_batch_size),
                fmt_f64(s.final_train_loss),
                opt(s.final_train_acc),
                opt(s.final_val_loss),
                opt(s.final_val_acc),
                String::new(),
            ]),
            Err(e) => {
                row.extend(["failed".to_owned()]);
                row.extend(std::iter::repeat(String::new()).take(6));
                row.push(e.clone());
            }
        }
        w.write_record(&row)?;
    }
    w.into_inner().context("flushing CSV")
}

/// Runs the diagnostics on the configured objective and training data and
/// writes `audit.json`. Fails with the names of the failed checks.
pub fn cmd_audit(cfg: &Config, out_dir: &Path) -> Result<AuditReport, Failure> {
    let (train, _) = load_data(cfg)?;
    let obj = build_objective(cfg, &train)?;
    let report = run_audit(cfg, &obj, &train)?;
    let json = serde_json::to_vec_pretty(&report).context("encoding audit report")?;
    write_atomic(&out_dir.join(AUDIT_JSON), &json)?;
    for c in &report.checks {
        info!(
            "{}: {}",
            c.name,
            match (&c.skipped, c.passed) {
                (Some(r), _) => format!("skipped ({r})"),
                (None, true) => "pass".to_owned(),
                (None, false) => "FAIL".to_owned(),
            }
        );
    }
    if report.passed {
        Ok(report)
    } else {
        Err(Failure::Audit(report.failed()))
    }
}

/// Writes the configured synthetic dataset as `train.csv` (and `val.csv`
/// when a holdout fraction is set) in the layout the CSV loader reads.
pub fn cmd_gen_data(cfg: &Config, out_dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    if cfg.data_source != DataSource::Synthetic {
        return Err(ConfigError::unlocated("gen-data needs data.source = synthetic").into());
    }
    let (train, val) = load_data(cfg)?;
    let mut written = vec![out_dir.join("train.csv")];
    write_atomic(&written[0], &dataset_csv(&train)?)?;
    if let Some(v) = val {
        written.push(out_dir.join("val.csv"));
        write_atomic(&written[1], &dataset_csv(&v)?)?;
    }
    Ok(written)
}

pub fn dataset_csv(data: &Dataset) -> anyhow::Result<Vec<u8>> {
    let p = data.feature_dim();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (0..p).map(|j| format!("x{j}")).collect();
    match data.targets() {
        Targets::Classes { .. } => header.push("label".to_owned()),
        Targets::Values(_) => header.push("y".to_owned()),
        Targets::None => {}
    }
    w.write_record(&header)?;
    for i in 0..data.len() {
        let mut row: Vec<String> = data.feature(i).iter().map(|v| fmt_f64(*v)).collect();
        if let Some(c) = data.class(i) {
            row.push(c.to_string());
        } else if let Some(y) = data.value(i) {
            row.push(fmt_f64(y));
        }
        w.write_record(&row)?;
    }
    w.into_inner().context("flushing CSV")
}
