//! Budget-driven training loop.
//!
//! Each step samples a batch of the current size, computes per-sample
//! gradients (streamed in chunks when `b * d` exceeds the chunk budget),
//! evaluates the controller's statistic on that batch, picks the next batch
//! size, and steps the optimizer with the batch-mean gradient at the
//! learning rate for the samples seen so far. The loop runs while fewer
//! than `total_samples` samples have been processed, so the last step may
//! overshoot the budget by less than one batch.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::controllers::{decide, ControllerConfig, ControllerDecision, Verdict};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::objectives::{Differentiable, Objective};
use crate::optimizers::{LrSchedule, OptimizerConfig, OptimizerState};
use crate::params::ParamVector;
use crate::sampling::{sample_batch, Sampling};
use crate::stats::{
    compute_batch_stats, BatchGradStats, MeanAccumulator, StatsAccumulator, StatsRequest,
};
use crate::vecops;

/// Default cap on `b * d` gradient entries materialized at once (128 MiB of `f64`).
pub const DEFAULT_CHUNK_BUDGET: usize = 1 << 24;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub objective: Objective,
    /// `None` trains with the fixed batch size `b_init`.
    pub controller: Option<ControllerConfig>,
    pub optimizer: OptimizerConfig,
    pub schedule: LrSchedule,
    pub b_init: usize,
    pub total_samples: u64,
    pub seed: u64,
    pub sampling: Sampling,
    /// Evaluate on the validation set every `eval_every` steps; 0 disables.
    pub eval_every: u64,
    pub chunk_budget: usize,
    /// Optional hard cap on the number of steps.
    pub max_steps: Option<u64>,
    /// Starting iterate; defaults to [`Objective::init_params`] with the run seed.
    pub init: Option<ParamVector>,
}

impl RunConfig {
    pub fn new(objective: Objective, optimizer: OptimizerConfig, total_samples: u64) -> Self {
        Self {
            objective,
            controller: None,
            optimizer,
            schedule: LrSchedule::constant(0.008),
            b_init: 2,
            total_samples,
            seed: 0,
            sampling: Sampling::default(),
            eval_every: 0,
            chunk_budget: DEFAULT_CHUNK_BUDGET,
            max_steps: None,
            init: None,
        }
    }

    pub fn validate(&self, train: &Dataset) -> Result<()> {
        let n = train.len();
        self.objective.check_dataset(train)?;
        self.optimizer.validate()?;
        self.schedule.validate()?;
        if self.b_init < 2 {
            return Err(Error::config(format!(
                "b_init must be >= 2, got {}",
                self.b_init
            )));
        }
        let b_max = match &self.controller {
            Some(c) => {
                c.validate(n)?;
                c.b_max
            }
            None => self.b_init,
        };
        if self.b_init > b_max {
            return Err(Error::config(format!(
                "b_init {} exceeds b_max {b_max}",
                self.b_init
            )));
        }
        if self.sampling == Sampling::WithoutReplacement && b_max > n {
            return Err(Error::config(format!("batch size {b_max} exceeds n = {n}")));
        }
        if self.total_samples < self.b_init as u64 {
            return Err(Error::config(format!(
                "total_samples {} is smaller than b_init {}",
                self.total_samples, self.b_init
            )));
        }
        if self.chunk_budget == 0 {
            return Err(Error::config("chunk_budget must be positive"));
        }
        if let Some(x) = &self.init {
            if x.dim() != self.objective.param_dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.objective.param_dim(),
                    got: x.dim(),
                });
            }
        }
        Ok(())
    }
}

/// Metrics of one training step.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub step: u64,
    /// Samples processed including this step.
    pub samples_seen: u64,
    pub batch_size: usize,
    /// Batch loss at the pre-step iterate.
    pub train_loss: f64,
    /// `||grad F_B||` at the pre-step iterate.
    pub grad_norm: f64,
    /// Controller statistic; `None` when no test ran or it was undefined.
    pub statistic: Option<f64>,
    pub passed: Option<bool>,
    pub lr: f64,
    pub wall_ms: u64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub steps: u64,
    pub samples: u64,
    pub avg_batch_size: f64,
    pub max_batch_size: usize,
    /// Full training-set loss at the final iterate.
    pub final_train_loss: f64,
    pub final_train_acc: Option<f64>,
    pub final_val_loss: Option<f64>,
    pub final_val_acc: Option<f64>,
    /// Steps whose statistic was undefined (near-zero batch gradient).
    pub indeterminate_steps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<RunRecord>,
    pub params: ParamVector,
    pub summary: RunSummary,
}

/// What an observer sees after each step.
#[derive(Debug)]
pub struct StepView<'a> {
    pub record: &'a RunRecord,
    /// Iterate the batch gradient was evaluated at.
    pub iterate: &'a ParamVector,
    pub batch: &'a [usize],
    pub stats: &'a BatchGradStats,
    pub decision: Option<&'a ControllerDecision>,
}

/// Source of the `wall_ms` column.
pub trait Stopwatch {
    fn elapsed_ms(&self) -> u64;
}

/// Reports zero elapsed time, keeping records reproducible.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Stopwatch for NoClock {
    fn elapsed_ms(&self) -> u64 {
        0
    }
}

pub fn run(cfg: &RunConfig, train: &Dataset, val: Option<&Dataset>) -> Result<RunOutput> {
    run_with(cfg, train, val, &NoClock, |_| {})
}

pub fn run_with<C, F>(
    cfg: &RunConfig,
    train: &Dataset,
    val: Option<&Dataset>,
    clock: &C,
    mut observer: F,
) -> Result<RunOutput>
where
    C: Stopwatch + ?Sized,
    F: FnMut(&StepView<'_>),
{
    cfg.validate(train)?;
    if let Some(v) = val {
        cfg.objective.check_dataset(v)?;
    }
    let n = train.len();
    let obj = &cfg.objective;
    let d = obj.param_dim();
    let mut x = cfg
        .init
        .clone()
        .unwrap_or_else(|| obj.init_params(cfg.seed));
    let mut opt = OptimizerState::new(cfg.optimizer, d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rows_per_chunk = (cfg.chunk_budget / d).max(1);

    let mut records = Vec::new();
    let mut b = cfg.b_init;
    let mut samples: u64 = 0;
    let mut step: u64 = 0;
    let mut indeterminate = 0;
    let mut max_b = b;

    while samples < cfg.total_samples && cfg.max_steps.map_or(true, |m| step < m) {
        step += 1;
        let lr = cfg.schedule.lr_at(samples);
        let batch = sample_batch(&mut rng, n, b, cfg.sampling)?;
        let controller = cfg
            .controller
            .as_ref()
            .filter(|c| (step - 1) % c.test_every as u64 == 0);
        let request = controller.map_or(StatsRequest::MEAN_ONLY, |c| c.kind.stats_request());
        let (stats, loss) = batch_pass(obj, &x, train, &batch, rows_per_chunk, request)?;
        let decision = controller.map(|c| decide(c, &stats, b, n)).transpose()?;
        if decision.is_some_and(|dcs| dcs.verdict == Verdict::Indeterminate) {
            indeterminate += 1;
        }

        let iterate = x.clone();
        opt.step(&mut x, &stats.mean_grad, lr)?;
        samples += b as u64;

        let (val_loss, val_acc) = match val {
            Some(v) if cfg.eval_every > 0 && step % cfg.eval_every == 0 => evaluate(obj, &x, v)?,
            _ => (None, None),
        };
        let record = RunRecord {
            step,
            samples_seen: samples,
            batch_size: b,
            train_loss: loss,
            grad_norm: libm::sqrt(stats.mean_grad_sq_norm),
            statistic: decision.and_then(|dcs| dcs.statistic),
            passed: decision.and_then(|dcs| dcs.verdict.passed()),
            lr,
            wall_ms: clock.elapsed_ms(),
            val_loss,
            val_acc,
        };
        observer(&StepView {
            record: &record,
            iterate: &iterate,
            batch: &batch,
            stats: &stats,
            decision: decision.as_ref(),
        });
        records.push(record);
        if let Some(dcs) = decision {
            b = dcs.next_b;
            max_b = max_b.max(b);
        }
    }

    let final_train_loss = obj.full_loss(&x, train)?;
    let (final_val_loss, final_val_acc) = match val {
        Some(v) => evaluate(obj, &x, v)?,
        None => (None, None),
    };
    let summary = RunSummary {
        steps: step,
        samples,
        avg_batch_size: if step > 0 {
            samples as f64 / step as f64
        } else {
            0.0
        },
        max_batch_size: records.iter().map(|r| r.batch_size).max().unwrap_or(max_b),
        final_train_loss,
        final_train_acc: obj.accuracy(&x, train),
        final_val_loss,
        final_val_acc,
        indeterminate_steps: indeterminate,
    };
    Ok(RunOutput {
        records,
        params: x,
        summary,
    })
}

fn evaluate(obj: &Objective, x: &ParamVector, val: &Dataset) -> Result<(Option<f64>, Option<f64>)> {
    Ok((Some(obj.full_loss(x, val)?), obj.accuracy(x, val)))
}

/// Batch mean gradient, requested variances and batch loss. Materializes the
/// whole `b x d` matrix when it fits in one chunk; otherwise streams chunks
/// twice (mean pass, deviation pass). Both paths sum in the same row order.
pub fn batch_pass<O: Differentiable + ?Sized>(
    obj: &O,
    x: &ParamVector,
    data: &Dataset,
    batch: &[usize],
    rows_per_chunk: usize,
    request: StatsRequest,
) -> Result<(BatchGradStats, f64)> {
    if batch.len() <= rows_per_chunk {
        let (grads, loss) = obj.per_sample_grads_and_loss(x, data, batch)?;
        return Ok((compute_batch_stats(&grads, request)?, loss));
    }
    obj.check_call(x, data, batch)?;
    if request.any_variance() && batch.len() < 2 {
        return Err(Error::DegenerateBatch { b: batch.len() });
    }
    let d = obj.param_dim();
    let mut buf = vec![0.0; rows_per_chunk * d];
    let mut mean = MeanAccumulator::new(d);
    let mut loss_sum = 0.0;
    for chunk in batch.chunks(rows_per_chunk) {
        for (row, &i) in buf.chunks_exact_mut(d).zip(chunk) {
            loss_sum += obj.sample_grad(x, data, i, row);
            if !vecops::all_finite(row) {
                return Err(Error::NonFinite("per-sample gradients"));
            }
            mean.add_row(row);
        }
    }
    let mean = mean.finish();
    let loss = loss_sum / batch.len() as f64;
    if !request.any_variance() {
        return Ok((BatchGradStats::mean_only(mean, batch.len()), loss));
    }
    let mut acc = StatsAccumulator::new(mean, request)?;
    for chunk in batch.chunks(rows_per_chunk) {
        for (row, &i) in buf.chunks_exact_mut(d).zip(chunk) {
            obj.sample_grad(x, data, i, row);
            acc.add_row(row);
        }
    }
    Ok((acc.finish()?, loss))
}
