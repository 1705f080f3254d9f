//! Turns a [`Config`] into datasets, an objective and a core run config.

use std::fs;
use std::path::Path;

use adabatch_core::controllers::ControllerConfig;
use adabatch_core::controllers::ControllerKind;
use adabatch_core::data::{
    make_synthetic, parse_idx, split_holdout, Dataset, SyntheticSpec, Targets,
};
use adabatch_core::objectives::{Differentiable, Objective};
use adabatch_core::optimizers::{LrSchedule, OptimizerConfig, ScheduleKind};
use adabatch_core::trainer::RunConfig;
use anyhow::Context;

use crate::config::{Config, ConfigError, DataSource, ObjectiveKind};
use crate::failure::Failure;

/// Everything a run needs.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub run: RunConfig,
    pub train: Dataset,
    pub val: Option<Dataset>,
}

pub fn prepare(cfg: &Config) -> Result<Prepared, Failure> {
    let (train, val) = load_data(cfg)?;
    let objective = build_objective(cfg, &train)?;
    let run = build_run(cfg, objective, &train)?;
    if let Some(v) = &val {
        run.objective.check_dataset(v)?;
    }
    Ok(Prepared { run, train, val })
}

/// Training data plus the validation set: a separate file when configured,
/// otherwise a holdout split of `data.val_fraction` drawn with the run seed.
pub fn load_data(cfg: &Config) -> Result<(Dataset, Option<Dataset>), Failure> {
    let (train, val) = match cfg.data_source {
        DataSource::Synthetic => {
            if cfg.train_path.is_some() || cfg.val_path.is_some() {
                return Err(ConfigError::unlocated(
                    "data.train and data.val need data.source = idx or csv",
                )
                .into());
            }
            let data = make_synthetic(&SyntheticSpec {
                kind: cfg.synthetic_kind,
                n: cfg.n,
                p: cfg.p,
                classes: cfg.classes,
                noise: cfg.noise,
                seed: cfg.data_seed,
            })?;
            (data, None)
        }
        DataSource::Idx => {
            let images = required(&cfg.train_path, "data.train")?;
            let labels = required(&cfg.train_labels, "data.train_labels")?;
            let train = load_idx(images, labels)?;
            let val = match (&cfg.val_path, &cfg.val_labels) {
                (Some(i), Some(l)) => Some(load_idx(i, l)?),
                (None, None) => None,
                _ => {
                    return Err(ConfigError::unlocated(
                        "data.val and data.val_labels must be set together",
                    )
                    .into())
                }
            };
            (train, val)
        }
        DataSource::Csv => {
            let path = required(&cfg.train_path, "data.train")?;
            let train = load_csv(path, cfg.objective, None)?;
            let classes = train.num_classes();
            let val = match &cfg.val_path {
                Some(p) => Some(load_csv(p, cfg.objective, classes)?),
                None => None,
            };
            (train, val)
        }
    };
    if val.is_some() {
        return Ok((train, val));
    }
    if !(0.0..1.0).contains(&cfg.val_fraction) {
        return Err(ConfigError::unlocated(format!(
            "data.val_fraction must be in [0, 1), got {}",
            cfg.val_fraction
        ))
        .into());
    }
    Ok(split_holdout(&train, cfg.val_fraction, cfg.seed)?)
}

fn required<'a>(p: &'a Option<std::path::PathBuf>, key: &str) -> Result<&'a Path, Failure> {
    p.as_deref().ok_or_else(|| {
        ConfigError::unlocated(format!("{key} must be set for this data source")).into()
    })
}

pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset, Failure> {
    let img = fs::read(images).with_context(|| format!("reading {}", images.display()))?;
    let lab = fs::read(labels).with_context(|| format!("reading {}", labels.display()))?;
    parse_idx(&img, &lab)
        .with_context(|| format!("decoding {} / {}", images.display(), labels.display()))
        .map_err(Failure::Runtime)
}

/// CSV with a header row. Classifiers take the last column as an integer
/// label, least squares as a real target; the quadratic objective uses every
/// column as a feature. `classes` fixes the label range (for a validation
/// file); otherwise it is the largest label plus one.
pub fn load_csv(
    path: &Path,
    objective: ObjectiveKind,
    classes: Option<usize>,
) -> Result<Dataset, Failure> {
    let mut reader =
        csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let width = reader
        .headers()
        .with_context(|| format!("reading header of {}", path.display()))?
        .len();
    let has_target = objective != ObjectiveKind::Quadratic;
    let p = if has_target {
        width.saturating_sub(1)
    } else {
        width
    };
    if p == 0 {
        return Err(anyhow::anyhow!("{}: no feature columns", path.display()).into());
    }
    let mut features = Vec::new();
    let mut targets = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("{}: row {}", path.display(), row + 2))?;
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                anyhow::anyhow!(
                    "{}: row {}, column {}: `{field}` is not a number",
                    path.display(),
                    row + 2,
                    col + 1
                )
            })?;
            if col < p {
                features.push(v);
            } else {
                targets.push(v);
            }
        }
    }
    let targets = if !has_target {
        Targets::None
    } else if objective.is_classifier() {
        let labels = targets
            .iter()
            .map(|&t| {
                if t >= 0.0 && t.fract() == 0.0 && t <= f64::from(u32::MAX) {
                    Ok(t as u32)
                } else {
                    Err(anyhow::anyhow!(
                        "{}: label {t} is not a non-negative integer",
                        path.display()
                    ))
                }
            })
            .collect::<Result<Vec<u32>, _>>()?;
        let num_classes =
            classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| *m as usize + 1).max(2));
        Targets::Classes {
            labels,
            num_classes,
        }
    } else {
        Targets::Values(targets)
    };
    Dataset::new(features, p, targets)
        .with_context(|| format!("loading {}", path.display()))
        .map_err(Failure::Runtime)
}

pub fn build_objective(cfg: &Config, train: &Dataset) -> Result<Objective, Failure> {
    let p = train.feature_dim();
    let classes = || {
        train.num_classes().ok_or_else(|| {
            Failure::Config(ConfigError::unlocated(format!(
                "objective.kind = {} needs labelled data",
                cfg.objective.as_str()
            )))
        })
    };
    let obj = match cfg.objective {
        ObjectiveKind::Quadratic => Objective::quadratic(p),
        ObjectiveKind::LeastSquares => Objective::LeastSquares { dim: p },
        ObjectiveKind::Logistic => Objective::logistic(p, classes()?, cfg.l2),
        ObjectiveKind::Mlp => Objective::mlp(p, cfg.hidden, classes()?, cfg.activation),
    };
    obj.check_dataset(train)
        .map_err(|e| ConfigError::unlocated(format!("objective does not fit the data: {e}")))?;
    Ok(obj)
}

pub fn build_run(
    cfg: &Config,
    objective: Objective,
    train: &Dataset,
) -> Result<RunConfig, Failure> {
    let b_max = cfg.b_max.unwrap_or(train.len());
    let controller = cfg.controller.map(|kind| {
        let mut c = match kind {
            ControllerKind::Norm => ControllerConfig::norm(cfg.eta, b_max),
            ControllerKind::NormCoordinatewise => {
                ControllerConfig::norm_coordinatewise(cfg.eta, b_max)
            }
            ControllerKind::InnerProduct => ControllerConfig::inner_product(cfg.theta, b_max),
            ControllerKind::AugmentedInnerProduct => {
                ControllerConfig::augmented_inner_product(cfg.theta, cfg.nu, b_max)
            }
        };
        c.test_every = cfg.test_every;
        c.use_fpc = cfg.use_fpc;
        c.eps_guard = cfg.eps_guard;
        c
    });
    let schedule = match cfg.schedule {
        ScheduleKind::Constant => LrSchedule::constant(cfg.lr),
        ScheduleKind::WarmupCosine => {
            LrSchedule::warmup_cosine(cfg.lr, cfg.min_lr, cfg.warmup_samples, cfg.total_samples)
        }
    };
    let optimizer = OptimizerConfig {
        kind: cfg.optimizer,
        v0: cfg.v0,
        beta1: cfg.beta1,
        beta2: cfg.beta2,
        eps: cfg.adam_eps,
    };
    let mut run = RunConfig::new(objective, optimizer, cfg.total_samples);
    run.controller = controller;
    run.schedule = schedule;
    run.b_init = cfg.b_init;
    run.seed = cfg.seed;
    run.sampling = cfg.sampling;
    run.eval_every = cfg.eval_every;
    run.chunk_budget = cfg.chunk_budget;
    run.max_steps = cfg.max_steps;
    run.validate(train)?;
    Ok(run)
}
