//! Flat dotted-key configuration files.
//!
//! One `key = value` pair per line; `#` starts a comment. Every key has a
//! default, so an empty file is a valid config. Sources are applied in order
//! defaults < file < `ADABATCH_SEED` < `--set` overrides.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use adabatch_core::controllers::{ControllerKind, DEFAULT_EPS_GUARD};
use adabatch_core::data::SyntheticKind;
use adabatch_core::objectives::Activation;
use adabatch_core::optimizers::{OptimizerKind, ScheduleKind};
use adabatch_core::sampling::Sampling;
use adabatch_core::trainer::DEFAULT_CHUNK_BUDGET;

pub const SEED_ENV: &str = "ADABATCH_SEED";

/// A config problem, located in its source when possible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// File path, `--set`, `--grid` or an environment variable name.
    pub source: String,
    /// 1-based; `0` when the error has no location.
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl ConfigError {
    pub fn unlocated(message: impl Into<String>) -> Self {
        Self {
            source: String::new(),
            line: 0,
            column: 0,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.source.is_empty(), self.line) {
            (true, _) => write!(f, "config error: {}", self.message),
            (false, 0) => write!(f, "{}: {}", self.source, self.message),
            (false, line) => write!(
                f,
                "{}:{}:{}: {}",
                self.source, line, self.column, self.message
            ),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    Quadratic,
    LeastSquares,
    Logistic,
    Mlp,
}

impl ObjectiveKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ObjectiveKind::Quadratic => "quadratic",
            ObjectiveKind::LeastSquares => "least_squares",
            ObjectiveKind::Logistic => "logistic",
            ObjectiveKind::Mlp => "mlp",
        }
    }

    pub fn is_classifier(&self) -> bool {
        matches!(self, ObjectiveKind::Logistic | ObjectiveKind::Mlp)
    }
}

impl FromStr for ObjectiveKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "quadratic" => Ok(Self::Quadratic),
            "least_squares" => Ok(Self::LeastSquares),
            "logistic" => Ok(Self::Logistic),
            "mlp" => Ok(Self::Mlp),
            _ => Err(format!(
                "unknown objective `{s}` (quadratic, least_squares, logistic, mlp)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    Synthetic,
    Idx,
    Csv,
}

impl DataSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            DataSource::Synthetic => "synthetic",
            DataSource::Idx => "idx",
            DataSource::Csv => "csv",
        }
    }
}

impl FromStr for DataSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "synthetic" => Ok(Self::Synthetic),
            "idx" => Ok(Self::Idx),
            "csv" => Ok(Self::Csv),
            _ => Err(format!("unknown data source `{s}` (synthetic, idx, csv)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub objective: ObjectiveKind,
    pub hidden: usize,
    pub activation: Activation,
    pub l2: f64,

    pub data_source: DataSource,
    pub synthetic_kind: SyntheticKind,
    pub n: usize,
    pub p: usize,
    pub classes: usize,
    pub noise: f64,
    pub data_seed: u64,
    /// Training file: IDX images or CSV table.
    pub train_path: Option<PathBuf>,
    /// IDX labels for `train_path`.
    pub train_labels: Option<PathBuf>,
    /// Separate validation file; when set, no holdout split is made.
    pub val_path: Option<PathBuf>,
    pub val_labels: Option<PathBuf>,
    pub val_fraction: f64,

    /// `None` trains with a fixed batch size.
    pub controller: Option<ControllerKind>,
    pub eta: f64,
    pub theta: f64,
    pub nu: f64,
    /// `None` means the training-set size.
    pub b_max: Option<usize>,
    pub test_every: usize,
    pub use_fpc: bool,
    pub eps_guard: f64,

    pub optimizer: OptimizerKind,
    pub v0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,

    pub schedule: ScheduleKind,
    pub lr: f64,
    pub min_lr: f64,
    pub warmup_samples: u64,

    pub b_init: usize,
    pub total_samples: u64,
    pub seed: u64,
    pub sampling: Sampling,
    pub eval_every: u64,
    pub chunk_budget: usize,
    pub max_steps: Option<u64>,

    pub wall_clock: bool,

    pub audit_resamples: usize,
    pub audit_batch: usize,
    pub audit_sigmas: f64,
    pub audit_fd_step: f64,
    pub audit_fd_tol: f64,
    pub audit_fd_samples: usize,
    pub audit_lemma_sequences: usize,
    /// Added to the first analytic gradient coordinate; nonzero only to
    /// exercise the failing path of the gradient check.
    pub audit_corrupt_gradient: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            objective: ObjectiveKind::Logistic,
            hidden: 32,
            activation: Activation::Tanh,
            l2: 0.0,

            data_source: DataSource::Synthetic,
            synthetic_kind: SyntheticKind::GaussianBlobs,
            n: 2000,
            p: 20,
            classes: 10,
            noise: 1.0,
            data_seed: 0,
            train_path: None,
            train_labels: None,
            val_path: None,
            val_labels: None,
            val_fraction: 0.1,

            controller: Some(ControllerKind::Norm),
            eta: 0.1,
            theta: 0.9,
            nu: 0.9,
            b_max: None,
            test_every: 1,
            use_fpc: false,
            eps_guard: DEFAULT_EPS_GUARD,

            optimizer: OptimizerKind::AdaGrad,
            v0: 1e-8,
            beta1: 0.9,
            beta2: 0.95,
            adam_eps: 1e-8,

            schedule: ScheduleKind::Constant,
            lr: 0.008,
            min_lr: 0.0,
            warmup_samples: 0,

            b_init: 2,
            total_samples: 6_000_000,
            seed: 0,
            sampling: Sampling::WithoutReplacement,
            eval_every: 0,
            chunk_budget: DEFAULT_CHUNK_BUDGET,
            max_steps: None,

            wall_clock: false,

            audit_resamples: 2000,
            audit_batch: 32,
            audit_sigmas: 3.0,
            audit_fd_step: 1e-5,
            audit_fd_tol: 1e-4,
            audit_fd_samples: 10,
            audit_lemma_sequences: 1000,
            audit_corrupt_gradient: 0.0,
        }
    }
}

/// Every key, in serialization order.
pub const KEYS: &[&str] = &[
    "objective.kind",
    "objective.hidden",
    "objective.activation",
    "objective.l2",
    "data.source",
    "data.kind",
    "data.n",
    "data.p",
    "data.classes",
    "data.noise",
    "data.seed",
    "data.train",
    "data.train_labels",
    "data.val",
    "data.val_labels",
    "data.val_fraction",
    "controller.kind",
    "controller.eta",
    "controller.theta",
    "controller.nu",
    "controller.b_max",
    "controller.test_every",
    "controller.use_fpc",
    "controller.eps_guard",
    "optimizer.kind",
    "optimizer.v0",
    "optimizer.beta1",
    "optimizer.beta2",
    "optimizer.eps",
    "schedule.kind",
    "schedule.lr",
    "schedule.min_lr",
    "schedule.warmup_samples",
    "run.b_init",
    "run.total_samples",
    "run.seed",
    "run.sampling",
    "run.eval_every",
    "run.chunk_budget",
    "run.max_steps",
    "output.wall_clock",
    "audit.resamples",
    "audit.batch",
    "audit.sigmas",
    "audit.fd_step",
    "audit.fd_tol",
    "audit.fd_samples",
    "audit.lemma_sequences",
    "audit.corrupt_gradient",
];

fn parse_num<T: FromStr>(v: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    let cleaned = v.replace('_', "");
    cleaned
        .parse()
        .map_err(|e| format!("invalid number `{v}`: {e}"))
}

fn parse_float(v: &str) -> Result<f64, String> {
    let x: f64 = parse_num(v)?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("`{v}` is not finite"))
    }
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected `true` or `false`, got `{v}`")),
    }
}

fn parse_enum<T: FromStr>(v: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    v.parse().map_err(|e: T::Err| e.to_string())
}

fn parse_path(v: &str) -> Option<PathBuf> {
    (v != "none" && !v.is_empty()).then(|| PathBuf::from(v))
}

fn parse_auto<T: FromStr>(v: &str, word: &str) -> Result<Option<T>, String>
where
    T::Err: fmt::Display,
{
    if v == word {
        Ok(None)
    } else {
        parse_num(v).map(Some)
    }
}

/// Shortest text that parses back to the same value, with an exponent for
/// very large or small magnitudes.
fn show_f64(x: f64) -> String {
    format!("{x:?}")
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref()
        .map_or_else(|| "none".to_owned(), |p| p.display().to_string())
}

fn show_opt<T: fmt::Display>(v: &Option<T>, word: &str) -> String {
    v.as_ref().map_or_else(|| word.to_owned(), T::to_string)
}

impl Config {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "objective.kind" => self.objective = parse_enum(v)?,
            "objective.hidden" => self.hidden = parse_num(v)?,
            "objective.activation" => self.activation = parse_enum(v)?,
            "objective.l2" => self.l2 = parse_float(v)?,
            "data.source" => self.data_source = parse_enum(v)?,
            "data.kind" => self.synthetic_kind = parse_enum(v)?,
            "data.n" => self.n = parse_num(v)?,
            "data.p" => self.p = parse_num(v)?,
            "data.classes" => self.classes = parse_num(v)?,
            "data.noise" => self.noise = parse_float(v)?,
            "data.seed" => self.data_seed = parse_num(v)?,
            "data.train" => self.train_path = parse_path(v),
            "data.train_labels" => self.train_labels = parse_path(v),
            "data.val" => self.val_path = parse_path(v),
            "data.val_labels" => self.val_labels = parse_path(v),
            "data.val_fraction" => self.val_fraction = parse_float(v)?,
            "controller.kind" => {
                self.controller = if v == "none" {
                    None
                } else {
                    Some(parse_enum(v)?)
                }
            }
            "controller.eta" => self.eta = parse_float(v)?,
            "controller.theta" => self.theta = parse_float(v)?,
            "controller.nu" => self.nu = parse_float(v)?,
            "controller.b_max" => self.b_max = parse_auto(v, "auto")?,
            "controller.test_every" => self.test_every = parse_num(v)?,
            "controller.use_fpc" => self.use_fpc = parse_bool(v)?,
            "controller.eps_guard" => self.eps_guard = parse_float(v)?,
            "optimizer.kind" => self.optimizer = parse_enum(v)?,
            "optimizer.v0" => self.v0 = parse_float(v)?,
            "optimizer.beta1" => self.beta1 = parse_float(v)?,
            "optimizer.beta2" => self.beta2 = parse_float(v)?,
            "optimizer.eps" => self.adam_eps = parse_float(v)?,
            "schedule.kind" => self.schedule = parse_enum(v)?,
            "schedule.lr" => self.lr = parse_float(v)?,
            "schedule.min_lr" => self.min_lr = parse_float(v)?,
            "schedule.warmup_samples" => self.warmup_samples = parse_num(v)?,
            "run.b_init" => self.b_init = parse_num(v)?,
            "run.total_samples" => self.total_samples = parse_num(v)?,
            "run.seed" => self.seed = parse_num(v)?,
            "run.sampling" => self.sampling = parse_enum(v)?,
            "run.eval_every" => self.eval_every = parse_num(v)?,
            "run.chunk_budget" => self.chunk_budget = parse_num(v)?,
            "run.max_steps" => self.max_steps = parse_auto(v, "none")?,
            "output.wall_clock" => self.wall_clock = parse_bool(v)?,
            "audit.resamples" => self.audit_resamples = parse_num(v)?,
            "audit.batch" => self.audit_batch = parse_num(v)?,
            "audit.sigmas" => self.audit_sigmas = parse_float(v)?,
            "audit.fd_step" => self.audit_fd_step = parse_float(v)?,
            "audit.fd_tol" => self.audit_fd_tol = parse_float(v)?,
            "audit.fd_samples" => self.audit_fd_samples = parse_num(v)?,
            "audit.lemma_sequences" => self.audit_lemma_sequences = parse_num(v)?,
            "audit.corrupt_gradient" => self.audit_corrupt_gradient = parse_float(v)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Textual value of `key`, in the form [`Config::set`] accepts.
    pub fn get(&self, key: &str) -> Option<String> {
        let v = match key {
            "objective.kind" => self.objective.as_str().to_owned(),
            "objective.hidden" => self.hidden.to_string(),
            "objective.activation" => self.activation.as_str().to_owned(),
            "objective.l2" => show_f64(self.l2),
            "data.source" => self.data_source.as_str().to_owned(),
            "data.kind" => self.synthetic_kind.as_str().to_owned(),
            "data.n" => self.n.to_string(),
            "data.p" => self.p.to_string(),
            "data.classes" => self.classes.to_string(),
            "data.noise" => show_f64(self.noise),
            "data.seed" => self.data_seed.to_string(),
            "data.train" => show_path(&self.train_path),
            "data.train_labels" => show_path(&self.train_labels),
            "data.val" => show_path(&self.val_path),
            "data.val_labels" => show_path(&self.val_labels),
            "data.val_fraction" => show_f64(self.val_fraction),
            "controller.kind" => self.controller.map_or("none", |c| c.as_str()).to_owned(),
            "controller.eta" => show_f64(self.eta),
            "controller.theta" => show_f64(self.theta),
            "controller.nu" => show_f64(self.nu),
            "controller.b_max" => show_opt(&self.b_max, "auto"),
            "controller.test_every" => self.test_every.to_string(),
            "controller.use_fpc" => self.use_fpc.to_string(),
            "controller.eps_guard" => show_f64(self.eps_guard),
            "optimizer.kind" => self.optimizer.as_str().to_owned(),
            "optimizer.v0" => show_f64(self.v0),
            "optimizer.beta1" => show_f64(self.beta1),
            "optimizer.beta2" => show_f64(self.beta2),
            "optimizer.eps" => show_f64(self.adam_eps),
            "schedule.kind" => self.schedule.as_str().to_owned(),
            "schedule.lr" => show_f64(self.lr),
            "schedule.min_lr" => show_f64(self.min_lr),
            "schedule.warmup_samples" => self.warmup_samples.to_string(),
            "run.b_init" => self.b_init.to_string(),
            "run.total_samples" => self.total_samples.to_string(),
            "run.seed" => self.seed.to_string(),
            "run.sampling" => self.sampling.as_str().to_owned(),
            "run.eval_every" => self.eval_every.to_string(),
            "run.chunk_budget" => self.chunk_budget.to_string(),
            "run.max_steps" => show_opt(&self.max_steps, "none"),
            "output.wall_clock" => self.wall_clock.to_string(),
            "audit.resamples" => self.audit_resamples.to_string(),
            "audit.batch" => self.audit_batch.to_string(),
            "audit.sigmas" => show_f64(self.audit_sigmas),
            "audit.fd_step" => show_f64(self.audit_fd_step),
            "audit.fd_tol" => show_f64(self.audit_fd_tol),
            "audit.fd_samples" => self.audit_fd_samples.to_string(),
            "audit.lemma_sequences" => self.audit_lemma_sequences.to_string(),
            "audit.corrupt_gradient" => show_f64(self.audit_corrupt_gradient),
            _ => return None,
        };
        Some(v)
    }

    /// Parses config text on top of the defaults.
    pub fn parse(text: &str, source: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_text(text, source)?;
        Ok(cfg)
    }

    /// Applies config text on top of `self`. A key may appear once per text.
    pub fn apply_text(&mut self, text: &str, source: &str) -> Result<(), ConfigError> {
        let mut seen: Vec<&str> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let err = |column: usize, message: String| ConfigError {
                source: source.to_owned(),
                line: idx + 1,
                column,
                message,
            };
            let line = raw.split('#').next().unwrap_or("");
            if line.trim().is_empty() {
                continue;
            }
            let Some(eq) = line.find('=') else {
                let col = line.len() - line.trim_start().len() + 1;
                return Err(err(col, "expected `key = value`".to_owned()));
            };
            let key = line[..eq].trim();
            let key_col = line.len() - line.trim_start().len() + 1;
            let value_part = &line[eq + 1..];
            let value = value_part.trim();
            let value_col = eq + 2 + (value_part.len() - value_part.trim_start().len());
            if key.is_empty() {
                return Err(err(key_col, "missing key before `=`".to_owned()));
            }
            if !KEYS.contains(&key) {
                return Err(err(key_col, format!("unknown key `{key}`")));
            }
            if seen.contains(&key) {
                return Err(err(key_col, format!("duplicate key `{key}`")));
            }
            seen.push(key);
            self.set(key, value).map_err(|m| err(value_col, m))?;
        }
        Ok(())
    }

    /// Applies `key=value` overrides; errors name the offending override.
    pub fn apply_overrides<S: AsRef<str>>(
        &mut self,
        overrides: &[S],
        source: &str,
    ) -> Result<(), ConfigError> {
        for (i, o) in overrides.iter().enumerate() {
            let o = o.as_ref();
            let err = |column: usize, message: String| ConfigError {
                source: source.to_owned(),
                line: i + 1,
                column,
                message: format!("{message} (in `{o}`)"),
            };
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| err(1, "expected `key=value`".to_owned()))?;
            self.set(key.trim(), value.trim())
                .map_err(|m| err(key.len() + 2, m))?;
        }
        Ok(())
    }

    /// Applies the `ADABATCH_SEED` value, if any.
    pub fn apply_seed_env(&mut self, value: Option<&str>) -> Result<(), ConfigError> {
        if let Some(v) = value {
            self.seed = parse_num(v.trim()).map_err(|m| ConfigError {
                source: SEED_ENV.to_owned(),
                line: 0,
                column: 0,
                message: m,
            })?;
        }
        Ok(())
    }

    /// Every key with its value, one `key = value` per line.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&self.get(key).expect("every listed key has a value"));
            out.push('\n');
        }
        out
    }
}

/// Loads a config: defaults, then the file (if any), then `ADABATCH_SEED`,
/// then `--set` overrides.
pub fn load(path: Option<&std::path::Path>, overrides: &[String]) -> Result<Config, ConfigError> {
    let mut cfg = Config::default();
    if let Some(p) = path {
        let text = std::fs::read_to_string(p).map_err(|e| ConfigError {
            source: p.display().to_string(),
            line: 0,
            column: 0,
            message: format!("cannot read config: {e}"),
        })?;
        cfg.apply_text(&text, &p.display().to_string())?;
    }
    cfg.apply_seed_env(std::env::var(SEED_ENV).ok().as_deref())?;
    cfg.apply_overrides(overrides, "--set")?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let cfg = Config::default();
        assert_eq!(Config::parse(&cfg.serialize(), "t").unwrap(), cfg);
    }

    #[test]
    fn non_default_round_trips() {
        let mut cfg = Config::default();
        cfg.apply_overrides(
            &[
                "controller.kind=none",
                "controller.b_max=123",
                "run.max_steps=77",
                "data.train=/tmp/a b.csv",
                "schedule.lr=0.1",
                "controller.eta=0.30000000000000004",
                "optimizer.kind=adam",
            ],
            "--set",
        )
        .unwrap();
        let again = Config::parse(&cfg.serialize(), "t").unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.eta, 0.30000000000000004);
    }

    #[test]
    fn every_key_is_gettable_and_settable() {
        let mut cfg = Config::default();
        for key in KEYS {
            let v = cfg.get(key).unwrap();
            cfg.set(key, &v).unwrap();
        }
        assert_eq!(cfg, Config::default());
    }

    #[test]
    fn errors_carry_line_and_column() {
        let e = Config::parse("# c\nrun.seed = 4\n  bogus.key = 1\n", "f.cfg").unwrap_err();
        assert_eq!((e.line, e.column), (3, 3));
        assert!(e.to_string().starts_with("f.cfg:3:3:"));
        let e = Config::parse("controller.eta =  abc", "f.cfg").unwrap_err();
        assert_eq!((e.line, e.column), (1, 19));
        let e = Config::parse("run.seed 4", "f.cfg").unwrap_err();
        assert_eq!(e.line, 1);
        let e = Config::parse("run.seed = 1\nrun.seed = 2", "f.cfg").unwrap_err();
        assert_eq!(e.line, 2);
    }

    #[test]
    fn precedence_is_file_then_env_then_set() {
        let mut cfg = Config::parse("run.seed = 1\ncontroller.eta = 0.2", "f").unwrap();
        cfg.apply_seed_env(Some("5")).unwrap();
        assert_eq!(cfg.seed, 5);
        cfg.apply_overrides(&["run.seed=9", "controller.eta=0.1"], "--set")
            .unwrap();
        assert_eq!((cfg.seed, cfg.eta), (9, 0.1));
        assert!(cfg.apply_seed_env(Some("x")).is_err());
    }

    #[test]
    fn comments_and_underscores() {
        let cfg = Config::parse("run.total_samples = 6_000_000 # budget\n", "f").unwrap();
        assert_eq!(cfg.total_samples, 6_000_000);
    }
}
