//! Adaptive batch-size schemes for minibatch stochastic optimizers.
//!
//! The crate is `no_std` with `alloc`. It contains everything that is pure
//! computation: batch-gradient statistics, per-sample-gradient objectives,
//! batch-size controllers (norm, coordinate-wise norm, inner-product and
//! augmented inner-product tests), the SGD / AdaGrad / AdaGrad-Norm / Adam
//! update rules, the budget-driven training loop and the Monte-Carlo
//! diagnostics used to audit the variance conditions. File formats, the
//! config language and the command line live in the `adabatch` crate.
//!
//! A minimal run:
//!
//! ```
//! use adabatch_core::controllers::{ControllerConfig, ControllerKind};
//! use adabatch_core::data::{make_synthetic, SyntheticKind, SyntheticSpec};
//! use adabatch_core::objectives::Objective;
//! use adabatch_core::optimizers::{LrSchedule, OptimizerConfig, OptimizerKind};
//! use adabatch_core::trainer::{run, RunConfig};
//!
//! let data = make_synthetic(&SyntheticSpec {
//!     kind: SyntheticKind::GaussianBlobs,
//!     n: 200,
//!     p: 4,
//!     classes: 3,
//!     noise: 1.0,
//!     seed: 7,
//! })
//! .unwrap();
//! let objective = Objective::logistic(4, 3, 0.0);
//! let mut cfg = RunConfig::new(objective, OptimizerConfig::new(OptimizerKind::AdaGrad), 2_000);
//! cfg.schedule = LrSchedule::constant(0.05);
//! cfg.controller = Some(ControllerConfig::norm(0.25, 200));
//! let out = run(&cfg, &data, None).unwrap();
//! assert!(out.summary.samples >= 2_000);
//! ```
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod controllers;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod objectives;
pub mod optimizers;
pub mod params;
pub mod sampling;
pub mod stats;
pub mod trainer;
mod vecops;

pub use error::{Error, Result};
pub use params::ParamVector;
pub use stats::{compute_batch_stats, BatchGradStats, PerSampleGradBatch, StatsRequest};
