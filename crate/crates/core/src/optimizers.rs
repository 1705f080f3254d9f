//! Update rules consuming one batch-mean gradient per step, and
//! learning-rate schedules indexed by samples seen.
//!
//! The AdaGrad family accumulates the current gradient before it is used:
//!
//! ```text
//! AdaGrad:       v_k = v_{k-1} + g_k^2       x_{k+1} = x_k - lr * g_k / sqrt(v_k)   (elementwise)
//! AdaGrad-Norm:  v_k = v_{k-1} + ||g_k||^2   x_{k+1} = x_k - lr * g_k / sqrt(v_k)
//! ```

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::params::ParamVector;
use crate::vecops;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    AdaGrad,
    AdaGradNorm,
    Adam,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 4] = [
        OptimizerKind::Sgd,
        OptimizerKind::AdaGrad,
        OptimizerKind::AdaGradNorm,
        OptimizerKind::Adam,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::AdaGrad => "adagrad",
            OptimizerKind::AdaGradNorm => "adagrad_norm",
            OptimizerKind::Adam => "adam",
        }
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown optimizer `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    /// Initial AdaGrad accumulator; must be positive.
    pub v0: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Adam denominator guard.
    pub eps: f64,
}

impl OptimizerConfig {
    pub fn new(kind: OptimizerKind) -> Self {
        Self {
            kind,
            v0: 1e-8,
            beta1: 0.9,
            beta2: 0.95,
            eps: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v0 > 0.0 && self.v0.is_finite()) {
            return Err(Error::config(format!("v0 must be > 0, got {}", self.v0)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::config(format!("eps must be > 0, got {}", self.eps)));
        }
        Ok(())
    }
}

/// Mutable state of one optimizer over a fixed parameter dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    config: OptimizerConfig,
    /// AdaGrad-Norm accumulator.
    v_scalar: f64,
    /// AdaGrad accumulator.
    v_vec: Vec<f64>,
    /// Adam first and second moments.
    m_vec: Vec<f64>,
    v2_vec: Vec<f64>,
    step_count: u64,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, dim: usize) -> Result<Self> {
        config.validate()?;
        let (v_vec, m_vec, v2_vec) = match config.kind {
            OptimizerKind::AdaGrad => (vec![config.v0; dim], Vec::new(), Vec::new()),
            OptimizerKind::Adam => (Vec::new(), vec![0.0; dim], vec![0.0; dim]),
            _ => (Vec::new(), Vec::new(), Vec::new()),
        };
        Ok(Self {
            config,
            v_scalar: config.v0,
            v_vec,
            m_vec,
            v2_vec,
            step_count: 0,
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.config.kind
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn v_scalar(&self) -> f64 {
        self.v_scalar
    }

    pub fn v_vec(&self) -> &[f64] {
        &self.v_vec
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m_vec
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v2_vec
    }

    /// Applies one update with gradient `grad` and learning rate `lr`.
    pub fn step(&mut self, x: &mut ParamVector, grad: &[f64], lr: f64) -> Result<()> {
        if grad.len() != x.dim() {
            return Err(Error::DimensionMismatch {
                expected: x.dim(),
                got: grad.len(),
            });
        }
        if !vecops::all_finite(grad) {
            return Err(Error::NonFinite("gradient"));
        }
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::config(format!(
                "learning rate must be finite and >= 0, got {lr}"
            )));
        }
        let xs = x.as_mut_slice();
        match self.config.kind {
            OptimizerKind::Sgd => vecops::axpy(-lr, grad, xs),
            OptimizerKind::AdaGrad => {
                for ((xi, gi), vi) in xs.iter_mut().zip(grad).zip(self.v_vec.iter_mut()) {
                    *vi += gi * gi;
                    *xi -= lr * gi / libm::sqrt(*vi);
                }
            }
            OptimizerKind::AdaGradNorm => {
                self.v_scalar += vecops::sq_norm(grad);
                vecops::axpy(-lr / libm::sqrt(self.v_scalar), grad, xs);
            }
            OptimizerKind::Adam => {
                let OptimizerConfig {
                    beta1, beta2, eps, ..
                } = self.config;
                let t = (self.step_count + 1) as i32;
                let bc1 = 1.0 - libm::pow(beta1, f64::from(t));
                let bc2 = 1.0 - libm::pow(beta2, f64::from(t));
                for (((xi, gi), mi), vi) in xs
                    .iter_mut()
                    .zip(grad)
                    .zip(self.m_vec.iter_mut())
                    .zip(self.v2_vec.iter_mut())
                {
                    *mi = beta1 * *mi + (1.0 - beta1) * gi;
                    *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                    let m_hat = *mi / bc1;
                    let v_hat = *vi / bc2;
                    *xi -= lr * m_hat / (libm::sqrt(v_hat) + eps);
                }
            }
        }
        self.step_count += 1;
        x.check_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Constant,
    WarmupCosine,
}

impl ScheduleKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScheduleKind::Constant => "constant",
            ScheduleKind::WarmupCosine => "warmup_cosine",
        }
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Self::Constant),
            "warmup_cosine" => Ok(Self::WarmupCosine),
            other => Err(Error::config(format!("unknown schedule `{other}`"))),
        }
    }
}

/// Learning rate as a function of samples seen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub kind: ScheduleKind,
    pub peak: f64,
    pub min_lr: f64,
    pub warmup_samples: u64,
    pub total_samples: u64,
}

impl LrSchedule {
    pub fn constant(lr: f64) -> Self {
        Self {
            kind: ScheduleKind::Constant,
            peak: lr,
            min_lr: lr,
            warmup_samples: 0,
            total_samples: 0,
        }
    }

    pub fn warmup_cosine(peak: f64, min_lr: f64, warmup_samples: u64, total_samples: u64) -> Self {
        Self {
            kind: ScheduleKind::WarmupCosine,
            peak,
            min_lr,
            warmup_samples,
            total_samples,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.peak > 0.0 && self.peak.is_finite()) {
            return Err(Error::config(format!(
                "learning rate must be > 0, got {}",
                self.peak
            )));
        }
        if self.kind == ScheduleKind::WarmupCosine {
            if !(self.min_lr >= 0.0 && self.min_lr <= self.peak) {
                return Err(Error::config("min_lr must lie in [0, peak]"));
            }
            if self.warmup_samples > self.total_samples {
                return Err(Error::config(
                    "warmup_samples must not exceed total_samples",
                ));
            }
        }
        Ok(())
    }

    /// Linear warmup from 0 to `peak`, then cosine decay to `min_lr` at
    /// `total_samples`; clamps to `min_lr` past the end.
    pub fn lr_at(&self, samples_seen: u64) -> f64 {
        match self.kind {
            ScheduleKind::Constant => self.peak,
            ScheduleKind::WarmupCosine => {
                let (w, total) = (self.warmup_samples, self.total_samples);
                if samples_seen < w {
                    return self.peak * samples_seen as f64 / w as f64;
                }
                if total == w {
                    return if samples_seen == w {
                        self.peak
                    } else {
                        self.min_lr
                    };
                }
                if samples_seen >= total {
                    return self.min_lr;
                }
                let progress = (samples_seen - w) as f64 / (total - w) as f64;
                self.min_lr + 0.5 * (self.peak - self.min_lr) * (1.0 + libm::cos(PI * progress))
            }
        }
    }
}
