//! Diagnostics audit: gradient check, approximate-vs-exact agreement, the
//! second-moment bound and the partial-sum inequalities, reported as JSON.

use adabatch_core::controllers::ControllerKind;
use adabatch_core::data::Dataset;
use adabatch_core::diagnostics::{
    approx_exact_agreement, esg_check_on, fd_gradient_check, seq_lemma_check, EsgKind,
    GradientTable,
};
use adabatch_core::objectives::{Differentiable, Objective};
use adabatch_core::{Error, ParamVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::Config;
use crate::failure::Failure;

pub const AUDIT_JSON: &str = "audit.json";

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Set when a precondition did not hold; a skipped check counts as passed.
    pub skipped: Option<String>,
    pub values: Value,
    pub std_err: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl AuditReport {
    pub fn failed(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.to_owned())
            .collect()
    }
}

/// Delegates to an objective, shifting the first gradient coordinate.
struct Shifted<'a> {
    inner: &'a Objective,
    delta: f64,
}

impl Differentiable for Shifted<'_> {
    fn param_dim(&self) -> usize {
        self.inner.param_dim()
    }

    fn check_dataset(&self, data: &Dataset) -> adabatch_core::Result<()> {
        self.inner.check_dataset(data)
    }

    fn sample_loss(&self, x: &[f64], data: &Dataset, i: usize) -> f64 {
        self.inner.sample_loss(x, data, i)
    }

    fn sample_grad(&self, x: &[f64], data: &Dataset, i: usize, out: &mut [f64]) -> f64 {
        let loss = self.inner.sample_grad(x, data, i, out);
        out[0] += self.delta;
        loss
    }
}

/// Runs every check at a random iterate near the configured initialisation.
pub fn run_audit(cfg: &Config, obj: &Objective, data: &Dataset) -> Result<AuditReport, Failure> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let shifted = Shifted {
        inner: obj,
        delta: cfg.audit_corrupt_gradient,
    };
    let init = obj.init_params(cfg.seed);
    let x = ParamVector::new(init.iter().map(|v| v + rng.gen_range(-0.5..0.5)).collect())?;
    let sigmas = cfg.audit_sigmas;

    let mut checks = Vec::new();

    let mut worst: f64 = 0.0;
    let samples = cfg.audit_fd_samples.max(1);
    for _ in 0..samples {
        let i = rng.gen_range(0..data.len());
        worst = worst.max(fd_gradient_check(&shifted, &x, data, i, cfg.audit_fd_step)?);
    }
    checks.push(Check {
        name: "fd_gradient",
        passed: worst <= cfg.audit_fd_tol,
        skipped: None,
        values: json!({ "max_abs_err": worst, "tolerance": cfg.audit_fd_tol, "samples": samples, "step": cfg.audit_fd_step }),
        std_err: None,
    });

    let table = GradientTable::new(&shifted, &x, data)?;
    let b = cfg.audit_batch.clamp(2, data.len().max(2));
    let agreement = approx_exact_agreement(&table, b, cfg.audit_resamples, &mut rng)?;
    checks.push(Check {
        name: "approx_vs_exact",
        passed: agreement.within(sigmas),
        skipped: None,
        values: json!({
            "batch_size": b,
            "approx_mean": agreement.approx.mean,
            "exact_mean": agreement.exact.mean,
            "difference": agreement.difference(),
            "sigmas": sigmas,
        }),
        std_err: Some(agreement.diff_std_err),
    });

    checks.push(esg(cfg, &table, data.len(), &mut rng)?);
    checks.push(lemma(cfg.audit_lemma_sequences, &mut rng)?);

    Ok(AuditReport {
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}

fn esg(
    cfg: &Config,
    table: &GradientTable,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Check, Failure> {
    let kind = match cfg.controller {
        Some(ControllerKind::NormCoordinatewise) => EsgKind::Coordinatewise { eta: cfg.eta },
        Some(ControllerKind::InnerProduct | ControllerKind::AugmentedInnerProduct) => {
            EsgKind::Augmented {
                theta: cfg.theta,
                nu: cfg.nu,
            }
        }
        Some(ControllerKind::Norm) | None => EsgKind::Norm { eta: cfg.eta },
    };
    let skip = |reason: String| Check {
        name: "esg",
        passed: true,
        skipped: Some(reason),
        values: json!({ "kind": format!("{kind:?}") }),
        std_err: None,
    };
    let moments = table.moments();
    if moments.grad_sq_norm == 0.0 {
        return Ok(skip("full gradient is zero".to_owned()));
    }
    let required = match kind {
        EsgKind::Norm { eta } => moments.norm_test_batch(eta),
        EsgKind::Coordinatewise { eta } => {
            moments.coordinatewise_test_batch(eta, table.full_gradient())
        }
        EsgKind::Augmented { theta, nu } => moments.augmented_test_batch(theta, nu),
    };
    // Twice the smallest passing batch keeps the Monte-Carlo precondition clear of its boundary.
    let b = required.saturating_mul(2).max(2);
    if b > n {
        return Ok(skip(format!(
            "exact test needs b >= {required}, more than half of n = {n}"
        )));
    }
    match esg_check_on(table, b, kind, cfg.audit_resamples, rng) {
        Ok(est) => Ok(Check {
            name: "esg",
            passed: est.within_bound(cfg.audit_sigmas)
                && est.tau_hat >= 1.0 - cfg.audit_sigmas * est.std_err,
            skipped: None,
            values: json!({
                "kind": format!("{kind:?}"),
                "batch_size": b,
                "tau_hat": est.tau_hat,
                "tau_bound": est.tau_bound,
                "n_resamples": est.n_resamples,
                "coordinate_tau_max": est.coordinates.as_ref().map(|c| c.tau_hat.iter().copied().fold(0.0, f64::max)),
            }),
            std_err: Some(est.std_err),
        }),
        Err(Error::PreconditionNotMet(m)) => Ok(skip(m)),
        Err(e) => Err(e.into()),
    }
}

fn lemma(count: usize, rng: &mut ChaCha8Rng) -> Result<Check, Failure> {
    let mut violations = 0;
    let mut worst_ratio: f64 = 0.0;
    for _ in 0..count {
        let len = rng.gen_range(1..=200);
        let a: Vec<f64> = (0..len)
            .map(|k| {
                let magnitude = 10f64.powf(rng.gen_range(-6.0..6.0));
                if k > 0 && rng.gen_bool(0.2) {
                    0.0
                } else {
                    magnitude * rng.gen::<f64>() + if k == 0 { 1e-9 } else { 0.0 }
                }
            })
            .collect();
        let c = seq_lemma_check(&a)?;
        if !c.holds() {
            violations += 1;
        }
        worst_ratio = worst_ratio.max(c.lhs1 / c.bound1);
        if c.bound2 > 0.0 {
            worst_ratio = worst_ratio.max(c.lhs2 / c.bound2);
        }
    }
    Ok(Check {
        name: "seq_lemma",
        passed: violations == 0,
        skipped: None,
        values: json!({ "sequences": count, "violations": violations, "max_lhs_over_bound": worst_ratio }),
        std_err: None,
    })
}
