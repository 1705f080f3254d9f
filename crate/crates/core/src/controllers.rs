//! Batch-size controllers.
//!
//! Each test reduces to a statistic `T` compared against the current batch
//! size: the test passes iff `T <= b`, and the next batch size is
//! `min(b_max, max(ceil(T), b))`. The enlarged batch is used directly at the
//! next step without re-checking the test on it.

use alloc::format;
use core::str::FromStr;

use log::debug;

use crate::error::{Error, Result};
use crate::stats::{BatchGradStats, StatsRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    Norm,
    NormCoordinatewise,
    InnerProduct,
    AugmentedInnerProduct,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 4] = [
        ControllerKind::Norm,
        ControllerKind::NormCoordinatewise,
        ControllerKind::InnerProduct,
        ControllerKind::AugmentedInnerProduct,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ControllerKind::Norm => "norm",
            ControllerKind::NormCoordinatewise => "norm_coordinatewise",
            ControllerKind::InnerProduct => "inner_product",
            ControllerKind::AugmentedInnerProduct => "augmented_inner_product",
        }
    }

    /// Variance fields the statistic of this kind needs.
    pub fn stats_request(&self) -> StatsRequest {
        let none = StatsRequest::MEAN_ONLY;
        match self {
            ControllerKind::Norm => StatsRequest { norm: true, ..none },
            ControllerKind::NormCoordinatewise => StatsRequest {
                coordinate: true,
                ..none
            },
            ControllerKind::InnerProduct => StatsRequest {
                inner_product: true,
                ..none
            },
            ControllerKind::AugmentedInnerProduct => StatsRequest {
                inner_product: true,
                orthogonal: true,
                ..none
            },
        }
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown controller kind `{s}`")))
    }
}

/// Default guard on `||grad F_B||^2` below which statistics are undefined.
pub const DEFAULT_EPS_GUARD: f64 = 1e-24;

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    pub kind: ControllerKind,
    /// Norm-test constant, in `(0, 1)`.
    pub eta: f64,
    /// Inner-product-test constant, `> 0`.
    pub theta: f64,
    /// Orthogonality-test constant, `> 0`.
    pub nu: f64,
    pub b_max: usize,
    /// Run the test on every `test_every`-th step; other steps keep `b`.
    pub test_every: usize,
    /// Multiply every statistic by `(n - b)/(n - 1)`.
    pub use_fpc: bool,
    pub eps_guard: f64,
}

impl ControllerConfig {
    fn base(kind: ControllerKind, b_max: usize) -> Self {
        Self {
            kind,
            eta: f64::NAN,
            theta: f64::NAN,
            nu: f64::NAN,
            b_max,
            test_every: 1,
            use_fpc: false,
            eps_guard: DEFAULT_EPS_GUARD,
        }
    }

    pub fn norm(eta: f64, b_max: usize) -> Self {
        Self {
            eta,
            ..Self::base(ControllerKind::Norm, b_max)
        }
    }

    pub fn norm_coordinatewise(eta: f64, b_max: usize) -> Self {
        Self {
            eta,
            ..Self::base(ControllerKind::NormCoordinatewise, b_max)
        }
    }

    pub fn inner_product(theta: f64, b_max: usize) -> Self {
        Self {
            theta,
            ..Self::base(ControllerKind::InnerProduct, b_max)
        }
    }

    pub fn augmented_inner_product(theta: f64, nu: f64, b_max: usize) -> Self {
        Self {
            theta,
            nu,
            ..Self::base(ControllerKind::AugmentedInnerProduct, b_max)
        }
    }

    /// Checks the constants the kind needs and `1 <= b_max <= n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        match self.kind {
            ControllerKind::Norm | ControllerKind::NormCoordinatewise => {
                if !(self.eta > 0.0 && self.eta < 1.0) {
                    return Err(Error::config(format!(
                        "eta must lie in (0, 1), got {}",
                        self.eta
                    )));
                }
            }
            ControllerKind::InnerProduct => {
                if !positive(self.theta) {
                    return Err(Error::config(format!(
                        "theta must be > 0, got {}",
                        self.theta
                    )));
                }
            }
            ControllerKind::AugmentedInnerProduct => {
                if !positive(self.theta) || !positive(self.nu) {
                    return Err(Error::config(format!(
                        "theta and nu must be > 0, got theta={} nu={}",
                        self.theta, self.nu
                    )));
                }
            }
        }
        if self.b_max == 0 || self.b_max > n {
            return Err(Error::config(format!(
                "b_max must lie in [1, n={n}], got {}",
                self.b_max
            )));
        }
        if self.test_every == 0 {
            return Err(Error::config("test_every must be >= 1"));
        }
        if !positive(self.eps_guard) {
            return Err(Error::config("eps_guard must be > 0"));
        }
        Ok(())
    }
}

/// Outcome of comparing the statistic with the current batch size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Passed,
    Failed,
    /// The batch gradient was too small for the statistic to be defined.
    Indeterminate,
}

impl Verdict {
    pub fn passed(&self) -> Option<bool> {
        match self {
            Verdict::Passed => Some(true),
            Verdict::Failed => Some(false),
            Verdict::Indeterminate => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerDecision {
    pub next_b: usize,
    /// `None` when the statistic is undefined.
    pub statistic: Option<f64>,
    pub verdict: Verdict,
    /// `(T_ip, T_ortho)` for the augmented test.
    pub components: Option<(f64, f64)>,
    /// Coordinates skipped by the coordinate-wise test for having a
    /// near-zero batch-gradient entry.
    pub skipped_coords: usize,
}

fn guard(stats: &BatchGradStats, eps_guard: f64) -> Result<f64> {
    let sq = stats.mean_grad_sq_norm;
    if sq > eps_guard {
        Ok(sq)
    } else {
        Err(Error::NearStationaryAmbiguity {
            sq_norm: sq,
            guard: eps_guard,
        })
    }
}

fn missing(field: &str) -> Error {
    Error::config(format!("batch statistics are missing `{field}`"))
}

/// `T = fpc * Var / (eta^2 ||grad F_B||^2)`, where `fpc` is the
/// finite-population factor `(n - b)/(n - 1)` when given.
pub fn norm_test_statistic(
    stats: &BatchGradStats,
    eta: f64,
    fpc: Option<f64>,
    eps_guard: f64,
) -> Result<f64> {
    let var = stats.norm_var.ok_or_else(|| missing("norm_var"))?;
    let sq = guard(stats, eps_guard)?;
    Ok(fpc.unwrap_or(1.0) * var / (eta * eta * sq))
}

/// Finite-population factor `(n - b)/(n - 1)`.
pub fn finite_population_factor(n: usize, b: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    (n.saturating_sub(b)) as f64 / (n - 1) as f64
}

/// `T = max_j coord_var[j] / (eta^2 (d_j F_B)^2)`, skipping coordinates with
/// `|d_j F_B| <= sqrt(eps_guard)`. Returns the statistic and the skip count.
pub fn coord_norm_test_statistic(
    stats: &BatchGradStats,
    eta: f64,
    eps_guard: f64,
) -> Result<(f64, usize)> {
    let coord_var = stats
        .coord_var
        .as_ref()
        .ok_or_else(|| missing("coord_var"))?;
    let cutoff = libm::sqrt(eps_guard);
    let mut skipped = 0;
    let mut t = f64::NEG_INFINITY;
    for (&v, &m) in coord_var.iter().zip(&stats.mean_grad) {
        if m.abs() <= cutoff {
            skipped += 1;
            continue;
        }
        t = t.max(v / (eta * eta * m * m));
    }
    if skipped == coord_var.len() {
        return Err(Error::NearStationaryAmbiguity {
            sq_norm: stats.mean_grad_sq_norm,
            guard: eps_guard,
        });
    }
    Ok((t, skipped))
}

/// `T_ip = Var(<g_i, grad F_B>) / (theta^2 ||grad F_B||^4)`
pub fn inner_product_statistic(stats: &BatchGradStats, theta: f64, eps_guard: f64) -> Result<f64> {
    let var = stats.ip_var.ok_or_else(|| missing("ip_var"))?;
    let sq = guard(stats, eps_guard)?;
    Ok(var / (theta * theta * sq * sq))
}

/// `T_ortho = Var(orthogonal residual) / (nu^2 ||grad F_B||^2)`
pub fn orthogonality_statistic(stats: &BatchGradStats, nu: f64, eps_guard: f64) -> Result<f64> {
    let var = stats.ortho_var.ok_or_else(|| missing("ortho_var"))?;
    let sq = guard(stats, eps_guard)?;
    Ok(var / (nu * nu * sq))
}

/// `min(b_max, max(ceil(t), b))`, saturating for huge or infinite `t`.
pub fn next_batch_size(t: f64, current_b: usize, b_max: usize) -> usize {
    let grown = if t.is_nan() {
        current_b
    } else if t >= b_max as f64 {
        b_max
    } else {
        (libm::ceil(t) as usize).max(current_b)
    };
    grown.max(current_b).min(b_max.max(current_b))
}

/// Evaluates the configured test on `stats` and picks the next batch size.
///
/// `n` is the dataset size (used by the finite-population factor). An
/// undefined statistic keeps the current batch size and reports
/// [`Verdict::Indeterminate`]; missing statistics fields are an error.
pub fn decide(
    cfg: &ControllerConfig,
    stats: &BatchGradStats,
    current_b: usize,
    n: usize,
) -> Result<ControllerDecision> {
    let mut components = None;
    let mut skipped_coords = 0;
    let fpc = cfg
        .use_fpc
        .then(|| finite_population_factor(n, stats.batch_size));
    let scale = fpc.unwrap_or(1.0);
    let statistic = match cfg.kind {
        ControllerKind::Norm => norm_test_statistic(stats, cfg.eta, fpc, cfg.eps_guard),
        ControllerKind::NormCoordinatewise => {
            coord_norm_test_statistic(stats, cfg.eta, cfg.eps_guard).map(|(t, skipped)| {
                skipped_coords = skipped;
                scale * t
            })
        }
        ControllerKind::InnerProduct => {
            inner_product_statistic(stats, cfg.theta, cfg.eps_guard).map(|t| scale * t)
        }
        ControllerKind::AugmentedInnerProduct => {
            inner_product_statistic(stats, cfg.theta, cfg.eps_guard).and_then(|t_ip| {
                let t_ortho = orthogonality_statistic(stats, cfg.nu, cfg.eps_guard)?;
                let (t_ip, t_ortho) = (scale * t_ip, scale * t_ortho);
                components = Some((t_ip, t_ortho));
                Ok(t_ip.max(t_ortho))
            })
        }
    };
    match statistic {
        Ok(t) => Ok(ControllerDecision {
            next_b: next_batch_size(t, current_b, cfg.b_max),
            statistic: Some(t),
            verdict: if t <= current_b as f64 {
                Verdict::Passed
            } else {
                Verdict::Failed
            },
            components,
            skipped_coords,
        }),
        Err(Error::NearStationaryAmbiguity { sq_norm, guard }) => {
            debug!("statistic undefined (||grad F_B||^2 = {sq_norm:e} <= {guard:e}); keeping b = {current_b}");
            Ok(ControllerDecision {
                next_b: current_b,
                statistic: None,
                verdict: Verdict::Indeterminate,
                components: None,
                skipped_coords,
            })
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{compute_batch_stats, PerSampleGradBatch};
    use alloc::vec;
    use alloc::vec::Vec;

    fn stats_from(rows: &[Vec<f64>]) -> BatchGradStats {
        compute_batch_stats(
            &PerSampleGradBatch::from_rows(rows).unwrap(),
            StatsRequest::ALL,
        )
        .unwrap()
    }

    fn synthetic_stats(norm_var: f64, mean: Vec<f64>) -> BatchGradStats {
        let sq = mean.iter().map(|m| m * m).sum();
        BatchGradStats {
            batch_size: 4,
            mean_grad: mean,
            mean_grad_sq_norm: sq,
            norm_var: Some(norm_var),
            ip_var: None,
            ortho_var: None,
            coord_var: None,
        }
    }

    #[test]
    fn norm_statistic_hand_value_and_flip_point() {
        let s = synthetic_stats(8.0, vec![2.0, 0.0]);
        let t = norm_test_statistic(&s, 0.5, None, DEFAULT_EPS_GUARD).unwrap();
        assert_eq!(t, 8.0);
        let d = decide(&ControllerConfig::norm(0.5, 64), &s, 4, 100).unwrap();
        assert_eq!((d.next_b, d.verdict), (8, Verdict::Failed));
        // Var/b <= eta^2 ||g||^2 first holds at b = 8.
        for b in 2..20usize {
            let direct = 8.0 / b as f64 <= 0.25 * 4.0;
            assert_eq!(direct, t <= b as f64, "b = {b}");
            assert_eq!(direct, b >= 8);
        }
    }

    #[test]
    fn zero_variance_passes() {
        let s = stats_from(&[vec![1.0, 2.0], vec![1.0, 2.0]]);
        for kind in ControllerKind::ALL {
            let cfg = ControllerConfig {
                kind,
                ..ControllerConfig::augmented_inner_product(0.3, 0.3, 10)
            };
            let cfg = ControllerConfig { eta: 0.3, ..cfg };
            let d = decide(&cfg, &s, 2, 10).unwrap();
            assert_eq!(d.statistic, Some(0.0));
            assert_eq!((d.next_b, d.verdict), (2, Verdict::Passed));
        }
    }

    #[test]
    fn full_batch_with_fpc_always_passes() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, 1.0 - i as f64]).collect();
        let mut s = stats_from(&rows);
        s.batch_size = 6;
        for kind in ControllerKind::ALL {
            let mut cfg = ControllerConfig::augmented_inner_product(0.01, 0.01, 6);
            cfg.kind = kind;
            cfg.eta = 0.01;
            cfg.use_fpc = true;
            let d = decide(&cfg, &s, 6, 6).unwrap();
            assert_eq!(d.statistic, Some(0.0), "{kind:?}");
            assert_eq!(d.verdict, Verdict::Passed);
        }
    }

    #[test]
    fn coordinatewise_hand_value() {
        let mut s = synthetic_stats(2.0, vec![1.0, 5.0]);
        s.coord_var = Some(vec![2.0, 0.0]);
        assert_eq!(
            coord_norm_test_statistic(&s, 1.0, DEFAULT_EPS_GUARD).unwrap(),
            (2.0, 0)
        );
    }

    #[test]
    fn coordinatewise_single_coordinate_equals_norm_test() {
        let s = stats_from(&[vec![1.0], vec![4.0], vec![-0.5]]);
        let (tc, _) = coord_norm_test_statistic(&s, 0.3, DEFAULT_EPS_GUARD).unwrap();
        let tn = norm_test_statistic(&s, 0.3, None, DEFAULT_EPS_GUARD).unwrap();
        assert!((tc - tn).abs() <= 1e-12 * tn);
    }

    #[test]
    fn coordinatewise_skips_dead_coordinates() {
        let s = stats_from(&[vec![1.0, 0.0, 2.0], vec![3.0, 0.0, 2.5]]);
        let (t, skipped) = coord_norm_test_statistic(&s, 0.5, DEFAULT_EPS_GUARD).unwrap();
        assert_eq!(skipped, 1);
        assert!(t.is_finite());
        let dead = compute_batch_stats(
            &PerSampleGradBatch::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap(),
            ControllerKind::NormCoordinatewise.stats_request(),
        )
        .unwrap();
        assert!(matches!(
            coord_norm_test_statistic(&dead, 0.5, DEFAULT_EPS_GUARD),
            Err(Error::NearStationaryAmbiguity { .. })
        ));
    }

    #[test]
    fn inner_product_and_orthogonality_hand_values() {
        let s = stats_from(&[vec![1.0, 0.0], vec![3.0, 0.0]]);
        let t = inner_product_statistic(&s, 1.0, DEFAULT_EPS_GUARD).unwrap();
        assert_eq!(t, 0.5);
        let d = decide(&ControllerConfig::inner_product(1.0, 8), &s, 2, 8).unwrap();
        assert_eq!((d.next_b, d.verdict), (2, Verdict::Passed));

        let s = stats_from(&[vec![1.0, 1.0], vec![1.0, -1.0]]);
        assert_eq!(
            orthogonality_statistic(&s, 1.0, DEFAULT_EPS_GUARD).unwrap(),
            2.0
        );
        let d = decide(
            &ControllerConfig::augmented_inner_product(1.0, 1.0, 8),
            &s,
            2,
            8,
        )
        .unwrap();
        assert_eq!(d.components, Some((0.0, 2.0)));
        assert_eq!(d.statistic, Some(2.0));
        assert_eq!(d.verdict, Verdict::Passed);
    }

    #[test]
    fn decision_table() {
        let cfg = |b_max| ControllerConfig::norm(0.5, b_max);
        let s = |t: f64| synthetic_stats(t * 0.25, vec![1.0]);
        let d = decide(&cfg(64), &s(0.5), 8, 100).unwrap();
        assert_eq!((d.next_b, d.verdict), (8, Verdict::Passed));
        let d = decide(&cfg(64), &s(23.2), 8, 100).unwrap();
        assert_eq!((d.next_b, d.verdict), (24, Verdict::Failed));
        let d = decide(&cfg(64), &s(1e6), 8, 100).unwrap();
        assert_eq!((d.next_b, d.verdict), (64, Verdict::Failed));
    }

    #[test]
    fn near_stationary_keeps_batch() {
        let s = synthetic_stats(1.0, vec![1e-13]);
        let d = decide(&ControllerConfig::norm(0.5, 64), &s, 8, 100).unwrap();
        assert_eq!(d.next_b, 8);
        assert_eq!(d.verdict, Verdict::Indeterminate);
        assert_eq!(d.statistic, None);
    }

    #[test]
    fn missing_fields_are_errors() {
        let s = synthetic_stats(1.0, vec![1.0]);
        assert!(decide(&ControllerConfig::inner_product(0.1, 8), &s, 2, 8).is_err());
    }

    #[test]
    fn validation() {
        assert!(ControllerConfig::norm(0.5, 10).validate(10).is_ok());
        assert!(ControllerConfig::norm(0.5, 11).validate(10).is_err());
        assert!(ControllerConfig::norm(1.0, 10).validate(10).is_err());
        assert!(ControllerConfig::inner_product(0.0, 10)
            .validate(10)
            .is_err());
        assert!(ControllerConfig::augmented_inner_product(0.1, f64::NAN, 10)
            .validate(10)
            .is_err());
        assert!("spiral".parse::<ControllerKind>().is_err());
        for k in ControllerKind::ALL {
            assert_eq!(k.as_str().parse::<ControllerKind>().unwrap(), k);
        }
    }

    #[test]
    fn halving_eta_quadruples_statistic() {
        let s = synthetic_stats(3.0, vec![0.7, -0.2]);
        let t1 = norm_test_statistic(&s, 0.4, None, DEFAULT_EPS_GUARD).unwrap();
        let t2 = norm_test_statistic(&s, 0.2, None, DEFAULT_EPS_GUARD).unwrap();
        assert!((t2 - 4.0 * t1).abs() <= 1e-12 * t2);
    }
}
