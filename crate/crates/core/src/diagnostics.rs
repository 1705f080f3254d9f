//! Oracles for the exact-variance conditions behind the controllers.
//!
//! The controllers only ever see batch statistics. The checks here use the
//! full dataset instead: population moments of the per-sample gradients,
//! Monte-Carlo expectations over i.i.d. (with-replacement) batches, central
//! finite differences and the two telescoping-sum inequalities used by the
//! AdaGrad-Norm analysis. Every Monte-Carlo quantity carries a standard error.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::objectives::Differentiable;
use crate::params::ParamVector;
use crate::sampling::{sample_batch, Sampling};
use crate::stats::{compute_batch_stats, MeanAccumulator, PerSampleGradBatch, StatsRequest};
use crate::vecops;

/// Default number of Monte-Carlo batches.
pub const DEFAULT_RESAMPLES: usize = 2000;

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
}

/// Welford accumulator for a stream of scalars.
#[derive(Debug, Clone, Default)]
struct Running {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Running {
    fn push(&mut self, v: f64) {
        self.n += 1;
        let delta = v - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (v - self.mean);
    }

    fn estimate(&self) -> Estimate {
        let std_err = if self.n > 1 {
            libm::sqrt(self.m2 / (self.n - 1) as f64 / self.n as f64)
        } else {
            0.0
        };
        Estimate {
            mean: self.mean,
            std_err,
        }
    }
}

/// All per-sample gradients of a dataset at one iterate, with the full gradient.
#[derive(Debug, Clone)]
pub struct GradientTable {
    grads: PerSampleGradBatch,
    full: Vec<f64>,
}

impl GradientTable {
    pub fn new<O: Differentiable + ?Sized>(
        obj: &O,
        x: &ParamVector,
        data: &Dataset,
    ) -> Result<Self> {
        let all: Vec<usize> = (0..data.len()).collect();
        let grads = obj.per_sample_grads(x, data, &all)?;
        // One correction pass makes the mean of identical rows equal the row exactly.
        let mut full = grads.mean();
        let mut corr = MeanAccumulator::new(full.len());
        let mut dev = vec![0.0; full.len()];
        for row in grads.rows() {
            for ((d, r), m) in dev.iter_mut().zip(row).zip(&full) {
                *d = r - m;
            }
            corr.add_row(&dev);
        }
        vecops::axpy(1.0, &corr.finish(), &mut full);
        Ok(Self { grads, full })
    }

    pub fn full_gradient(&self) -> &[f64] {
        &self.full
    }

    pub fn len(&self) -> usize {
        self.grads.batch_size()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.grads.row(i)
    }

    /// `grad F_B - grad F` for `batch` (indices into the table), accumulated
    /// as the mean of per-row deviations.
    pub fn batch_deviation(&self, batch: &[usize]) -> Vec<f64> {
        let mut acc = MeanAccumulator::new(self.full.len());
        let mut dev = vec![0.0; self.full.len()];
        for &i in batch {
            for ((d, r), m) in dev.iter_mut().zip(self.grads.row(i)).zip(&self.full) {
                *d = r - m;
            }
            acc.add_row(&dev);
        }
        acc.finish()
    }

    /// Mean gradient over `batch`.
    pub fn batch_mean(&self, batch: &[usize]) -> Vec<f64> {
        let mut mean = self.batch_deviation(batch);
        vecops::axpy(1.0, &self.full, &mut mean);
        mean
    }

    pub fn batch(&self, batch: &[usize]) -> Result<PerSampleGradBatch> {
        let d = self.full.len();
        let mut flat = Vec::with_capacity(batch.len() * d);
        for &i in batch {
            flat.extend_from_slice(self.grads.row(i));
        }
        PerSampleGradBatch::new(flat, d, batch.to_vec())
    }

    /// Population (divisor `n`) moments of the per-sample gradients.
    pub fn moments(&self) -> PopulationMoments {
        let n = self.len() as f64;
        let g = &self.full;
        let sq = vecops::sq_norm(g);
        let mut norm_var = 0.0;
        let mut ip_var = 0.0;
        let mut ortho_var = 0.0;
        let mut coord_var = vec![0.0; g.len()];
        for row in self.grads.rows() {
            for (j, (r, m)) in row.iter().zip(g).enumerate() {
                let dev = (r - m) * (r - m);
                coord_var[j] += dev;
                norm_var += dev;
            }
            let ip = vecops::dot(row, g);
            ip_var += (ip - sq) * (ip - sq);
            if sq > 0.0 {
                let c = ip / sq;
                ortho_var += row
                    .iter()
                    .zip(g)
                    .map(|(r, m)| (r - c * m) * (r - c * m))
                    .sum::<f64>();
            }
        }
        vecops::scale(1.0 / n, &mut coord_var);
        PopulationMoments {
            grad_sq_norm: sq,
            norm_var: norm_var / n,
            ip_var: ip_var / n,
            ortho_var: if sq > 0.0 { ortho_var / n } else { f64::NAN },
            coord_var,
        }
    }
}

/// Single-draw moments of `grad f(x; xi)` for `xi` uniform over the dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationMoments {
    pub grad_sq_norm: f64,
    /// `E ||grad f_i - grad F||^2`
    pub norm_var: f64,
    /// `E (<grad f_i, grad F> - ||grad F||^2)^2`
    pub ip_var: f64,
    /// `E ||grad f_i - proj_{grad F} grad f_i||^2`; NaN when `grad F = 0`.
    pub ortho_var: f64,
    pub coord_var: Vec<f64>,
}

impl PopulationMoments {
    /// Smallest i.i.d. batch size for which the exact norm test holds.
    pub fn norm_test_batch(&self, eta: f64) -> usize {
        ceil_batch(self.norm_var / (eta * eta * self.grad_sq_norm))
    }

    /// Smallest batch size for which both exact inner-product and orthogonality tests hold.
    pub fn augmented_test_batch(&self, theta: f64, nu: f64) -> usize {
        let sq = self.grad_sq_norm;
        ceil_batch((self.ip_var / (theta * theta * sq * sq)).max(self.ortho_var / (nu * nu * sq)))
    }

    /// Smallest batch size for which the exact test holds on every coordinate.
    pub fn coordinatewise_test_batch(&self, eta: f64, grad: &[f64]) -> usize {
        let t = self
            .coord_var
            .iter()
            .zip(grad)
            .map(|(v, g)| v / (eta * eta * g * g))
            .fold(0.0, f64::max);
        ceil_batch(t)
    }
}

fn ceil_batch(t: f64) -> usize {
    if t.is_finite() {
        (libm::ceil(t) as usize).max(1)
    } else {
        usize::MAX
    }
}

/// One exact-variance condition `lhs <= rhs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactTestResult {
    pub lhs: f64,
    pub rhs: f64,
    /// Zero for conditions evaluated in closed form.
    pub std_err: f64,
    pub holds: bool,
}

fn check_nonzero_gradient(table: &GradientTable) -> Result<f64> {
    let sq = vecops::sq_norm(table.full_gradient());
    if sq == 0.0 {
        Err(Error::ZeroMeanGradient)
    } else {
        Ok(sq)
    }
}

fn check_resampling(b: usize, n_resamples: usize) -> Result<()> {
    if b == 0 {
        return Err(Error::EmptyBatch);
    }
    if n_resamples < 2 {
        return Err(Error::config("need at least 2 Monte-Carlo resamples"));
    }
    Ok(())
}

/// Monte-Carlo estimate of `E ||grad F_B(x) - grad F(x)||^2` over i.i.d.
/// batches of size `b`, compared with `eta^2 ||grad F(x)||^2`.
pub fn exact_norm_test<O, R>(
    obj: &O,
    x: &ParamVector,
    data: &Dataset,
    b: usize,
    eta: f64,
    n_resamples: usize,
    rng: &mut R,
) -> Result<ExactTestResult>
where
    O: Differentiable + ?Sized,
    R: Rng + ?Sized,
{
    let table = GradientTable::new(obj, x, data)?;
    exact_norm_test_on(&table, b, eta, n_resamples, Sampling::WithReplacement, rng)
}

/// [`exact_norm_test`] on a precomputed table, with a choice of sampling mode.
pub fn exact_norm_test_on<R: Rng + ?Sized>(
    table: &GradientTable,
    b: usize,
    eta: f64,
    n_resamples: usize,
    sampling: Sampling,
    rng: &mut R,
) -> Result<ExactTestResult> {
    check_resampling(b, n_resamples)?;
    let sq = check_nonzero_gradient(table)?;
    let mut err = Running::default();
    for _ in 0..n_resamples {
        let batch = sample_batch(rng, table.len(), b, sampling)?;
        err.push(vecops::sq_norm(&table.batch_deviation(&batch)));
    }
    let est = err.estimate();
    let rhs = eta * eta * sq;
    Ok(ExactTestResult {
        lhs: est.mean,
        rhs,
        std_err: est.std_err,
        holds: est.mean <= rhs,
    })
}

/// `(1/b) E (<grad f_i, grad F> - ||grad F||^2)^2 <= theta^2 ||grad F||^4`, in closed form.
pub fn exact_inner_product_test(
    moments: &PopulationMoments,
    b: usize,
    theta: f64,
) -> ExactTestResult {
    let sq = moments.grad_sq_norm;
    let lhs = moments.ip_var / b as f64;
    let rhs = theta * theta * sq * sq;
    ExactTestResult {
        lhs,
        rhs,
        std_err: 0.0,
        holds: lhs <= rhs,
    }
}

/// `(1/b) E ||grad f_i - proj grad f_i||^2 <= nu^2 ||grad F||^2`, in closed form.
pub fn exact_orthogonality_test(moments: &PopulationMoments, b: usize, nu: f64) -> ExactTestResult {
    let lhs = moments.ortho_var / b as f64;
    let rhs = nu * nu * moments.grad_sq_norm;
    ExactTestResult {
        lhs,
        rhs,
        std_err: 0.0,
        holds: lhs <= rhs,
    }
}

/// Which exact test guards the second-moment bound, and its constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EsgKind {
    /// `tau = 1 + eta^2`
    Norm { eta: f64 },
    /// Per coordinate, `tau = 1 + eta^2`.
    Coordinatewise { eta: f64 },
    /// `tau = 1 + theta^2 + nu^2`
    Augmented { theta: f64, nu: f64 },
}

impl EsgKind {
    pub fn tau_bound(&self) -> f64 {
        match *self {
            EsgKind::Norm { eta } | EsgKind::Coordinatewise { eta } => 1.0 + eta * eta,
            EsgKind::Augmented { theta, nu } => 1.0 + theta * theta + nu * nu,
        }
    }
}

/// Per-coordinate second-moment ratios `E[(d_j F_B)^2] / (d_j F)^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordEsg {
    pub tau_hat: Vec<f64>,
    pub std_err: Vec<f64>,
}

/// Monte-Carlo estimate of `E ||grad F_B||^2 / ||grad F||^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct EsgEstimate {
    pub tau_hat: f64,
    pub tau_bound: f64,
    pub n_resamples: usize,
    pub std_err: f64,
    pub coordinates: Option<CoordEsg>,
}

impl EsgEstimate {
    /// Whether every estimate lies below its bound plus `sigmas` standard errors.
    pub fn within_bound(&self, sigmas: f64) -> bool {
        let scalar = self.tau_hat <= self.tau_bound + sigmas * self.std_err;
        let coords = self.coordinates.as_ref().map_or(true, |c| {
            c.tau_hat
                .iter()
                .zip(&c.std_err)
                .all(|(t, s)| *t <= self.tau_bound + sigmas * s)
        });
        scalar && coords
    }
}

/// Checks the exact test named by `kind` at `(x, b)` and, if it holds,
/// estimates the second-moment ratio over `n_resamples` i.i.d. batches.
pub fn esg_check<O, R>(
    obj: &O,
    x: &ParamVector,
    data: &Dataset,
    b: usize,
    kind: EsgKind,
    n_resamples: usize,
    rng: &mut R,
) -> Result<EsgEstimate>
where
    O: Differentiable + ?Sized,
    R: Rng + ?Sized,
{
    let table = GradientTable::new(obj, x, data)?;
    esg_check_on(&table, b, kind, n_resamples, rng)
}

pub fn esg_check_on<R: Rng + ?Sized>(
    table: &GradientTable,
    b: usize,
    kind: EsgKind,
    n_resamples: usize,
    rng: &mut R,
) -> Result<EsgEstimate> {
    check_resampling(b, n_resamples)?;
    let sq = check_nonzero_gradient(table)?;
    let grad = table.full_gradient();
    match kind {
        EsgKind::Norm { eta } => {
            let pre =
                exact_norm_test_on(table, b, eta, n_resamples, Sampling::WithReplacement, rng)?;
            if !pre.holds {
                return Err(Error::PreconditionNotMet(format!(
                    "exact norm test fails at b={b}: {:.6e} > {:.6e}",
                    pre.lhs, pre.rhs
                )));
            }
        }
        EsgKind::Augmented { theta, nu } => {
            let m = table.moments();
            let ip = exact_inner_product_test(&m, b, theta);
            let ortho = exact_orthogonality_test(&m, b, nu);
            if !(ip.holds && ortho.holds) {
                return Err(Error::PreconditionNotMet(format!(
                    "exact augmented inner-product test fails at b={b}: ip {:.6e} vs {:.6e}, ortho {:.6e} vs {:.6e}",
                    ip.lhs, ip.rhs, ortho.lhs, ortho.rhs
                )));
            }
        }
        EsgKind::Coordinatewise { eta } => {
            let mut dev = vec![Running::default(); grad.len()];
            for _ in 0..n_resamples {
                let batch = sample_batch(rng, table.len(), b, Sampling::WithReplacement)?;
                for (r, d) in dev.iter_mut().zip(table.batch_deviation(&batch)) {
                    r.push(d * d);
                }
            }
            if let Some((j, lhs)) = dev
                .iter()
                .map(Running::estimate)
                .enumerate()
                .find(|(j, e)| e.mean > eta * eta * grad[*j] * grad[*j])
            {
                return Err(Error::PreconditionNotMet(format!(
                    "coordinate-wise exact norm test fails at b={b}, coordinate {j}: {:.6e} > {:.6e}",
                    lhs.mean,
                    eta * eta * grad[j] * grad[j]
                )));
            }
        }
    }

    let mut ratio = Running::default();
    let mut coords = match kind {
        EsgKind::Coordinatewise { .. } => Some(vec![Running::default(); grad.len()]),
        _ => None,
    };
    for _ in 0..n_resamples {
        let batch = sample_batch(rng, table.len(), b, Sampling::WithReplacement)?;
        let mean = table.batch_mean(&batch);
        ratio.push(vecops::sq_norm(&mean) / sq);
        if let Some(c) = coords.as_mut() {
            for ((r, m), g) in c.iter_mut().zip(&mean).zip(grad) {
                r.push(m * m / (g * g));
            }
        }
    }
    let est = ratio.estimate();
    let coordinates = coords.map(|c| {
        let (tau_hat, std_err) = c
            .iter()
            .map(|r| {
                let e = r.estimate();
                (e.mean, e.std_err)
            })
            .unzip();
        CoordEsg { tau_hat, std_err }
    });
    Ok(EsgEstimate {
        tau_hat: est.mean,
        tau_bound: kind.tau_bound(),
        n_resamples,
        std_err: est.std_err,
        coordinates,
    })
}

/// Paired Monte-Carlo comparison of the approximate norm-test numerator
/// (per-batch sample variance over `b`) with the exact one
/// (`||grad F_B - grad F||^2`) on the same i.i.d. batches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Agreement {
    pub approx: Estimate,
    pub exact: Estimate,
    /// Standard error of the paired difference.
    pub diff_std_err: f64,
}

impl Agreement {
    pub fn difference(&self) -> f64 {
        self.approx.mean - self.exact.mean
    }

    pub fn within(&self, sigmas: f64) -> bool {
        self.difference().abs() <= sigmas * self.diff_std_err
    }
}

pub fn approx_exact_agreement<R: Rng + ?Sized>(
    table: &GradientTable,
    b: usize,
    n_resamples: usize,
    rng: &mut R,
) -> Result<Agreement> {
    check_resampling(b, n_resamples)?;
    if b < 2 {
        return Err(Error::DegenerateBatch { b });
    }
    let mut approx = Running::default();
    let mut exact = Running::default();
    let mut diff = Running::default();
    for _ in 0..n_resamples {
        let batch = sample_batch(rng, table.len(), b, Sampling::WithReplacement)?;
        let stats = compute_batch_stats(&table.batch(&batch)?, StatsRequest::default())?;
        let a = stats.norm_var.unwrap_or(0.0) / b as f64;
        let e = vecops::sq_dist(&stats.mean_grad, table.full_gradient());
        approx.push(a);
        exact.push(e);
        diff.push(a - e);
    }
    Ok(Agreement {
        approx: approx.estimate(),
        exact: exact.estimate(),
        diff_std_err: diff.estimate().std_err,
    })
}

/// Largest absolute gap between the analytic gradient of sample `sample` and
/// central differences with step `h`.
pub fn fd_gradient_check<O: Differentiable + ?Sized>(
    obj: &O,
    x: &ParamVector,
    data: &Dataset,
    sample: usize,
    h: f64,
) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::config(format!(
            "finite-difference step must be > 0, got {h}"
        )));
    }
    let analytic = obj.per_sample_grads(x, data, &[sample])?;
    let mut probe = x.as_slice().to_vec();
    let mut worst: f64 = 0.0;
    for (j, g) in analytic.row(0).iter().enumerate() {
        let orig = probe[j];
        probe[j] = orig + h;
        let up = obj.sample_loss(&probe, data, sample);
        probe[j] = orig - h;
        let down = obj.sample_loss(&probe, data, sample);
        probe[j] = orig;
        worst = worst.max(((up - down) / (2.0 * h) - g).abs());
    }
    Ok(worst)
}

/// Both sides of the two partial-sum inequalities for a non-negative sequence
/// `a_0, ..., a_K` with `a_0 > 0`:
///
/// ```text
/// sum_{k=1..K} a_k / (sum_{i<=k} a_i)^{3/2} <= 2 / sqrt(a_0)
/// sum_{k=1..K} a_k / sum_{i<=k} a_i         <= log(sum_{k<=K} a_k) - log(a_0)
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeqLemmaCheck {
    pub lhs1: f64,
    pub bound1: f64,
    pub lhs2: f64,
    pub bound2: f64,
}

impl SeqLemmaCheck {
    /// Both inequalities hold up to a relative rounding allowance of `1e-12`.
    pub fn holds(&self) -> bool {
        let ok = |lhs: f64, bound: f64| lhs <= bound + 1e-12 * bound.abs().max(1.0);
        ok(self.lhs1, self.bound1) && ok(self.lhs2, self.bound2)
    }
}

pub fn seq_lemma_check(a: &[f64]) -> Result<SeqLemmaCheck> {
    let Some(&a0) = a.first() else {
        return Err(Error::config("sequence must contain a_0"));
    };
    if !(a0 > 0.0 && a0.is_finite()) {
        return Err(Error::config(format!("a_0 must be positive, got {a0}")));
    }
    if a.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::config(
            "sequence entries must be finite and non-negative",
        ));
    }
    let mut partial = a0;
    let mut lhs1 = 0.0;
    let mut lhs2 = 0.0;
    for &ak in &a[1..] {
        partial += ak;
        lhs1 += ak / (partial * libm::sqrt(partial));
        lhs2 += ak / partial;
    }
    Ok(SeqLemmaCheck {
        lhs1,
        bound1: 2.0 / libm::sqrt(a0),
        lhs2,
        bound2: libm::log(partial) - libm::log(a0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_synthetic, SyntheticKind, SyntheticSpec, Targets};
    use crate::objectives::Objective;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn anchors(noise: f64) -> Dataset {
        make_synthetic(&SyntheticSpec {
            kind: SyntheticKind::QuadraticAnchors,
            n: 40,
            p: 3,
            classes: 2,
            noise,
            seed: 8,
        })
        .unwrap()
    }

    fn off_center() -> ParamVector {
        ParamVector::new(vec![3.0, -2.0, 1.5]).unwrap()
    }

    #[test]
    fn zero_noise_has_zero_exact_lhs_and_unit_tau() {
        let data = anchors(0.0);
        let obj = Objective::quadratic(3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = exact_norm_test(&obj, &off_center(), &data, 3, 0.1, 200, &mut rng).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert!(r.holds);
        let e = esg_check(
            &obj,
            &off_center(),
            &data,
            3,
            EsgKind::Norm { eta: 0.1 },
            200,
            &mut rng,
        )
        .unwrap();
        assert!((e.tau_hat - 1.0).abs() < 1e-12);
        assert!(e.within_bound(0.0));
    }

    #[test]
    fn full_batch_without_replacement_is_deterministic() {
        let data = anchors(1.0);
        let table = GradientTable::new(&Objective::quadratic(3), &off_center(), &data).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = exact_norm_test_on(&table, 40, 0.5, 50, Sampling::WithoutReplacement, &mut rng)
            .unwrap();
        assert!(r.lhs < 1e-28);
        assert!(r.holds);
    }

    #[test]
    fn zero_full_gradient_is_rejected() {
        let data = Dataset::new(vec![1.0, -1.0], 1, Targets::None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = exact_norm_test(
            &Objective::quadratic(1),
            &ParamVector::zeros(1),
            &data,
            2,
            0.5,
            10,
            &mut rng,
        );
        assert_eq!(r, Err(Error::ZeroMeanGradient));
    }

    #[test]
    fn failing_precondition_is_reported() {
        let data = anchors(3.0);
        let obj = Objective::quadratic(3);
        let x = ParamVector::new(vec![0.01, 0.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = esg_check(
            &obj,
            &x,
            &data,
            1,
            EsgKind::Norm { eta: 0.1 },
            100,
            &mut rng,
        );
        assert!(matches!(r, Err(Error::PreconditionNotMet(_))));
    }

    #[test]
    fn coordinatewise_single_dimension_matches_scalar() {
        let data = Dataset::new(
            (0..30).map(|i| f64::from(i) * 0.1).collect(),
            1,
            Targets::None,
        )
        .unwrap();
        let obj = Objective::quadratic(1);
        let x = ParamVector::new(vec![10.0]).unwrap();
        let table = GradientTable::new(&obj, &x, &data).unwrap();
        let mut r1 = ChaCha8Rng::seed_from_u64(5);
        let mut r2 = ChaCha8Rng::seed_from_u64(5);
        let c = esg_check_on(
            &table,
            4,
            EsgKind::Coordinatewise { eta: 0.5 },
            500,
            &mut r1,
        )
        .unwrap();
        let s = esg_check_on(&table, 4, EsgKind::Norm { eta: 0.5 }, 500, &mut r2).unwrap();
        let coords = c.coordinates.as_ref().unwrap();
        assert!((coords.tau_hat[0] - c.tau_hat).abs() < 1e-12);
        assert!((s.tau_hat - c.tau_hat).abs() < 4.0 * (s.std_err + c.std_err));
        assert!(c.within_bound(3.0));
    }

    #[test]
    fn moments_and_required_batches() {
        let data = anchors(1.0);
        let table = GradientTable::new(&Objective::quadratic(3), &off_center(), &data).unwrap();
        let m = table.moments();
        let total: f64 = m.coord_var.iter().sum();
        assert!((total - m.norm_var).abs() <= 1e-12 * m.norm_var);
        let b = m.norm_test_batch(0.5);
        assert!(m.norm_var / b as f64 <= 0.25 * m.grad_sq_norm);
        assert!(b == 1 || m.norm_var / (b - 1) as f64 > 0.25 * m.grad_sq_norm);
        let b = m.augmented_test_batch(0.4, 0.4);
        assert!(exact_inner_product_test(&m, b, 0.4).holds);
        assert!(exact_orthogonality_test(&m, b, 0.4).holds);
    }

    #[test]
    fn sequence_lemma_edge_cases() {
        let c = seq_lemma_check(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!((c.lhs1, c.bound1, c.lhs2, c.bound2), (0.0, 2.0, 0.0, 0.0));
        assert!(c.holds());
        let ones = vec![1.0; 101];
        let c = seq_lemma_check(&ones).unwrap();
        assert!(c.lhs1 < c.bound1 && c.lhs2 < c.bound2);
        assert!(seq_lemma_check(&[0.0, 1.0]).is_err());
        assert!(seq_lemma_check(&[1.0, -1.0]).is_err());
        assert!(seq_lemma_check(&[]).is_err());
    }

    #[test]
    fn fd_check_rejects_bad_step() {
        let data = anchors(1.0);
        assert!(fd_gradient_check(&Objective::quadratic(3), &off_center(), &data, 0, 0.0).is_err());
    }
}
