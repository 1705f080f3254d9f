//! Empirical-risk objectives with closed-form per-sample gradients.
//!
//! All objectives are finite sums `F(x) = (1/n) sum_i f(x; xi_i)`; the batch
//! loss and batch gradient are the same averages restricted to a batch.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::params::ParamVector;
use crate::stats::{MeanAccumulator, PerSampleGradBatch};
use crate::vecops;

/// Anything that exposes per-sample losses and gradients over a dataset.
pub trait Differentiable {
    fn param_dim(&self) -> usize;

    /// Checks that `data` has the shape and targets this objective needs.
    fn check_dataset(&self, data: &Dataset) -> Result<()>;

    fn sample_loss(&self, x: &[f64], data: &Dataset, i: usize) -> f64;

    /// Writes `grad f(x; xi_i)` into `out` and returns `f(x; xi_i)`.
    fn sample_grad(&self, x: &[f64], data: &Dataset, i: usize, out: &mut [f64]) -> f64;

    /// One row per batch entry, in batch order.
    fn per_sample_grads(
        &self,
        x: &ParamVector,
        data: &Dataset,
        batch: &[usize],
    ) -> Result<PerSampleGradBatch> {
        let (grads, _) = self.per_sample_grads_and_loss(x, data, batch)?;
        Ok(grads)
    }

    /// Per-sample gradients together with the batch loss from the same pass.
    fn per_sample_grads_and_loss(
        &self,
        x: &ParamVector,
        data: &Dataset,
        batch: &[usize],
    ) -> Result<(PerSampleGradBatch, f64)> {
        self.check_call(x, data, batch)?;
        let d = self.param_dim();
        let mut grads = vec![0.0; batch.len() * d];
        let mut loss = 0.0;
        for (row, &i) in grads.chunks_exact_mut(d).zip(batch) {
            loss += self.sample_grad(x, data, i, row);
        }
        let grads = PerSampleGradBatch::new(grads, d, batch.to_vec())?;
        Ok((grads, loss / batch.len() as f64))
    }

    /// `F_B(x) = (1/b) sum_{i in B} f(x; xi_i)`
    fn batch_loss(&self, x: &ParamVector, data: &Dataset, batch: &[usize]) -> Result<f64> {
        self.check_call(x, data, batch)?;
        let total: f64 = batch.iter().map(|&i| self.sample_loss(x, data, i)).sum();
        Ok(total / batch.len() as f64)
    }

    /// `F(x)` over the whole dataset.
    fn full_loss(&self, x: &ParamVector, data: &Dataset) -> Result<f64> {
        let all: Vec<usize> = (0..data.len()).collect();
        self.batch_loss(x, data, &all)
    }

    /// `grad F(x) = (1/n) sum_i grad f(x; xi_i)`, accumulated row by row in
    /// index order so it agrees bitwise with the mean of a full-index batch.
    fn full_gradient(&self, x: &ParamVector, data: &Dataset) -> Result<Vec<f64>> {
        self.check_call(x, data, &[0])?;
        let d = self.param_dim();
        let mut row = vec![0.0; d];
        let mut acc = MeanAccumulator::new(d);
        for i in 0..data.len() {
            row.iter_mut().for_each(|v| *v = 0.0);
            self.sample_grad(x, data, i, &mut row);
            acc.add_row(&row);
        }
        Ok(acc.finish())
    }

    #[doc(hidden)]
    fn check_call(&self, x: &ParamVector, data: &Dataset, batch: &[usize]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if x.dim() != self.param_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.param_dim(),
                got: x.dim(),
            });
        }
        self.check_dataset(data)?;
        batch.iter().try_for_each(|&i| data.check_index(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => libm::tanh(z),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Self::Tanh),
            "relu" => Ok(Self::Relu),
            other => Err(Error::config(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// `f(x; xi) = 1/2 ||x - xi||^2` with the sample's features as the anchor `xi`.
    Quadratic { dim: usize },
    /// `f(x; (a, y)) = 1/2 (<a, x> - y)^2`
    LeastSquares { dim: usize },
    /// Multinomial logistic regression (softmax cross-entropy) with an
    /// optional L2 penalty on the weights (not the biases).
    /// Layout: `W` (`classes x features`, row-major) then `b` (`classes`).
    Logistic {
        features: usize,
        classes: usize,
        l2: f64,
    },
    /// One hidden layer, softmax cross-entropy output.
    /// Layout: `W1` (`hidden x features`), `b1`, `W2` (`classes x hidden`), `b2`.
    Mlp {
        features: usize,
        hidden: usize,
        classes: usize,
        activation: Activation,
    },
}

impl Objective {
    pub fn quadratic(dim: usize) -> Self {
        Objective::Quadratic { dim }
    }

    pub fn logistic(features: usize, classes: usize, l2: f64) -> Self {
        Objective::Logistic {
            features,
            classes,
            l2,
        }
    }

    pub fn mlp(features: usize, hidden: usize, classes: usize, activation: Activation) -> Self {
        Objective::Mlp {
            features,
            hidden,
            classes,
            activation,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Objective::Quadratic { .. } => "quadratic",
            Objective::LeastSquares { .. } => "least_squares",
            Objective::Logistic { .. } => "logistic",
            Objective::Mlp { .. } => "mlp",
        }
    }

    pub fn is_classifier(&self) -> bool {
        matches!(self, Objective::Logistic { .. } | Objective::Mlp { .. })
    }

    /// Starting iterate: zeros for the convex objectives; for the MLP,
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` weights and biases.
    pub fn init_params(&self, seed: u64) -> ParamVector {
        let d = self.param_dim();
        match *self {
            Objective::Mlp {
                features,
                hidden,
                classes,
                ..
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(INIT_STREAM);
                let mut x = Vec::with_capacity(d);
                let b1 = 1.0 / libm::sqrt(features as f64);
                let b2 = 1.0 / libm::sqrt(hidden as f64);
                x.extend((0..hidden * features + hidden).map(|_| rng.gen_range(-b1..b1)));
                x.extend((0..classes * hidden + classes).map(|_| rng.gen_range(-b2..b2)));
                ParamVector::new(x).expect("uniform init is finite")
            }
            _ => ParamVector::zeros(d),
        }
    }

    /// Predicted class of sample `i`, for classifiers.
    pub fn predict(&self, x: &[f64], data: &Dataset, i: usize) -> Option<usize> {
        let logits = match *self {
            Objective::Logistic {
                features, classes, ..
            } => logistic_logits(x, data.feature(i), features, classes),
            Objective::Mlp {
                features,
                hidden,
                classes,
                activation,
            } => {
                let (w1, b1, w2, b2) = mlp_split(x, features, hidden, classes);
                let (_, a1) = mlp_hidden(w1, b1, data.feature(i), activation);
                affine(w2, b2, &a1)
            }
            _ => return None,
        };
        Some(argmax(&logits))
    }

    /// Fraction of samples whose arg-max prediction matches the label.
    pub fn accuracy(&self, x: &ParamVector, data: &Dataset) -> Option<f64> {
        if !self.is_classifier() || data.num_classes().is_none() {
            return None;
        }
        let hits = (0..data.len())
            .filter(|&i| self.predict(x, data, i) == data.class(i))
            .count();
        Some(hits as f64 / data.len() as f64)
    }
}

const INIT_STREAM: u64 = 0x1_417;

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (j, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = j;
        }
    }
    best
}

/// `W a + b` for row-major `W`.
fn affine(w: &[f64], b: &[f64], a: &[f64]) -> Vec<f64> {
    w.chunks_exact(a.len())
        .zip(b)
        .map(|(row, bias)| vecops::dot(row, a) + bias)
        .collect()
}

fn logistic_logits(x: &[f64], a: &[f64], features: usize, classes: usize) -> Vec<f64> {
    let (w, b) = x.split_at(classes * features);
    affine(w, b, a)
}

fn mlp_split(
    x: &[f64],
    features: usize,
    hidden: usize,
    classes: usize,
) -> (&[f64], &[f64], &[f64], &[f64]) {
    let (w1, rest) = x.split_at(hidden * features);
    let (b1, rest) = rest.split_at(hidden);
    let (w2, b2) = rest.split_at(classes * hidden);
    (w1, b1, w2, b2)
}

fn mlp_hidden(w1: &[f64], b1: &[f64], a: &[f64], act: Activation) -> (Vec<f64>, Vec<f64>) {
    let z1 = affine(w1, b1, a);
    let a1 = z1.iter().map(|&z| act.apply(z)).collect();
    (z1, a1)
}

/// Softmax cross-entropy: writes `softmax(z) - onehot(label)` into `delta`, returns the loss.
fn softmax_xent(logits: &[f64], label: usize, delta: &mut [f64]) -> f64 {
    let lse = vecops::log_softmax_into(logits, delta);
    delta[label] -= 1.0;
    lse - logits[label]
}

impl Differentiable for Objective {
    fn param_dim(&self) -> usize {
        match *self {
            Objective::Quadratic { dim } | Objective::LeastSquares { dim } => dim,
            Objective::Logistic {
                features, classes, ..
            } => classes * (features + 1),
            Objective::Mlp {
                features,
                hidden,
                classes,
                ..
            } => hidden * (features + 1) + classes * (hidden + 1),
        }
    }

    fn check_dataset(&self, data: &Dataset) -> Result<()> {
        let (features, classes) = match *self {
            Objective::Quadratic { dim } => (dim, None),
            Objective::LeastSquares { dim } => {
                if !matches!(data.targets(), Targets::Values(_)) {
                    return Err(Error::config("least_squares needs real-valued targets"));
                }
                (dim, None)
            }
            Objective::Logistic {
                features, classes, ..
            }
            | Objective::Mlp {
                features, classes, ..
            } => (features, Some(classes)),
        };
        if data.feature_dim() != features {
            return Err(Error::DimensionMismatch {
                expected: features,
                got: data.feature_dim(),
            });
        }
        if let Some(c) = classes {
            match data.num_classes() {
                Some(k) if k <= c => {}
                Some(k) => {
                    return Err(Error::config(format!(
                        "{} has {c} classes but the dataset has {k}",
                        self.kind_name()
                    )))
                }
                None => return Err(Error::config("classifier needs class labels")),
            }
        }
        Ok(())
    }

    fn sample_loss(&self, x: &[f64], data: &Dataset, i: usize) -> f64 {
        let a = data.feature(i);
        match *self {
            Objective::Quadratic { .. } => 0.5 * vecops::sq_dist(x, a),
            Objective::LeastSquares { .. } => {
                let r = vecops::dot(a, x) - data.value(i).unwrap_or(0.0);
                0.5 * r * r
            }
            Objective::Logistic {
                features,
                classes,
                l2,
            } => {
                let logits = logistic_logits(x, a, features, classes);
                let mut probs = vec![0.0; classes];
                let label = data.class(i).unwrap_or(0);
                let lse = vecops::log_softmax_into(&logits, &mut probs);
                let penalty = if l2 > 0.0 {
                    0.5 * l2 * vecops::sq_norm(&x[..classes * features])
                } else {
                    0.0
                };
                lse - logits[label] + penalty
            }
            Objective::Mlp {
                features,
                hidden,
                classes,
                activation,
            } => {
                let (w1, b1, w2, b2) = mlp_split(x, features, hidden, classes);
                let (_, a1) = mlp_hidden(w1, b1, a, activation);
                let logits = affine(w2, b2, &a1);
                let mut probs = vec![0.0; classes];
                let label = data.class(i).unwrap_or(0);
                vecops::log_softmax_into(&logits, &mut probs) - logits[label]
            }
        }
    }

    fn sample_grad(&self, x: &[f64], data: &Dataset, i: usize, out: &mut [f64]) -> f64 {
        let a = data.feature(i);
        match *self {
            Objective::Quadratic { .. } => {
                for ((o, xi), ai) in out.iter_mut().zip(x).zip(a) {
                    *o = xi - ai;
                }
                0.5 * vecops::sq_dist(x, a)
            }
            Objective::LeastSquares { .. } => {
                let r = vecops::dot(a, x) - data.value(i).unwrap_or(0.0);
                for (o, ai) in out.iter_mut().zip(a) {
                    *o = r * ai;
                }
                0.5 * r * r
            }
            Objective::Logistic {
                features,
                classes,
                l2,
            } => {
                let logits = logistic_logits(x, a, features, classes);
                let mut delta = vec![0.0; classes];
                let mut loss = softmax_xent(&logits, data.class(i).unwrap_or(0), &mut delta);
                let (gw, gb) = out.split_at_mut(classes * features);
                for ((row, &dc), gbc) in gw.chunks_exact_mut(features).zip(&delta).zip(gb) {
                    for (g, aj) in row.iter_mut().zip(a) {
                        *g = dc * aj;
                    }
                    *gbc = dc;
                }
                if l2 > 0.0 {
                    let w = &x[..classes * features];
                    vecops::axpy(l2, w, gw);
                    loss += 0.5 * l2 * vecops::sq_norm(w);
                }
                loss
            }
            Objective::Mlp {
                features,
                hidden,
                classes,
                activation,
            } => {
                let (w1, b1, w2, b2) = mlp_split(x, features, hidden, classes);
                let (z1, a1) = mlp_hidden(w1, b1, a, activation);
                let logits = affine(w2, b2, &a1);
                let mut delta2 = vec![0.0; classes];
                let loss = softmax_xent(&logits, data.class(i).unwrap_or(0), &mut delta2);

                let (gw1, rest) = out.split_at_mut(hidden * features);
                let (gb1, rest) = rest.split_at_mut(hidden);
                let (gw2, gb2) = rest.split_at_mut(classes * hidden);
                // Output layer.
                for ((row, &dc), gbc) in gw2
                    .chunks_exact_mut(hidden)
                    .zip(&delta2)
                    .zip(gb2.iter_mut())
                {
                    for (g, hj) in row.iter_mut().zip(&a1) {
                        *g = dc * hj;
                    }
                    *gbc = dc;
                }
                // Back through W2 and the activation.
                let mut delta1 = vec![0.0; hidden];
                for (row, &dc) in w2.chunks_exact(hidden).zip(&delta2) {
                    vecops::axpy(dc, row, &mut delta1);
                }
                for ((d1, &z), &h) in delta1.iter_mut().zip(&z1).zip(&a1) {
                    *d1 *= activation.derivative(z, h);
                }
                for ((row, &dh), gbh) in gw1
                    .chunks_exact_mut(features)
                    .zip(&delta1)
                    .zip(gb1.iter_mut())
                {
                    for (g, aj) in row.iter_mut().zip(a) {
                        *g = dh * aj;
                    }
                    *gbh = dh;
                }
                loss
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_synthetic, SyntheticKind, SyntheticSpec};
    use alloc::vec;

    fn two_points() -> Dataset {
        Dataset::new(vec![1.0, 2.0, 3.0, 4.0], 2, Targets::None).unwrap()
    }

    #[test]
    fn quadratic_gradient_is_x_minus_anchor() {
        let obj = Objective::quadratic(2);
        let g = obj
            .per_sample_grads(&ParamVector::zeros(2), &two_points(), &[0])
            .unwrap();
        assert_eq!(g.row(0), &[-1.0, -2.0]);
    }

    #[test]
    fn quadratic_full_gradient_closed_form() {
        let obj = Objective::quadratic(2);
        let x = ParamVector::new(vec![0.5, -1.0]).unwrap();
        let g = obj.full_gradient(&x, &two_points()).unwrap();
        assert_eq!(g, vec![0.5 - 2.0, -1.0 - 3.0]);
    }

    #[test]
    fn quadratic_loss_zero_at_shared_anchor() {
        let data = Dataset::new(vec![1.0, 2.0, 1.0, 2.0], 2, Targets::None).unwrap();
        let x = ParamVector::new(vec![1.0, 2.0]).unwrap();
        assert_eq!(
            Objective::quadratic(2)
                .batch_loss(&x, &data, &[0, 1])
                .unwrap(),
            0.0
        );
    }

    #[test]
    fn logistic_at_zero_is_uniform() {
        let data = Dataset::new(
            vec![1.0, -2.0, 0.5, 3.0, 0.0, 1.0],
            2,
            Targets::Classes {
                labels: vec![0, 1, 2],
                num_classes: 3,
            },
        )
        .unwrap();
        let obj = Objective::logistic(2, 3, 0.0);
        let x = ParamVector::zeros(obj.param_dim());
        let loss = obj.batch_loss(&x, &data, &[0, 1, 2]).unwrap();
        assert!((loss - libm::log(3.0)).abs() < 1e-15);

        let two = Dataset::new(
            vec![1.0, -2.0, 0.5, 3.0],
            2,
            Targets::Classes {
                labels: vec![0, 1],
                num_classes: 2,
            },
        )
        .unwrap();
        let obj = Objective::logistic(2, 2, 0.0);
        let g = obj
            .per_sample_grads(&ParamVector::zeros(6), &two, &[0, 1])
            .unwrap();
        // (softmax(0) - onehot) outer features, then the bias block.
        assert_eq!(g.row(0), &[-0.5, 1.0, 0.5, -1.0, -0.5, 0.5]);
        assert_eq!(g.row(1), &[0.25, 1.5, -0.25, -1.5, 0.5, -0.5]);
    }

    #[test]
    fn errors_on_bad_calls() {
        let obj = Objective::quadratic(2);
        let x = ParamVector::zeros(2);
        assert_eq!(
            obj.per_sample_grads(&x, &two_points(), &[2]),
            Err(Error::IndexOutOfRange { index: 2, n: 2 })
        );
        assert_eq!(
            obj.batch_loss(&x, &two_points(), &[]),
            Err(Error::EmptyBatch)
        );
        assert!(obj
            .batch_loss(&ParamVector::zeros(3), &two_points(), &[0])
            .is_err());
        assert!(Objective::logistic(2, 2, 0.0)
            .batch_loss(&ParamVector::zeros(6), &two_points(), &[0])
            .is_err());
    }

    #[test]
    fn full_gradient_equals_full_batch_mean_bitwise() {
        let data = make_synthetic(&SyntheticSpec {
            kind: SyntheticKind::GaussianBlobs,
            n: 37,
            p: 3,
            classes: 3,
            noise: 1.0,
            seed: 2,
        })
        .unwrap();
        let obj = Objective::mlp(3, 4, 3, Activation::Tanh);
        let x = obj.init_params(1);
        let all: Vec<usize> = (0..data.len()).collect();
        let mean = obj.per_sample_grads(&x, &data, &all).unwrap().mean();
        assert_eq!(obj.full_gradient(&x, &data).unwrap(), mean);
    }

    #[test]
    fn grads_and_loss_agree_with_batch_loss() {
        let data = make_synthetic(&SyntheticSpec {
            kind: SyntheticKind::LinearRegression,
            n: 20,
            p: 3,
            classes: 2,
            noise: 0.1,
            seed: 4,
        })
        .unwrap();
        let obj = Objective::LeastSquares { dim: 3 };
        let x = ParamVector::new(vec![0.3, -0.2, 1.0]).unwrap();
        let batch = [3, 1, 4, 1, 5];
        let (_, loss) = obj.per_sample_grads_and_loss(&x, &data, &batch).unwrap();
        let direct = obj.batch_loss(&x, &data, &batch).unwrap();
        assert!((loss - direct).abs() < 1e-15);
    }
}
