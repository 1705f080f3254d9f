//! Batch-gradient statistics.
//!
//! Every variance uses the unbiased `1/(b-1)` divisor and is computed in two
//! passes: the batch mean first, then the squared deviations from it. The
//! deviation pass is exposed as [`StatsAccumulator`] so that the trainer can
//! stream per-sample gradients in chunks and still get bitwise the same
//! result as the materialized path.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::vecops;

/// `b x d` matrix of per-sample gradients, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PerSampleGradBatch {
    grads: Vec<f64>,
    dim: usize,
    sample_ids: Vec<usize>,
}

impl PerSampleGradBatch {
    pub fn new(grads: Vec<f64>, dim: usize, sample_ids: Vec<usize>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("gradient dimension must be positive"));
        }
        if sample_ids.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if grads.len() != dim * sample_ids.len() {
            return Err(Error::DimensionMismatch {
                expected: dim * sample_ids.len(),
                got: grads.len(),
            });
        }
        if !vecops::all_finite(&grads) {
            return Err(Error::NonFinite("per-sample gradients"));
        }
        Ok(Self {
            grads,
            dim,
            sample_ids,
        })
    }

    /// Builds a batch from explicit rows; sample ids are `0..rows.len()`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or(Error::EmptyBatch)?;
        let mut grads = Vec::with_capacity(dim * rows.len());
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            grads.extend_from_slice(row);
        }
        Self::new(grads, dim, (0..rows.len()).collect())
    }

    pub fn batch_size(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sample_ids(&self) -> &[usize] {
        &self.sample_ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.grads[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.grads.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.grads
    }

    /// `(1/b) sum_i grads[i]`
    pub fn mean(&self) -> Vec<f64> {
        let mut acc = MeanAccumulator::new(self.dim);
        for row in self.rows() {
            acc.add_row(row);
        }
        acc.finish()
    }

    /// Multiplies every row by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        let grads = self.grads.iter().map(|g| g * s).collect();
        Self::new(grads, self.dim, self.sample_ids.clone())
    }
}

/// Which variance fields to compute. The gradient-vector variance (`norm_var`)
/// is requested by default; the other three are opt-in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StatsRequest {
    pub norm: bool,
    pub inner_product: bool,
    pub orthogonal: bool,
    pub coordinate: bool,
}

impl Default for StatsRequest {
    fn default() -> Self {
        Self {
            norm: true,
            inner_product: false,
            orthogonal: false,
            coordinate: false,
        }
    }
}

impl StatsRequest {
    pub const MEAN_ONLY: Self = Self {
        norm: false,
        inner_product: false,
        orthogonal: false,
        coordinate: false,
    };

    pub const ALL: Self = Self {
        norm: true,
        inner_product: true,
        orthogonal: true,
        coordinate: true,
    };

    pub fn any_variance(&self) -> bool {
        self.norm || self.inner_product || self.orthogonal || self.coordinate
    }
}

/// Mean gradient of a batch plus whichever sample variances were requested.
/// Fields that were not requested are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGradStats {
    pub batch_size: usize,
    pub mean_grad: Vec<f64>,
    pub mean_grad_sq_norm: f64,
    /// `1/(b-1) sum_i ||g_i - mean||^2`
    pub norm_var: Option<f64>,
    /// `1/(b-1) sum_i (<g_i, mean> - ||mean||^2)^2`
    pub ip_var: Option<f64>,
    /// `1/(b-1) sum_i ||g_i - (<g_i, mean>/||mean||^2) mean||^2`
    pub ortho_var: Option<f64>,
    /// `1/(b-1) sum_i (g_ij - mean_j)^2` for each coordinate `j`
    pub coord_var: Option<Vec<f64>>,
}

impl BatchGradStats {
    /// Statistics carrying only the mean gradient.
    pub fn mean_only(mean_grad: Vec<f64>, batch_size: usize) -> Self {
        Self {
            batch_size,
            mean_grad_sq_norm: vecops::sq_norm(&mean_grad),
            mean_grad,
            norm_var: None,
            ip_var: None,
            ortho_var: None,
            coord_var: None,
        }
    }
}

/// Running sum for the first (mean) pass.
#[derive(Debug, Clone)]
pub struct MeanAccumulator {
    sum: Vec<f64>,
    rows: usize,
}

impl MeanAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            sum: vec![0.0; dim],
            rows: 0,
        }
    }

    pub fn add_row(&mut self, row: &[f64]) {
        vecops::axpy(1.0, row, &mut self.sum);
        self.rows += 1;
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn finish(mut self) -> Vec<f64> {
        if self.rows > 0 {
            vecops::scale(1.0 / self.rows as f64, &mut self.sum);
        }
        self.sum
    }
}

/// Second (deviation) pass given a precomputed batch mean.
#[derive(Debug, Clone)]
pub struct StatsAccumulator {
    mean: Vec<f64>,
    mean_sq_norm: f64,
    request: StatsRequest,
    rows: usize,
    norm_sum: f64,
    ip_sum: f64,
    ortho_sum: f64,
    coord_sum: Vec<f64>,
}

impl StatsAccumulator {
    pub fn new(mean: Vec<f64>, request: StatsRequest) -> Result<Self> {
        let mean_sq_norm = vecops::sq_norm(&mean);
        if request.orthogonal && mean_sq_norm == 0.0 {
            return Err(Error::ZeroMeanGradient);
        }
        let coord_len = if request.coordinate { mean.len() } else { 0 };
        Ok(Self {
            mean,
            mean_sq_norm,
            request,
            rows: 0,
            norm_sum: 0.0,
            ip_sum: 0.0,
            ortho_sum: 0.0,
            coord_sum: vec![0.0; coord_len],
        })
    }

    pub fn add_row(&mut self, g: &[f64]) {
        debug_assert_eq!(g.len(), self.mean.len());
        let req = self.request;
        if req.norm || req.coordinate {
            let mut row_sum = 0.0;
            for (j, (gj, mj)) in g.iter().zip(&self.mean).enumerate() {
                let dev = (gj - mj) * (gj - mj);
                row_sum += dev;
                if req.coordinate {
                    self.coord_sum[j] += dev;
                }
            }
            self.norm_sum += row_sum;
        }
        if req.inner_product || req.orthogonal {
            let ip = vecops::dot(g, &self.mean);
            if req.inner_product {
                let dev = ip - self.mean_sq_norm;
                self.ip_sum += dev * dev;
            }
            if req.orthogonal {
                // The residuals average to zero, so the deviation from their
                // mean is the residual itself.
                let c = ip / self.mean_sq_norm;
                self.ortho_sum += g
                    .iter()
                    .zip(&self.mean)
                    .map(|(gj, mj)| {
                        let r = gj - c * mj;
                        r * r
                    })
                    .sum::<f64>();
            }
        }
        self.rows += 1;
    }

    pub fn finish(self) -> Result<BatchGradStats> {
        let b = self.rows;
        if b == 0 {
            return Err(Error::EmptyBatch);
        }
        let req = self.request;
        if req.any_variance() && b < 2 {
            return Err(Error::DegenerateBatch { b });
        }
        let inv = if b >= 2 { 1.0 / (b - 1) as f64 } else { 0.0 };
        let coord_var = req.coordinate.then(|| {
            let mut c = self.coord_sum;
            vecops::scale(inv, &mut c);
            c
        });
        Ok(BatchGradStats {
            batch_size: b,
            mean_grad_sq_norm: self.mean_sq_norm,
            mean_grad: self.mean,
            norm_var: req.norm.then_some(self.norm_sum * inv),
            ip_var: req.inner_product.then_some(self.ip_sum * inv),
            ortho_var: req.orthogonal.then_some(self.ortho_sum * inv),
            coord_var,
        })
    }
}

/// Computes the batch mean gradient and the requested sample variances.
///
/// Fails with [`Error::DegenerateBatch`] when any variance is requested on a
/// batch of size one, and with [`Error::ZeroMeanGradient`] when the
/// orthogonal-residual variance is requested but the mean gradient is zero.
pub fn compute_batch_stats(
    batch: &PerSampleGradBatch,
    request: StatsRequest,
) -> Result<BatchGradStats> {
    if request.any_variance() && batch.batch_size() < 2 {
        return Err(Error::DegenerateBatch {
            b: batch.batch_size(),
        });
    }
    let mut acc = StatsAccumulator::new(batch.mean(), request)?;
    for row in batch.rows() {
        acc.add_row(row);
    }
    acc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn batch(rows: &[&[f64]]) -> PerSampleGradBatch {
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        PerSampleGradBatch::from_rows(&rows).unwrap()
    }

    #[test]
    fn identical_rows_have_zero_variance() {
        let s = compute_batch_stats(
            &batch(&[&[2.0, 0.0], &[2.0, 0.0], &[2.0, 0.0]]),
            StatsRequest::ALL,
        )
        .unwrap();
        assert_eq!(s.mean_grad, vec![2.0, 0.0]);
        assert_eq!(s.norm_var, Some(0.0));
        assert_eq!(s.ip_var, Some(0.0));
        assert_eq!(s.ortho_var, Some(0.0));
    }

    #[test]
    fn two_row_hand_values() {
        let s =
            compute_batch_stats(&batch(&[&[1.0, 0.0], &[3.0, 0.0]]), StatsRequest::ALL).unwrap();
        assert_eq!(s.mean_grad, vec![2.0, 0.0]);
        assert_eq!(s.mean_grad_sq_norm, 4.0);
        assert_eq!(s.norm_var, Some(2.0));
        assert_eq!(s.ip_var, Some(8.0));
        assert_eq!(s.coord_var, Some(vec![2.0, 0.0]));
    }

    #[test]
    fn symmetric_cancellation_rejects_orthogonal_request() {
        let b = batch(&[&[1.0, 1.0], &[-1.0, -1.0]]);
        let s = compute_batch_stats(&b, StatsRequest::default()).unwrap();
        assert_eq!(s.mean_grad, vec![0.0, 0.0]);
        assert_eq!(s.norm_var, Some(4.0));
        let req = StatsRequest {
            orthogonal: true,
            ..StatsRequest::default()
        };
        assert_eq!(compute_batch_stats(&b, req), Err(Error::ZeroMeanGradient));
    }

    #[test]
    fn orthogonal_residuals_hand_value() {
        let s =
            compute_batch_stats(&batch(&[&[1.0, 1.0], &[1.0, -1.0]]), StatsRequest::ALL).unwrap();
        assert_eq!(s.mean_grad, vec![1.0, 0.0]);
        assert_eq!(s.ortho_var, Some(2.0));
    }

    #[test]
    fn single_row_is_degenerate() {
        let b = batch(&[&[1.0, 2.0]]);
        assert_eq!(
            compute_batch_stats(&b, StatsRequest::default()),
            Err(Error::DegenerateBatch { b: 1 })
        );
        let s = compute_batch_stats(&b, StatsRequest::MEAN_ONLY).unwrap();
        assert_eq!(s.mean_grad, vec![1.0, 2.0]);
        assert!(s.norm_var.is_none());
    }

    #[test]
    fn unrequested_fields_are_none() {
        let s = compute_batch_stats(&batch(&[&[1.0], &[2.0]]), StatsRequest::default()).unwrap();
        assert!(s.norm_var.is_some());
        assert!(s.ip_var.is_none() && s.ortho_var.is_none() && s.coord_var.is_none());
    }

    #[test]
    fn rejects_ragged_and_non_finite_rows() {
        assert!(PerSampleGradBatch::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert_eq!(
            PerSampleGradBatch::from_rows(&[vec![f64::NAN]]),
            Err(Error::NonFinite("per-sample gradients"))
        );
    }

    #[test]
    fn chunked_accumulation_matches_materialized() {
        let rows: Vec<Vec<f64>> = (0..17)
            .map(|i| {
                let x = i as f64;
                vec![libm::sin(x), libm::cos(1.3 * x) + 0.5, 0.1 * x]
            })
            .collect();
        let b = PerSampleGradBatch::from_rows(&rows).unwrap();
        let full = compute_batch_stats(&b, StatsRequest::ALL).unwrap();

        let mut mean = MeanAccumulator::new(3);
        for chunk in rows.chunks(5) {
            for r in chunk {
                mean.add_row(r);
            }
        }
        let mut acc = StatsAccumulator::new(mean.finish(), StatsRequest::ALL).unwrap();
        for chunk in rows.chunks(4) {
            for r in chunk {
                acc.add_row(r);
            }
        }
        assert_eq!(acc.finish().unwrap(), full);
    }
}
