use alloc::format;
use alloc::vec::Vec;
use core::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampling {
    WithReplacement,
    #[default]
    WithoutReplacement,
}

impl Sampling {
    pub fn as_str(&self) -> &'static str {
        match self {
            Sampling::WithReplacement => "with_replacement",
            Sampling::WithoutReplacement => "without_replacement",
        }
    }
}

impl FromStr for Sampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "with_replacement" => Ok(Self::WithReplacement),
            "without_replacement" => Ok(Self::WithoutReplacement),
            other => Err(Error::config(format!("unknown sampling mode `{other}`"))),
        }
    }
}

/// Draws `b` uniform indices from `0..n`. Without replacement the indices
/// are distinct, and `b = n` returns `0..n` in order.
pub fn sample_batch<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    b: usize,
    mode: Sampling,
) -> Result<Vec<usize>> {
    if b == 0 || n == 0 {
        return Err(Error::EmptyBatch);
    }
    match mode {
        Sampling::WithReplacement => Ok((0..b).map(|_| rng.gen_range(0..n)).collect()),
        Sampling::WithoutReplacement => {
            if b > n {
                return Err(Error::config(format!(
                    "cannot draw {b} distinct samples from {n}"
                )));
            }
            if b == n {
                return Ok((0..n).collect());
            }
            Ok(rand::seq::index::sample(rng, n, b).into_vec())
        }
    }
}
