use alloc::vec::Vec;
use core::ops::Deref;

use crate::error::{Error, Result};
use crate::vecops;

/// Flat dense vector of model parameters. Every entry is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::config("parameter vector must have d >= 1"));
        }
        if !vecops::all_finite(&values) {
            return Err(Error::NonFinite("parameter vector"));
        }
        Ok(Self(values))
    }

    pub fn zeros(d: usize) -> Self {
        assert!(d >= 1, "parameter dimension must be positive");
        Self(alloc::vec![0.0; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Mutable access for update rules; callers must restore finiteness or
    /// report it through [`ParamVector::check_finite`].
    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        if vecops::all_finite(&self.0) {
            Ok(())
        } else {
            Err(Error::NonFinite("parameter vector"))
        }
    }
}

impl Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for ParamVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}
