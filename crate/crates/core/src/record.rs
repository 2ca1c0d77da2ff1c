//! One multivariate record: `d` features by `t` time stamps plus a validity mask.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Value stored at padded positions. The mask, not this value, is authoritative.
pub const MASK_VALUE: f64 = 0.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub record_id: String,
    /// Features as rows, time stamps as columns.
    pub values: Array2<f64>,
    /// `true` for observed stamps, `false` for padding.
    pub mask: Vec<bool>,
}

impl FeatureMatrix {
    pub fn new(record_id: impl Into<String>, values: Array2<f64>, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != values.ncols() {
            return Err(Error::DimensionMismatch {
                context: "feature matrix mask",
                expected: values.ncols(),
                found: mask.len(),
            });
        }
        Ok(Self {
            record_id: record_id.into(),
            values,
            mask,
        })
    }

    /// A record with every stamp observed.
    pub fn dense(record_id: impl Into<String>, values: Array2<f64>) -> Self {
        let mask = vec![true; values.ncols()];
        Self {
            record_id: record_id.into(),
            values,
            mask,
        }
    }

    pub fn n_features(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_steps(&self) -> usize {
        self.values.ncols()
    }

    pub fn observed_steps(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Same record with different values; the mask and id are kept.
    pub fn with_values(&self, values: Array2<f64>) -> Self {
        debug_assert_eq!(values.dim(), self.values.dim());
        Self {
            record_id: self.record_id.clone(),
            values,
            mask: self.mask.clone(),
        }
    }

    pub(crate) fn check_shape(&self, features: usize) -> Result<()> {
        if self.n_features() != features {
            return Err(Error::DimensionMismatch {
                context: "record feature count",
                expected: features,
                found: self.n_features(),
            });
        }
        if self.mask.len() != self.n_steps() {
            return Err(Error::DimensionMismatch {
                context: "feature matrix mask",
                expected: self.n_steps(),
                found: self.mask.len(),
            });
        }
        Ok(())
    }
}
