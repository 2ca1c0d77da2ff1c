//! Sparse adversarial screening of multivariate time-series records.
//!
//! A small LSTM classifier is trained on fixed-shape, min-max normalized
//! records. Each correctly classified record is then attacked with an
//! L1-regularized proximal-gradient (ISTA) search over a sweep of
//! regularization strengths. The best candidate per record is chosen by a
//! combined magnitude/sparsity distance. The selected perturbations are
//! aggregated into per-cell and per-feature susceptibility scores.

// `!(a < b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attack;
pub mod cohort;
pub mod error;
pub mod evaluate;
pub mod fsio;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod preprocess;
pub mod record;
pub mod susceptibility;

pub use error::{Error, Result};
pub use record::{FeatureMatrix, MASK_VALUE};
