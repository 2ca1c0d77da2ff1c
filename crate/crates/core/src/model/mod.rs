//! LSTM sequence classifier: inference, input gradients, training, weight files.

mod io;
mod lstm;
mod params;
mod train;

use ndarray::Array2;

pub use io::{from_json_str, load_params, save_params, to_json_string, GATE_ORDER, WEIGHTS_FORMAT};
pub use lstm::{Logits, Trace};
pub use params::{Architecture, ModelParams, ParamTensors};
pub use train::{train, train_with_validation, Init, TrainConfig, TrainOutcome};

pub(crate) use lstm::softmax;

use crate::error::{Error, Result};
use crate::record::FeatureMatrix;

/// A scalar function of the logits whose input gradient can be requested.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarLoss {
    /// `logit[minuend] - logit[subtrahend]`, the smooth part of the attack loss.
    LogitGap { minuend: usize, subtrahend: usize },
    /// A single logit.
    Logit(usize),
    /// Softmax cross-entropy against `label`.
    CrossEntropy { label: usize },
}

impl ScalarLoss {
    pub fn value(&self, logits: &[f64]) -> f64 {
        match *self {
            ScalarLoss::LogitGap {
                minuend,
                subtrahend,
            } => logits[minuend] - logits[subtrahend],
            ScalarLoss::Logit(k) => logits[k],
            ScalarLoss::CrossEntropy { label } => cross_entropy(logits, label),
        }
    }

    /// ∂loss/∂logits.
    pub fn logit_gradient(&self, logits: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; logits.len()];
        match *self {
            ScalarLoss::LogitGap {
                minuend,
                subtrahend,
            } => {
                g[minuend] += 1.0;
                g[subtrahend] -= 1.0;
            }
            ScalarLoss::Logit(k) => g[k] = 1.0,
            ScalarLoss::CrossEntropy { label } => {
                g = softmax(logits);
                g[label] -= 1.0;
            }
        }
        g
    }

    fn check(&self, classes: usize) -> Result<()> {
        let max = match *self {
            ScalarLoss::LogitGap {
                minuend,
                subtrahend,
            } => minuend.max(subtrahend),
            ScalarLoss::Logit(k) => k,
            ScalarLoss::CrossEntropy { label } => label,
        };
        if max >= classes {
            return Err(Error::DimensionMismatch {
                context: "loss class index",
                expected: classes,
                found: max,
            });
        }
        Ok(())
    }
}

/// Softmax cross-entropy computed in log-sum-exp form.
pub(crate) fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

/// Pre-softmax class scores for `x`.
pub fn forward(params: &ModelParams, x: &FeatureMatrix) -> Result<Logits> {
    params.trace(x).map(Trace::into_logits)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub probabilities: Vec<f64>,
}

pub fn predict(params: &ModelParams, x: &FeatureMatrix) -> Result<Prediction> {
    let logits = forward(params, x)?;
    Ok(Prediction {
        label: logits.argmax(),
        probabilities: logits.softmax(),
    })
}

/// ∂loss/∂x by backpropagation through time with the weights held fixed.
/// Padded columns always receive exactly zero.
pub fn input_gradient(
    params: &ModelParams,
    x: &FeatureMatrix,
    loss: ScalarLoss,
) -> Result<Array2<f64>> {
    loss.check(params.class_count())?;
    let trace = params.trace(x)?;
    input_gradient_from_trace(
        params,
        x,
        &trace,
        &loss.logit_gradient(trace.logits().as_slice()),
    )
}

/// Input gradient for an arbitrary `∂loss/∂logits`, reusing a recorded pass.
pub fn input_gradient_from_trace(
    params: &ModelParams,
    x: &FeatureMatrix,
    trace: &Trace,
    dlogits: &[f64],
) -> Result<Array2<f64>> {
    if dlogits.len() != params.class_count() {
        return Err(Error::DimensionMismatch {
            context: "logit gradient",
            expected: params.class_count(),
            found: dlogits.len(),
        });
    }
    let mut grad = Array2::zeros(x.values.dim());
    params.backprop(x, trace, dlogits, Some(&mut grad), None);
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("input gradient"));
    }
    Ok(grad)
}

#[cfg(test)]
mod tests;
