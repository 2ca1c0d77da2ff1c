use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{Architecture, ModelParams, ParamTensors};
use super::{cross_entropy, softmax};
use crate::error::{Error, Result};
use crate::record::FeatureMatrix;

/// Weight initialization scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Every weight and bias uniform in `[-scale, scale]`.
    Uniform { scale: f64 },
    /// Glorot-uniform kernels, zero biases.
    Glorot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    pub init: Init,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 60,
            batch_size: 16,
            seed: 17,
            patience: 10,
            init: Init::Glorot,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Mean training cross-entropy after each completed epoch.
    pub train_losses: Vec<f64>,
    /// Mean validation cross-entropy after each epoch (empty without validation data).
    pub validation_losses: Vec<f64>,
    /// Number of epochs whose parameters were returned.
    pub best_epochs: usize,
}

/// Mini-batch gradient descent on mean softmax cross-entropy.
pub fn train(
    dataset: &[(FeatureMatrix, usize)],
    arch: Architecture,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with_validation(dataset, &[], arch, cfg)
}

/// As [`train`], additionally tracking validation loss. With a non-empty
/// validation set the parameters of the best validation epoch are returned and
/// training stops after `patience` epochs without improvement.
pub fn train_with_validation(
    dataset: &[(FeatureMatrix, usize)],
    validation: &[(FeatureMatrix, usize)],
    arch: Architecture,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    for (x, y) in dataset.iter().chain(validation) {
        x.check_shape(arch.input_dim)?;
        if *y >= arch.class_count {
            return Err(Error::InvalidInput(format!(
                "label {y} out of range for {} classes",
                arch.class_count
            )));
        }
    }
    let first = dataset[0].1;
    if dataset.iter().all(|(_, y)| *y == first) {
        return Err(Error::SingleClass(first));
    }

    let mut params = match cfg.init {
        Init::Uniform { scale } => ModelParams::uniform(arch, scale, cfg.seed)?,
        Init::Glorot => ModelParams::glorot(arch, cfg.seed)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut grad = ParamTensors::zeros(&arch);

    let mut train_losses = Vec::with_capacity(cfg.epochs);
    let mut validation_losses = Vec::new();
    let mut best: Option<(f64, usize, ModelParams)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            grad.fill_zero();
            for &idx in batch {
                let (x, y) = &dataset[idx];
                let trace = params.trace(x).map_err(|e| diverged(e, epoch))?;
                let mut dlogits = softmax(trace.logits().as_slice());
                dlogits[*y] -= 1.0;
                params.backprop(x, &trace, &dlogits, None, Some(&mut grad));
            }
            let step = cfg.learning_rate / batch.len() as f64;
            for (w, g) in params.tensors.slices_mut().into_iter().zip(grad.slices()) {
                for (wi, gi) in w.iter_mut().zip(g) {
                    *wi -= step * gi;
                }
            }
        }

        let loss = mean_loss(&params, dataset).map_err(|e| diverged(e, epoch))?;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        train_losses.push(loss);

        if !validation.is_empty() {
            let vloss = mean_loss(&params, validation).map_err(|e| diverged(e, epoch))?;
            validation_losses.push(vloss);
            let improved = best.as_ref().is_none_or(|(b, _, _)| vloss < *b);
            if improved {
                best = Some((vloss, epoch, params.clone()));
            } else if cfg.patience > 0 {
                let since = epoch - best.as_ref().map_or(0, |(_, e, _)| *e);
                if since >= cfg.patience {
                    break;
                }
            }
        }
    }

    let (params, best_epochs) = match best {
        Some((_, epoch, p)) => (p, epoch),
        None => {
            let n = train_losses.len();
            (params, n)
        }
    };
    Ok(TrainOutcome {
        params,
        train_losses,
        validation_losses,
        best_epochs,
    })
}

fn diverged(e: Error, epoch: usize) -> Error {
    match e {
        Error::NonFinite(_) => Error::Diverged {
            epoch,
            loss: f64::NAN,
        },
        other => other,
    }
}

/// Mean cross-entropy of `params` over a labelled set.
pub(crate) fn mean_loss(params: &ModelParams, data: &[(FeatureMatrix, usize)]) -> Result<f64> {
    let mut total = 0.0;
    for (x, y) in data {
        let trace = params.trace(x)?;
        total += cross_entropy(trace.logits().as_slice(), *y);
    }
    Ok(total / data.len() as f64)
}
