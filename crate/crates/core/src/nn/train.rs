//! Mini-batch Adam training on normal flows only.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{batch_gradients, batch_loss, Adam, AdamConfig, AeModel, ModelError, ModelKind, Objective};
use crate::preprocess::FeatureVector;

const SHUFFLE_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

/// Sparsity regularizer for the sparse network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Regularizer {
    /// KL divergence between the target rate ρ and each unit's batch-mean activation.
    #[default]
    Kl,
    /// L1 penalty on hidden activations.
    L1Activity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Target mean activation ρ, in (0, 1).
    pub rho: f64,
    /// β, the weight of the sparsity penalty (KL weight or L1 coefficient).
    pub sparsity_weight: f64,
    pub regularizer: Regularizer,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            rho: 0.05,
            sparsity_weight: 1e-4,
            regularizer: Regularizer::Kl,
            learning_rate: adam.learning_rate,
            adam_beta1: adam.beta1,
            adam_beta2: adam.beta2,
            adam_epsilon: adam.epsilon,
            batch_size: 128,
            epochs: 50,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: &str| Err(TrainError::Config(msg.to_string()));
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad("rho must lie in (0, 1)");
        }
        if !(self.sparsity_weight >= 0.0 && self.sparsity_weight.is_finite()) {
            return bad("sparsity weight must be finite and non-negative");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if !(self.adam_epsilon > 0.0) {
            return bad("Adam epsilon must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
        }
    }
}

/// Per-epoch mean losses. `validation_loss` is empty when no validation set was given.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Trains a freshly initialized network of the kind's standard hidden size.
pub fn train(
    kind: ModelKind,
    train_set: &[FeatureVector],
    validation: &[FeatureVector],
    config: &TrainConfig,
) -> Result<(AeModel, TrainHistory), TrainError> {
    let input = train_set.first().ok_or(TrainError::EmptyTrainingSet)?.len();
    let model = AeModel::init(kind, input, kind.default_hidden(), config.seed)?;
    train_from(model, train_set, validation, config)
}

/// Trains `model` in place of its current weights. Deterministic given
/// `config.seed`, the data and the starting weights.
pub fn train_from(
    mut model: AeModel,
    train_set: &[FeatureVector],
    validation: &[FeatureVector],
    config: &TrainConfig,
) -> Result<(AeModel, TrainHistory), TrainError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    let objective = Objective::for_model(model.kind(), config);
    let shapes: Vec<usize> = model.parameters().iter().map(|t| t.len()).collect();
    let mut adam = Adam::new(config.adam(), &shapes);
    // Separate stream from the one that drew the initial weights.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = TrainHistory::default();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut weighted_loss = 0.0;
        for (batch_index, indices) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&[f64]> = indices.iter().map(|&i| &train_set[i][..]).collect();
            let (loss, grads) = batch_gradients(&model, &batch, objective)?;
            if !loss.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    batch: batch_index + 1,
                });
            }
            weighted_loss += loss * batch.len() as f64;
            adam.step(model.parameters_mut(), grads.tensors());
        }
        let epoch_loss = weighted_loss / train_set.len() as f64;
        history.train_loss.push(epoch_loss);
        if !validation.is_empty() {
            let loss = batch_loss(&model, validation, objective)?;
            if !loss.is_finite() {
                return Err(TrainError::Diverged { epoch, batch: 0 });
            }
            history.validation_loss.push(loss);
        }
        log::debug!(
            "{} epoch {epoch}/{}: train {epoch_loss:.6} validation {:?}",
            model.kind(),
            config.epochs,
            history.validation_loss.last()
        );
    }
    model.set_config(*config);
    Ok((model, history))
}
