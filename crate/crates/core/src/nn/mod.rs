//! Single-hidden-layer encoder/decoder networks.
//!
//! Both detectors share one architecture: a rectifier encoder and a logistic
//! decoder, `x̂ = sigmoid(W2 · relu(W1 · x + b1) + b2)`. The sparse detector is
//! over-complete (hidden > input) and trained with a sparsity penalty; the
//! plain detector compresses (hidden < input) and is trained on reconstruction
//! alone.
//!
//! Inference skips zero inputs in the encoder and inactive latent units in the
//! decoder. Encoded flows are mostly zeros (one-hot blocks, zero counters), so
//! this is where most of the per-flow cost goes.

mod adam;
mod grad;
mod loss;
mod persist;
mod train;

use std::fmt;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocess::SpecHash;

pub use adam::{Adam, AdamConfig};
pub use grad::{batch_gradients, batch_loss, Gradients, Objective};
pub use loss::{kl_divergence, kl_penalty, loss_plain, loss_sparse, RHO_HAT_CLAMP};
pub use train::{train, train_from, Regularizer, TrainConfig, TrainError, TrainHistory};

/// Which detector a network serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    /// Over-complete network trained with a sparsity penalty.
    Sparse,
    /// Compressing network trained on reconstruction error only.
    Plain,
}

impl ModelKind {
    pub fn default_hidden(self) -> usize {
        match self {
            ModelKind::Sparse => 140,
            ModelKind::Plain => 80,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Sparse => "sparse",
            ModelKind::Plain => "plain",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("layer sizes must be positive (input {input}, hidden {hidden})")]
    InvalidDims { input: usize, hidden: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("expected a {expected} model, found {found}")]
    KindMismatch { expected: ModelKind, found: ModelKind },
    #[error("unsupported model format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error("model i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, ModelError> {
        if data.len() != rows * cols {
            return Err(ModelError::Dimension {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

#[inline]
pub fn relu(a: f64) -> f64 {
    if a > 0.0 {
        a
    } else {
        0.0
    }
}

#[inline]
pub fn sigmoid(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

/// Reusable buffers for allocation-free inference.
#[derive(Debug, Clone, Default)]
pub struct Scratch {
    nonzero_inputs: Vec<usize>,
    active_units: Vec<usize>,
    latent: Vec<f64>,
    reconstruction: Vec<f64>,
}

impl Scratch {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn latent(&self) -> &[f64] {
        &self.latent
    }

    pub fn reconstruction(&self) -> &[f64] {
        &self.reconstruction
    }
}

/// Output of a full forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub latent: Vec<f64>,
    pub reconstruction: Vec<f64>,
}

/// One encoder/decoder network with its training configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct AeModel {
    kind: ModelKind,
    encoder_weights: Matrix,
    encoder_bias: Vec<f64>,
    decoder_weights: Matrix,
    decoder_bias: Vec<f64>,
    spec_hash: Option<SpecHash>,
    config: TrainConfig,
}

impl AeModel {
    /// Glorot-uniform weights drawn from a seeded stream (encoder first), zero biases.
    pub fn init(kind: ModelKind, input: usize, hidden: usize, seed: u64) -> Result<Self, ModelError> {
        if input == 0 || hidden == 0 {
            return Err(ModelError::InvalidDims { input, hidden });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let limit = (6.0 / (input + hidden) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
        let encoder_weights = Matrix::from_fn(hidden, input, |_, _| dist.sample(&mut rng));
        let decoder_weights = Matrix::from_fn(input, hidden, |_, _| dist.sample(&mut rng));
        Ok(Self {
            kind,
            encoder_weights,
            encoder_bias: vec![0.0; hidden],
            decoder_weights,
            decoder_bias: vec![0.0; input],
            spec_hash: None,
            config: TrainConfig {
                seed,
                ..TrainConfig::default()
            },
        })
    }

    /// Builds a model from explicit parameters: encoder weights are
    /// `hidden × input`, decoder weights `input × hidden`.
    pub fn from_parameters(
        kind: ModelKind,
        encoder_weights: Matrix,
        encoder_bias: Vec<f64>,
        decoder_weights: Matrix,
        decoder_bias: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let (hidden, input) = encoder_weights.shape();
        if input == 0 || hidden == 0 {
            return Err(ModelError::InvalidDims { input, hidden });
        }
        for (expected, found) in [
            (hidden, encoder_bias.len()),
            (input * hidden, decoder_weights.rows() * decoder_weights.cols()),
            (input, decoder_weights.rows()),
            (input, decoder_bias.len()),
        ] {
            if expected != found {
                return Err(ModelError::Dimension { expected, found });
            }
        }
        Ok(Self {
            kind,
            encoder_weights,
            encoder_bias,
            decoder_weights,
            decoder_bias,
            spec_hash: None,
            config: TrainConfig::default(),
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.encoder_weights.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.encoder_weights.rows()
    }

    pub fn encoder_weights(&self) -> &Matrix {
        &self.encoder_weights
    }

    pub fn encoder_bias(&self) -> &[f64] {
        &self.encoder_bias
    }

    pub fn decoder_weights(&self) -> &Matrix {
        &self.decoder_weights
    }

    pub fn decoder_bias(&self) -> &[f64] {
        &self.decoder_bias
    }

    pub fn spec_hash(&self) -> Option<SpecHash> {
        self.spec_hash
    }

    pub fn set_spec_hash(&mut self, hash: SpecHash) {
        self.spec_hash = Some(hash);
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub(crate) fn set_config(&mut self, config: TrainConfig) {
        self.config = config;
    }

    pub fn parameter_count(&self) -> usize {
        2 * self.input_dim() * self.hidden_dim() + self.input_dim() + self.hidden_dim()
    }

    /// Parameter tensors in declared order: W1, b1, W2, b2.
    pub fn parameters(&self) -> [&[f64]; 4] {
        [
            self.encoder_weights.as_slice(),
            &self.encoder_bias,
            self.decoder_weights.as_slice(),
            &self.decoder_bias,
        ]
    }

    pub fn parameters_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.encoder_weights.as_mut_slice(),
            &mut self.encoder_bias,
            self.decoder_weights.as_mut_slice(),
            &mut self.decoder_bias,
        ]
    }

    fn check_input(&self, x: &[f64]) -> Result<(), ModelError> {
        if x.len() == self.input_dim() {
            Ok(())
        } else {
            Err(ModelError::Dimension {
                expected: self.input_dim(),
                found: x.len(),
            })
        }
    }

    /// Latent code `relu(W1 · x + b1)` into `scratch`.
    pub fn encode_with<'s>(&self, x: &[f64], scratch: &'s mut Scratch) -> Result<&'s [f64], ModelError> {
        self.check_input(x)?;
        self.encode_unchecked(x, scratch);
        Ok(&scratch.latent)
    }

    fn encode_unchecked(&self, x: &[f64], scratch: &mut Scratch) {
        scratch.nonzero_inputs.clear();
        scratch
            .nonzero_inputs
            .extend(x.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i));
        let hidden = self.hidden_dim();
        scratch.latent.resize(hidden, 0.0);
        for (j, out) in scratch.latent.iter_mut().enumerate() {
            let row = self.encoder_weights.row(j);
            let mut acc = self.encoder_bias[j];
            for &i in &scratch.nonzero_inputs {
                acc += row[i] * x[i];
            }
            *out = relu(acc);
        }
    }

    fn decode_unchecked(&self, scratch: &mut Scratch) {
        scratch.active_units.clear();
        scratch.active_units.extend(
            scratch
                .latent
                .iter()
                .enumerate()
                .filter(|(_, z)| **z > 0.0)
                .map(|(j, _)| j),
        );
        let input = self.input_dim();
        scratch.reconstruction.resize(input, 0.0);
        for (i, out) in scratch.reconstruction.iter_mut().enumerate() {
            let row = self.decoder_weights.row(i);
            let mut acc = self.decoder_bias[i];
            for &j in &scratch.active_units {
                acc += row[j] * scratch.latent[j];
            }
            *out = sigmoid(acc);
        }
    }

    /// Full pass into `scratch`; read results with [`Scratch::latent`] and
    /// [`Scratch::reconstruction`].
    pub fn forward_with(&self, x: &[f64], scratch: &mut Scratch) -> Result<(), ModelError> {
        self.check_input(x)?;
        self.encode_unchecked(x, scratch);
        self.decode_unchecked(scratch);
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Forward, ModelError> {
        let mut scratch = Scratch::new();
        self.forward_with(x, &mut scratch)?;
        Ok(Forward {
            latent: scratch.latent,
            reconstruction: scratch.reconstruction,
        })
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        let mut scratch = Scratch::new();
        self.encode_with(x, &mut scratch)?;
        Ok(scratch.latent)
    }

    /// Squared Euclidean distance between `x` and its reconstruction.
    pub fn reconstruction_error_with(&self, x: &[f64], scratch: &mut Scratch) -> Result<f64, ModelError> {
        self.forward_with(x, scratch)?;
        Ok(loss_plain(x, &scratch.reconstruction).expect("lengths checked"))
    }

    pub fn reconstruction_error(&self, x: &[f64]) -> Result<f64, ModelError> {
        self.reconstruction_error_with(x, &mut Scratch::new())
    }
}
