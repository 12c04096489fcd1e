//! Batch loss and analytic gradients.
//!
//! The batch objective is the mean per-sample reconstruction error plus the
//! regularizer. For the KL penalty, `ρ̂_j` is the batch mean of unit `j`'s
//! activation, so every sample's activation feeds into every sample's
//! gradient through `∂ρ̂_j/∂z_bj = 1/B`.
//!
//! Work is split into fixed-size chunks of samples. Chunks run in parallel
//! and their partial sums are added in chunk order, so results do not depend
//! on the thread count.

use rayon::prelude::*;

use super::loss::{kl_penalty, RHO_HAT_CLAMP};
use super::{AeModel, Matrix, ModelError, ModelKind, Regularizer, Scratch, TrainConfig};

const CHUNK: usize = 16;

/// What a batch is optimized against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    Reconstruction,
    /// `β · Σ_j KL(ρ ‖ ρ̂_j)`.
    KlSparsity { rho: f64, beta: f64 },
    /// `λ · Σ_j |z_j|`, averaged over the batch.
    L1Activity { coefficient: f64 },
}

impl Objective {
    pub fn for_model(kind: ModelKind, config: &TrainConfig) -> Self {
        match (kind, config.regularizer) {
            (ModelKind::Plain, _) => Objective::Reconstruction,
            (ModelKind::Sparse, Regularizer::Kl) => Objective::KlSparsity {
                rho: config.rho,
                beta: config.sparsity_weight,
            },
            (ModelKind::Sparse, Regularizer::L1Activity) => Objective::L1Activity {
                coefficient: config.sparsity_weight,
            },
        }
    }
}

/// Gradient tensors, shaped like the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub encoder_weights: Matrix,
    pub encoder_bias: Vec<f64>,
    pub decoder_weights: Matrix,
    pub decoder_bias: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(model: &AeModel) -> Self {
        let (h, n) = (model.hidden_dim(), model.input_dim());
        Self {
            encoder_weights: Matrix::zeros(h, n),
            encoder_bias: vec![0.0; h],
            decoder_weights: Matrix::zeros(n, h),
            decoder_bias: vec![0.0; n],
        }
    }

    /// Tensors in the same order as [`AeModel::parameters`].
    pub fn tensors(&self) -> [&[f64]; 4] {
        [
            self.encoder_weights.as_slice(),
            &self.encoder_bias,
            self.decoder_weights.as_slice(),
            &self.decoder_bias,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.encoder_weights.as_mut_slice(),
            &mut self.encoder_bias,
            self.decoder_weights.as_mut_slice(),
            &mut self.decoder_bias,
        ]
    }

    fn add_assign(&mut self, other: &Gradients) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
        }
    }
}

struct SamplePass {
    latent: Vec<f64>,
    reconstruction: Vec<f64>,
    error: f64,
}

fn check_batch<B: AsRef<[f64]>>(model: &AeModel, batch: &[B]) -> Result<(), ModelError> {
    if batch.is_empty() {
        return Err(ModelError::Dimension {
            expected: 1,
            found: 0,
        });
    }
    for x in batch {
        if x.as_ref().len() != model.input_dim() {
            return Err(ModelError::Dimension {
                expected: model.input_dim(),
                found: x.as_ref().len(),
            });
        }
    }
    Ok(())
}

fn forward_batch<B: AsRef<[f64]> + Sync>(model: &AeModel, batch: &[B]) -> Vec<SamplePass> {
    batch
        .par_chunks(CHUNK)
        .flat_map_iter(|chunk| {
            let mut scratch = Scratch::new();
            chunk
                .iter()
                .map(|x| {
                    let x = x.as_ref();
                    let error = model
                        .reconstruction_error_with(x, &mut scratch)
                        .expect("batch dimensions checked");
                    SamplePass {
                        latent: scratch.latent().to_vec(),
                        reconstruction: scratch.reconstruction().to_vec(),
                        error,
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

fn mean_activation(passes: &[SamplePass], hidden: usize) -> Vec<f64> {
    let mut rho_hat = vec![0.0; hidden];
    for pass in passes {
        rho_hat
            .iter_mut()
            .zip(&pass.latent)
            .for_each(|(r, z)| *r += z);
    }
    let count = passes.len() as f64;
    rho_hat.iter_mut().for_each(|r| *r /= count);
    rho_hat
}

fn objective_value(passes: &[SamplePass], hidden: usize, objective: Objective) -> f64 {
    let count = passes.len() as f64;
    let reconstruction = passes.iter().map(|p| p.error).sum::<f64>() / count;
    match objective {
        Objective::Reconstruction => reconstruction,
        Objective::KlSparsity { beta: 0.0, .. } => reconstruction,
        Objective::KlSparsity { rho, beta } => {
            reconstruction + beta * kl_penalty(rho, &mean_activation(passes, hidden))
        }
        Objective::L1Activity { coefficient } => {
            let activity = passes
                .iter()
                .map(|p| p.latent.iter().map(|z| z.abs()).sum::<f64>())
                .sum::<f64>()
                / count;
            reconstruction + coefficient * activity
        }
    }
}

/// Batch-mean objective without gradients.
pub fn batch_loss<B: AsRef<[f64]> + Sync>(
    model: &AeModel,
    batch: &[B],
    objective: Objective,
) -> Result<f64, ModelError> {
    check_batch(model, batch)?;
    let passes = forward_batch(model, batch);
    Ok(objective_value(&passes, model.hidden_dim(), objective))
}

/// Batch-mean objective and its gradient with respect to every parameter.
pub fn batch_gradients<B: AsRef<[f64]> + Sync>(
    model: &AeModel,
    batch: &[B],
    objective: Objective,
) -> Result<(f64, Gradients), ModelError> {
    check_batch(model, batch)?;
    let hidden = model.hidden_dim();
    let passes = forward_batch(model, batch);
    let loss = objective_value(&passes, hidden, objective);
    let scale = 1.0 / batch.len() as f64;

    // Regularizer contribution to ∂L/∂z_bj, identical for every sample.
    let unit_penalty: Vec<f64> = match objective {
        Objective::Reconstruction => vec![0.0; hidden],
        Objective::KlSparsity { beta: 0.0, .. } => vec![0.0; hidden],
        Objective::KlSparsity { rho, beta } => mean_activation(&passes, hidden)
            .into_iter()
            .map(|r| {
                // The clamp is flat outside its bounds.
                if r <= RHO_HAT_CLAMP.0 || r >= RHO_HAT_CLAMP.1 {
                    0.0
                } else {
                    beta * scale * (-rho / r + (1.0 - rho) / (1.0 - r))
                }
            })
            .collect(),
        // ReLU outputs are non-negative, so d|z|/dz = 1 wherever the unit is active.
        Objective::L1Activity { coefficient } => vec![coefficient * scale; hidden],
    };

    let partials: Vec<Gradients> = batch
        .par_chunks(CHUNK)
        .zip(passes.par_chunks(CHUNK))
        .map(|(xs, ps)| {
            let mut grads = Gradients::zeros_like(model);
            let mut output_delta = vec![0.0; model.input_dim()];
            let mut latent_delta = vec![0.0; hidden];
            let mut active = Vec::with_capacity(hidden);
            let mut nonzero = Vec::with_capacity(model.input_dim());
            for (x, pass) in xs.iter().zip(ps) {
                accumulate_sample(
                    model,
                    x.as_ref(),
                    pass,
                    scale,
                    &unit_penalty,
                    &mut grads,
                    &mut output_delta,
                    &mut latent_delta,
                    &mut active,
                    &mut nonzero,
                );
            }
            grads
        })
        .collect();

    let mut total = Gradients::zeros_like(model);
    for partial in &partials {
        total.add_assign(partial);
    }
    Ok((loss, total))
}

#[allow(clippy::too_many_arguments)]
fn accumulate_sample(
    model: &AeModel,
    x: &[f64],
    pass: &SamplePass,
    scale: f64,
    unit_penalty: &[f64],
    grads: &mut Gradients,
    output_delta: &mut [f64],
    latent_delta: &mut [f64],
    active: &mut Vec<usize>,
    nonzero: &mut Vec<usize>,
) {
    active.clear();
    active.extend((0..pass.latent.len()).filter(|&j| pass.latent[j] > 0.0));
    nonzero.clear();
    nonzero.extend((0..x.len()).filter(|&i| x[i] != 0.0));

    // Decoder: δ_i = ∂L/∂a2_i = (2/B)(x̂_i − x_i) · x̂_i(1 − x̂_i)
    for (i, delta) in output_delta.iter_mut().enumerate() {
        let xh = pass.reconstruction[i];
        *delta = 2.0 * scale * (xh - x[i]) * xh * (1.0 - xh);
    }
    for &j in active.iter() {
        latent_delta[j] = unit_penalty[j];
    }
    for (i, &delta) in output_delta.iter().enumerate() {
        grads.decoder_bias[i] += delta;
        let w_row = model.decoder_weights.row(i);
        let g_row = grads.decoder_weights.row_mut(i);
        for &j in active.iter() {
            g_row[j] += delta * pass.latent[j];
            latent_delta[j] += w_row[j] * delta;
        }
    }

    // Encoder: inactive units have zero rectifier slope.
    for &j in active.iter() {
        let delta = latent_delta[j];
        grads.encoder_bias[j] += delta;
        let g_row = grads.encoder_weights.row_mut(j);
        for &i in nonzero.iter() {
            g_row[i] += delta * x[i];
        }
    }
}
