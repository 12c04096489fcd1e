use super::ModelError;

/// Bounds applied to mean activations before the KL term.
pub const RHO_HAT_CLAMP: (f64, f64) = (1e-6, 1.0 - 1e-6);

/// Squared Euclidean reconstruction error, `Σ (x_i − x̂_i)²`.
pub fn loss_plain(x: &[f64], reconstruction: &[f64]) -> Result<f64, ModelError> {
    if x.len() != reconstruction.len() {
        return Err(ModelError::Dimension {
            expected: x.len(),
            found: reconstruction.len(),
        });
    }
    Ok(x
        .iter()
        .zip(reconstruction)
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

/// Bernoulli KL divergence `KL(ρ ‖ ρ̂)`. `rho_hat` is clamped into [`RHO_HAT_CLAMP`].
pub fn kl_divergence(rho: f64, rho_hat: f64) -> f64 {
    let rho_hat = rho_hat.clamp(RHO_HAT_CLAMP.0, RHO_HAT_CLAMP.1);
    rho * (rho / rho_hat).ln() + (1.0 - rho) * ((1.0 - rho) / (1.0 - rho_hat)).ln()
}

/// `Σ_j KL(ρ ‖ ρ̂_j)` over all hidden units.
pub fn kl_penalty(rho: f64, rho_hat: &[f64]) -> f64 {
    rho_hat.iter().map(|r| kl_divergence(rho, *r)).sum()
}

/// Reconstruction error plus the weighted sparsity penalty.
pub fn loss_sparse(
    x: &[f64],
    reconstruction: &[f64],
    rho_hat: &[f64],
    rho: f64,
    beta: f64,
) -> Result<f64, ModelError> {
    let reconstruction_term = loss_plain(x, reconstruction)?;
    if beta == 0.0 {
        return Ok(reconstruction_term);
    }
    Ok(reconstruction_term + beta * kl_penalty(rho, rho_hat))
}
