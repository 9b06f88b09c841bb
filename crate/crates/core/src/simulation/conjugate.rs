//! Conjugate normal populations with the closed-form estimate-similarity
//! weight, used to check convergence to the posterior mean.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::aggregation::weighted_mean;
use crate::error::{Error, Result};
use crate::rng::{stream, StreamTag};
use crate::weights::GaussianModel;

/// True parameters and estimates of `k` individuals.
pub fn draw_population(model: &GaussianModel, k: usize, seed: u64, replication: u64) -> (Vec<f64>, Vec<f64>) {
    let (ps, os) = (model.prior_var.sqrt(), model.obs_var.sqrt());
    (0..k)
        .map(|i| {
            let mut rng = stream(seed, replication, i as u64, StreamTag::Data);
            let g: f64 = rng.sample(StandardNormal);
            let e: f64 = rng.sample(StandardNormal);
            let theta = model.prior_mean + ps * g;
            (theta, theta + os * e)
        })
        .unzip()
}

/// Pooled estimate for a target with estimate `target_hat`, pooling the
/// target itself and every estimate in `others` with exact weights.
pub fn pooled_estimate(model: &GaussianModel, target_hat: f64, others: &[f64]) -> Result<f64> {
    let values: Vec<f64> = std::iter::once(target_hat).chain(others.iter().copied()).collect();
    let weights: Vec<f64> = values.iter().map(|v| model.w2(*v, target_hat)).collect();
    weighted_mean(&values, &weights).ok_or_else(|| Error::EmptyNeighborhood { target: "conjugate target".into() })
}

/// Root mean square of `pooled - posterior mean` over `seeds` independent
/// populations of size `k`, for a fixed target estimate.
pub fn convergence_rms(model: &GaussianModel, k: usize, target_hat: f64, seeds: usize, base_seed: u64) -> Result<f64> {
    let exact = model.posterior_mean(target_hat);
    let sq: Vec<f64> = (0..seeds)
        .into_par_iter()
        .map(|s| {
            let (_, hats) = draw_population(model, k, base_seed, s as u64);
            Ok((pooled_estimate(model, target_hat, &hats)? - exact).powi(2))
        })
        .collect::<Result<_>>()?;
    Ok((sq.iter().sum::<f64>() / seeds as f64).sqrt())
}

/// `(1 / (K + 1)) sum_k w2(theta_hat_k, theta_hat_0)` with the target drawn
/// from the marginal along with the others.
pub fn normalization_mean(model: &GaussianModel, k: usize, seed: u64, replication: u64) -> f64 {
    let (_, hats) = draw_population(model, k + 1, seed, replication);
    let t = hats[0];
    hats.iter().map(|h| model.w2(*h, t)).sum::<f64>() / (k + 1) as f64
}
