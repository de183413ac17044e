//! Model-generic inference. Each algorithm is specialized to a model when
//! constructed, where all graph queries happen; running it afterwards only
//! executes precomputed node vectors.

use rand::Rng;

mod importance;
mod mcem;
mod mcmc;
pub mod optim;
mod samplers;

pub use importance::{draw_prior_samples, ImportanceEstimate, ImportanceSampler};
pub use mcem::{Mcem, McemControl, McemIteration, McemResult};
pub use mcmc::{Mcmc, McmcConfiguration, SamplerSpec};
pub use samplers::{
    AdaptationStep, BlockRwSampler, RwSampler, Sampler, SamplerControl, SamplerKind, SamplerStats,
};

/// Metropolis-Hastings acceptance: always for a non-negative log ratio,
/// otherwise with probability `exp(log_ratio)`. NaN is rejected.
pub fn decide<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio >= 0.0 {
        return true;
    }
    if log_ratio.is_nan() {
        return false;
    }
    let u: f64 = rng.random();
    u.ln() < log_ratio
}

#[cfg(test)]
mod tests;
