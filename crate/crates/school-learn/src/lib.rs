//! Learning stack for silhouette-based collective-motion imitation: masked
//! video autoencoder, latent clustering, adversarial discriminator, PPO
//! training loop and evaluation metrics.

pub mod cluster;
pub mod discriminator;
pub mod error;
pub mod metrics;
pub mod mvae;
pub mod policy;
pub mod rollout;
pub mod trainer;

pub use error::{LearnError, Result};
