//! Deterministic cage simulation, silhouette observation and behavior rewards
//! for school-of-fish imitation experiments.

pub mod camera;
pub mod clip;
pub mod error;
pub mod pgm;
pub mod rewards;
pub mod scripted;
pub mod silhouette;
pub mod sim;
pub mod vec;

pub use error::{CoreError, Result};
