//! Library surface of the pipeline driver, used by the binary and by the
//! integration/acceptance suites.

pub mod archive;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod pipeline;

pub use config::EngineConfig;
pub use error::{CliError, Result};
