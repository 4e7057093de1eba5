use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("failed to place {placed} of {requested} agents with min separation {min_separation} m after {attempts} attempts")]
    PlacementFailed { requested: usize, placed: usize, min_separation: f64, attempts: usize },

    #[error("action contains non-finite components")]
    NonFiniteAction,

    #[error("got {got} actions for {expected} alive agents")]
    ActionCountMismatch { expected: usize, got: usize },

    #[error("agent index {index} out of range (agent count {count})")]
    InvalidAgentIndex { index: usize, count: usize },

    #[error("radius must be positive, got {0}")]
    InvalidRadius(f64),

    #[error("frame {width}x{height} not divisible by patch size {patch_size}")]
    PatchSizeMismatch { width: usize, height: usize, patch_size: usize },

    #[error("mask ratio {0} outside [0, 1)")]
    InvalidMaskRatio(f64),

    #[error("frame resolution {got_w}x{got_h} differs from {want_w}x{want_h} in {file}")]
    FrameResolutionMismatch { want_w: usize, want_h: usize, got_w: usize, got_h: usize, file: String },

    #[error("malformed PGM file {file}: {reason}")]
    Pgm { file: String, reason: String },

    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

pub type Result<T> = std::result::Result<T, CoreError>;
