use thiserror::Error;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("training dataset is empty")]
    EmptyDataset,

    #[error("clip resolution {got_w}x{got_h} does not match model {want_w}x{want_h}")]
    ClipShapeMismatch { want_w: usize, want_h: usize, got_w: usize, got_h: usize },

    #[error("latent length {got} does not match model dimension {want}")]
    LatentDimMismatch { want: usize, got: usize },

    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },

    #[error("at most {max} points supported for exact embedding, got {got}")]
    TooManyPoints { max: usize, got: usize },

    #[error("input is empty")]
    EmptyInput,

    #[error("feature dimension mismatch: {a} vs {b}")]
    DimensionMismatch { a: usize, b: usize },

    #[error("covariance product has negative eigenvalue {0} beyond tolerance")]
    NotPositiveSemiDefinite(f64),

    #[error("trajectory sets have mismatched lengths: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },

    #[error("missing prerequisite artifact: {0}")]
    MissingArtifact(String),

    #[error(transparent)]
    Core(#[from] school_core::CoreError),
}

pub type Result<T> = std::result::Result<T, LearnError>;
