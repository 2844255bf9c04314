use thiserror::Error;

#[derive(Debug, Error)]
pub enum LorError {
    #[error("axis {axis} has {len} voxels; cubic interpolation needs at least 4")]
    DimensionTooSmall { axis: usize, len: usize },

    #[error("only 2D and 3D grids are supported, got {0} axes")]
    UnsupportedDimension(usize),

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("point {point:?} lies outside the sampling domain")]
    OutOfDomain { point: [f64; 3] },

    #[error("direction vector has zero length")]
    ZeroDirection,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported kernel: {0}")]
    UnsupportedKernel(String),

    #[error("histogram has zero total mass")]
    EmptyHistogram,

    #[error("distribution is not normalized (mass {mass})")]
    NotNormalized { mass: f64 },

    #[error("degenerate histogram: {0}")]
    DegenerateHistogram(String),

    #[error("no sample points fall inside the overlap of the two images")]
    NoOverlap,

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LorError>;
