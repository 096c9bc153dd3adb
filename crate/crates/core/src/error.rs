use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid bounds: {0}")]
    InvalidBounds(String),

    #[error("malformed grid blob: {0}")]
    MalformedBlob(String),

    #[error("pixel ({u}, {v}) is outside the {width}x{height} image")]
    PixelOutOfRange {
        u: usize,
        v: usize,
        width: usize,
        height: usize,
    },

    #[error("invalid sampling interval: near {near} must be below far {far}")]
    InvalidInterval { near: f64, far: f64 },

    #[error("ray {0} carries no target color")]
    MissingTarget(usize),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("forward cache is stale (parameters changed since the forward pass)")]
    StaleCache,

    #[error("image is {actual_w}x{actual_h}, database expects {expected_w}x{expected_h}")]
    ImageDimensions {
        expected_w: usize,
        expected_h: usize,
        actual_w: usize,
        actual_h: usize,
    },

    #[error("ray pool is empty")]
    EmptyPool,

    #[error("trajectory has no waypoints")]
    EmptyTrajectory,

    #[error("planning objective became non-finite at iteration {0}")]
    NonFiniteObjective(usize),

    #[error("degenerate frustum: {0}")]
    DegenerateFrustum(String),

    #[error("candidate set is empty")]
    EmptyCandidates,

    #[error("point cloud is empty")]
    EmptyPointCloud,

    #[error("no voxel reaches the surface threshold")]
    NoSurface,

    #[error("image {width}x{height} is smaller than the {window}x{window} SSIM window")]
    ImageTooSmall {
        width: usize,
        height: usize,
        window: usize,
    },

    #[error("non-finite loss in {stage} stage at iteration {iteration}")]
    NonFiniteLoss { stage: &'static str, iteration: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("scene definition: {0}")]
    Scene(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("png: {0}")]
    Png(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by the numerics rather than by inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteLoss { .. } | Error::NonFiniteObjective(_)
        )
    }
}
