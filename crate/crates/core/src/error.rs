use thiserror::Error;

/// Errors raised anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid point count {0} is not a power of two >= 8")]
    NonPowerOfTwo(usize),
    #[error("grid length {0} is not positive")]
    NonPositiveLength(f64),
    #[error("unsupported dimension count {0} (1 or 2 allowed)")]
    UnsupportedDimension(usize),
    #[error("field shape does not match its grid: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("packet width {sigma} is below 4 grid spacings ({min})")]
    UnresolvedWidth { sigma: f64, min: f64 },
    #[error("packet tails reach the box edge (relative density {0:e} >= 1e-12)")]
    TailOverflow(f64),
    #[error("field is zero (or below the node floor) everywhere")]
    AllNodes,
    #[error("mass must be positive, got {0}")]
    NonPositiveMass(f64),
    #[error("invalid physical parameters: {0}")]
    InvalidParams(String),

    #[error("stability guard tripped: dt * rate = {product:.4} rad >= 0.5 (rate {rate:.4e}, dt {dt:e})")]
    StabilityGuardTripped { rate: f64, dt: f64, product: f64 },
    #[error("norm drift {drift:e} exceeded {threshold:e} at t = {time}")]
    NormDriftAbort { drift: f64, threshold: f64, time: f64 },
    #[error("node mask covers {0:.3}% of the grid (limit 1%)")]
    TooManyNodes(f64),
    #[error("step budget exceeded: {needed} steps needed, max_steps = {max}")]
    StepLimit { needed: usize, max: usize },

    #[error("moment oracle: sigma fell below 1e-6 at t = {0}")]
    SigmaUnderflow(f64),

    #[error("branch masks leak mass: {0}")]
    BranchOverlap(String),
    #[error("state is not a product state (rank-1 residual {0:e})")]
    NotProductState(f64),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown config key `{key}` on line {line}")]
    UnknownKey { line: usize, key: String },
    #[error("validation error: {0}")]
    Validation(String),

    #[error("snapshot: bad magic bytes")]
    BadMagic,
    #[error("snapshot: format version {found} not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("snapshot: truncated payload ({0})")]
    TruncatedPayload(String),
    #[error("snapshot: checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    ChecksumMismatch { stored: u32, computed: u32 },

    #[error("output directory is locked by another run: {0}")]
    Locked(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
