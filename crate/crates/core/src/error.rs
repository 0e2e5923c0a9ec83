use thiserror::Error;

#[derive(Debug, Error)]
pub enum NskError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("index {index} out of range for {len} modes")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("homogeneous norm undefined at xi=0 (s = {s} < 0 with nonzero DC coefficient)")]
    UndefinedAtOrigin { s: f64 },

    #[error("gevrey weight overflow: sqrt(c0 t)|xi|_max = {exponent:.3} > 700; max admissible t = {t_max:.6e}")]
    GevreyOverflow { exponent: f64, t_max: f64 },

    #[error("vacuum guard violated: min(1+a) = {min_density:.6e} < {threshold}")]
    Vacuum { min_density: f64, threshold: f64 },

    #[error("pressure radius guard violated: max|a| = {max_abs:.6e} > {limit:.6e}")]
    PressureRadius { max_abs: f64, limit: f64 },

    #[error("guard abort at t = {t}: {reason}")]
    GuardAbort { t: f64, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown name: {0}")]
    UnknownName(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed snapshot: {0}")]
    Snapshot(String),
}

pub type Result<T> = std::result::Result<T, NskError>;
