use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("stability index {0} is outside the open interval (0, 2)")]
    InvalidAlpha(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("grid cannot meet the mass truncation target {target:e} for alpha = {alpha}, t = {t}: {detail}")]
    TruncationTarget { alpha: f64, t: f64, target: f64, detail: String },
    #[error("memory guard: {cells} grid cells requested, limit is {limit}")]
    MemoryGuard { cells: usize, limit: usize },
    #[error("coefficient field violates its declared bounds at {point:?}: {detail}")]
    FieldBounds { point: Vec<f64>, detail: String },
    #[error("driver grid step {driver_dt} is coarser than the freezing grid 2^-{level}")]
    DriverTooCoarse { driver_dt: f64, level: u32 },
    #[error("driver grid step {0} is not of the form 2^-m")]
    NonDyadicDriver(f64),
    #[error("tail bound {tail:e} exceeds tolerance {tolerance:e}; increase the horizon")]
    HorizonTooShort { tail: f64, tolerance: f64 },
    #[error("the potential operator needs a transient process (d >= 3); got d = {0}")]
    NotTransient(usize),
    #[error("multiplier symbol is undefined at xi = 0")]
    ZeroFrequency,
    #[error("locality condition fails: eta = {eta} exceeds eta0 = {eta0}")]
    LocalityViolated { eta: f64, eta0: f64 },
    #[error("operation needs a uniform grid")]
    NonUniformGrid,
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
