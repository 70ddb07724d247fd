use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("angle {0} deg is outside [-90, 90]")]
    AngleOutOfRange(f64),

    #[error("invalid radar configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid angle grid: {0}")]
    InvalidGrid(String),

    #[error("emitter {index} at (doa {doa_deg} deg, dod {dod_deg} deg) is not on the angle grid")]
    OffGridEmitter {
        index: usize,
        doa_deg: f64,
        dod_deg: f64,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("cell index ({g}, {q}) out of range for a {size}-point grid")]
    CellOutOfRange { g: usize, q: usize, size: usize },

    #[error("cannot set a finite SNR on an all-zero signal")]
    ZeroSignal,

    #[error("invalid solver parameters: {0}")]
    InvalidParams(String),

    #[error("non-finite value {what} at cell ({g}, {q})")]
    NonFinite { what: &'static str, g: usize, q: usize },

    #[error("matrix is numerically singular ({0})")]
    Singular(String),

    #[error("trial with seed {seed} failed for method {method}: {source}")]
    Trial {
        seed: u64,
        method: String,
        #[source]
        source: Box<Error>,
    },

    #[error("scenario file: {0}")]
    Parse(String),
}
