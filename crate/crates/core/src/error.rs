use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("point is behind the camera (camera-frame z = {0})")]
    BehindCamera(f64),
    #[error("index out of range: {0}")]
    OutOfRange(String),
    #[error("neighbor count {count} exceeds the largest interval bound {bound}")]
    IntervalOverflow { count: usize, bound: usize },
    #[error("could not place {requested} non-overlapping boxes after {attempts} attempts")]
    InfeasiblePacking { requested: usize, attempts: usize },
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable category, used by the command-line front end.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::Empty(_) => "empty",
            Error::NonFinite(_) => "non_finite",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::BehindCamera(_) => "behind_camera",
            Error::OutOfRange(_) => "out_of_range",
            Error::IntervalOverflow { .. } => "interval_overflow",
            Error::InfeasiblePacking { .. } => "infeasible_packing",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
        }
    }
}
