use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid lattice geometry: {0}")]
    Geometry(String),

    #[error("unsupported moment: {0}")]
    UnsupportedMoment(String),

    #[error("non-finite value in {what} at t = {t}")]
    NonFinite { what: &'static str, t: f64 },

    #[error("invariant violated at t = {t}: {what} (value {value:e})")]
    Invariant { what: String, t: f64, value: f64 },

    #[error("trajectory {trajectory} failed: {source}")]
    Trajectory {
        trajectory: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("did not converge: {0}")]
    NoConvergence(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("undefined quantity: {0}")]
    Undefined(String),

    #[error("curves {a} and {b} have no overlapping range")]
    NoOverlap { a: usize, b: usize },

    #[error("ensemble not stationary after burn-in: {0}")]
    NotStationary(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("checkpoint does not match configuration (expected hash {expected}, found {found})")]
    ResumeMismatch { expected: String, found: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    /// True for failures of the numerical integration itself, as opposed to
    /// user input or file handling.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::NonFinite { .. }
            | Error::Invariant { .. }
            | Error::NoConvergence(_)
            | Error::NotStationary(_)
            | Error::Fit(_)
            | Error::Undefined(_)
            | Error::NoOverlap { .. } => true,
            Error::Trajectory { source, .. } => source.is_numeric(),
            _ => false,
        }
    }

    pub(crate) fn in_trajectory(self, trajectory: u64) -> Error {
        Error::Trajectory {
            trajectory,
            source: Box::new(self),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Config(e.to_string())
    }
}

impl From<toml::ser::Error> for Error {
    fn from(e: toml::ser::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
