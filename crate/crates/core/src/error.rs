use thiserror::Error;

/// Errors raised by the laboratory.
///
/// The variants map onto the CLI exit statuses: statistical failures are not
/// errors (they live in reports), [`Error::Resource`] exits with 3, and every
/// other variant is a configuration or validation problem (exit 2).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("step support is empty")]
    EmptySupport,
    #[error("invalid step support: {0}")]
    InvalidSupport(String),
    #[error("normalization error: {0}")]
    Normalization(String),
    #[error("ellipticity error: {0}")]
    Ellipticity(String),
    #[error("walker seeds collide ({0})")]
    SeedCollision(u64),
    #[error("index {index} out of range for series of length {len}")]
    Index { index: usize, len: usize },
    #[error("resource cap exceeded: {what} needs {needed} entries, cap is {cap}")]
    Resource {
        what: &'static str,
        needed: u64,
        cap: u64,
    },
    #[error("displacement {0:?} is not an allowed step")]
    InvalidStep(Vec<i64>),
    #[error("target (level {level}, site {site:?}) is not reachable from the origin")]
    Unreachable { level: i64, site: Vec<i64> },
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("direction {0:?} has zero variance under the reference matrix")]
    DegenerateDirection(Vec<f64>),
    #[error("unknown observable `{0}`")]
    UnknownObservable(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
