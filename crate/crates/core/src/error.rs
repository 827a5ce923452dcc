use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid probability vector: {0}")]
    InvalidDistribution(String),

    #[error("classifiers are indistinguishable (r1 + r2 - 2 r12 = {denominator})")]
    IdenticalClassifiers { denominator: f64 },

    #[error("singular risk matrix: pivot {pivot_index} has magnitude {magnitude:e} below 1e-10")]
    SingularMatrix { pivot_index: usize, magnitude: f64 },

    #[error("condition violated: {0}")]
    ConditionViolation(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("{path}: bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic { path: PathBuf, found: u32, expected: u32 },

    #[error("{path}: truncated file ({detail})")]
    Truncated { path: PathBuf, detail: String },

    #[error("{images}: {image_count} images but {labels}: {label_count} labels")]
    CountMismatch {
        images: PathBuf,
        labels: PathBuf,
        image_count: usize,
        label_count: usize,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("epoch {epoch}, batch {batch}: {source}")]
    Training {
        epoch: usize,
        batch: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at(self, epoch: usize, batch: usize) -> Self {
        Error::Training {
            epoch,
            batch,
            source: Box::new(self),
        }
    }
}
