use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Validation(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("size limit exceeded: {0}")]
    Size(String),

    #[error("clustering is not balanced (cluster sizes range from {min} to {max}); rebalance it before analysis")]
    Unbalanced { min: usize, max: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("enumeration needs {required} outcomes, above the cap of {cap}")]
    EnumerationCap { required: u128, cap: u128 },

    #[error("stratum {stratum}: {source}")]
    Stratum {
        stratum: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn validation(message: impl Into<String>) -> Self {
        Error::Validation(message.into())
    }

    /// Tags the error with the stratum it arose in.
    pub fn in_stratum(self, stratum: usize) -> Self {
        Error::Stratum {
            stratum,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
