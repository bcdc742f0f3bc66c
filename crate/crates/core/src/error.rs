use std::path::PathBuf;

/// Errors produced by the simulator library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("base station {0} not found")]
    NotFound(u32),
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("traffic trace is empty")]
    EmptyTrace,
    #[error("size error: {0}")]
    Size(String),
    #[error("estimation error: {0}")]
    Estimation(String),
    #[error("non-finite value in LSTM {gate} gate")]
    Numeric { gate: &'static str },
    #[error("training diverged at epoch {epoch}; last finite loss {last_finite:?} at epoch {last_epoch:?}")]
    Divergence {
        epoch: usize,
        last_epoch: Option<usize>,
        last_finite: Option<f64>,
    },
    #[error(
        "{searchable} searchable SBSs exceed the exhaustive-search cap of {cap}; \
         use a smaller instance, a lower gamma, or raise `search_cap`"
    )]
    SearchCap { searchable: usize, cap: usize },
    #[error("invalid configuration: {field}: {msg}")]
    Config { field: String, msg: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
