use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// CSV content does not follow the recording format.
    #[error("format error in {path}, line {line}: {message}")]
    Format {
        path: PathBuf,
        line: u64,
        message: String,
    },

    /// Well-formed input carrying unusable values (NaN, inf, empty).
    #[error("data error: {0}")]
    Data(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("unit mismatch: manifest declares {found:?}, expected {expected:?}")]
    UnitMismatch { expected: String, found: String },

    #[error("manifest references {} missing file(s): {}", .0.len(), display_paths(.0))]
    MissingFiles(Vec<PathBuf>),

    #[error("dataset failed validation with {} violation(s); first: {}", .0.len(), .0.first().map(|v| v.to_string()).unwrap_or_default())]
    Invalid(Vec<crate::domain::Violation>),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A caller broke an input contract (shape, range, simplex).
    #[error("contract violated: {0}")]
    Contract(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("output directory {0} is not empty")]
    OutputExists(PathBuf),

    #[error("JSON error at {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

fn display_paths(paths: &[PathBuf]) -> String {
    paths
        .iter()
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
