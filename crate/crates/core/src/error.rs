use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("sequence shorter than kernel: length {len}, kernel footprint {kernel}")]
    SequenceTooShort { len: usize, kernel: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("payload size mismatch for {what}: expected {expected} bytes, found {actual}")]
    PayloadSize {
        what: String,
        expected: usize,
        actual: usize,
    },

    #[error("missing gradient for parameter `{0}`")]
    MissingGradient(String),

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error("loss function is not deterministic: {first:e} then {second:e} at the same point")]
    NonDeterministic { first: f64, second: f64 },

    #[error("{field} out of range: {value} (expected {bounds})")]
    Range {
        field: String,
        value: String,
        bounds: String,
    },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn range(field: &str, value: impl ToString, bounds: &str) -> Self {
        Error::Range {
            field: field.to_string(),
            value: value.to_string(),
            bounds: bounds.to_string(),
        }
    }
}
