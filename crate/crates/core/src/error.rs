use std::path::PathBuf;

/// Errors produced by the engine, model zoo, data pipeline and evaluation code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor shapes do not line up for an operation.
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    /// A caller broke an operation contract (non-scalar loss, missing gradient, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Invalid configuration value.
    #[error("config error: {0}")]
    Config(String),

    /// Target label outside {0, 1}.
    #[error("label error: {0}")]
    Label(String),

    /// Batchnorm used in inference mode before any training step populated its statistics.
    #[error("batchnorm layer `{0}` has no running statistics yet")]
    UninitializedStats(String),

    /// NaN or infinity surfaced in a forward or backward pass.
    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    /// Training stopped because the loss became non-finite.
    #[error("training aborted at epoch {epoch}, step {step}: {detail}")]
    NumericalAbort { epoch: usize, step: usize, detail: String },

    /// Weight file does not match the model it is loaded into.
    #[error("load error for layer `{layer}`: {detail}")]
    Load { layer: String, detail: String },

    /// Container bytes are damaged (checksum mismatch, truncation).
    #[error("corrupted container: {0}")]
    Corruption(String),

    /// Container is of an unknown format or version.
    #[error("format error: {0}")]
    Format(String),

    /// Dataset directory does not follow the expected layout.
    #[error("layout error at {path}: {detail}")]
    Layout { path: PathBuf, detail: String },

    /// A class that must contain images is empty.
    #[error("class `{0}` has no images")]
    EmptyClass(String),

    /// Image bytes could not be decoded.
    #[error("cannot decode {path}: {detail}")]
    Decode { path: PathBuf, detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
