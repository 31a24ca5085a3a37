use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("label error: {0}")]
    Label(String),

    #[error("contract error: {0}")]
    Contract(String),

    #[error("optimizer error: parameter `{0}` has no gradient")]
    MissingGrad(String),

    #[error("parse error in sentence `{sent_id}`, field `{field}`: {message}")]
    Parse {
        sent_id: String,
        field: String,
        message: String,
    },

    #[error("invalid dependency tree in sentence `{sent_id}`: {message}")]
    Tree { sent_id: String, message: String },

    #[error("alignment error in sentence `{sent_id}`: {message}")]
    Alignment { sent_id: String, message: String },

    #[error("embedding bank has no entry for sentence `{0}`")]
    Coverage(String),

    #[error("span error: {0}")]
    Span(String),

    #[error("training diverged at epoch {epoch}, step {step}: loss {loss}")]
    Divergence {
        epoch: usize,
        step: usize,
        loss: f64,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}
