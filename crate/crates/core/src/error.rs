use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("column `{column}` has zero variance and cannot be standardised")]
    DegenerateColumn { column: String },

    #[error("parse error{}: {message}", location_suffix(*.row, .column.as_deref()))]
    Parse {
        row: Option<usize>,
        column: Option<String>,
        message: String,
    },

    #[error("template error: {0}")]
    Template(String),

    #[error("role expansion failed: {0}")]
    Expansion(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("no cached response for request {key}")]
    CacheMiss { key: String },

    #[error("could not parse a JSON object from the model reply: {raw:?}")]
    ElicitationParse { raw: String },

    #[error("elicited component rejected: {0}")]
    ComponentRejected(String),

    #[error("cannot construct prior: {0}")]
    Construction(String),

    #[error("non-finite log density at coordinate {coordinate}: {message}")]
    Numeric { coordinate: usize, message: String },

    #[error("sampler health check failed: {0}")]
    SamplerHealth(String),

    #[error("probe failed: {0}")]
    Probe(String),

    #[error("design matrix is rank deficient")]
    SingularDesign,

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn location_suffix(row: Option<usize>, column: Option<&str>) -> String {
    match (row, column) {
        (Some(r), Some(c)) => format!(" at row {r}, column `{c}`"),
        (Some(r), None) => format!(" at row {r}"),
        (None, Some(c)) => format!(" in column `{c}`"),
        (None, None) => String::new(),
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(message: impl Into<String>) -> Self {
        Error::Parse {
            row: None,
            column: None,
            message: message.into(),
        }
    }
}
