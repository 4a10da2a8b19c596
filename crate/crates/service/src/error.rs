use serde::Serialize;
use serde_json::{json, Value};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("session `{0}` not found")]
    NotFound(String),

    #[error("{field}: {message}")]
    InvalidConfig { field: String, message: String },

    #[error("count must be a nonnegative integer, got {0}")]
    NegativeCount(i64),

    #[error("no endpoint at `{0}`")]
    NoRoute(String),

    #[error("{0}")]
    BadRequest(String),

    #[error("storage: {0}")]
    Storage(String),

    #[error(transparent)]
    Core(#[from] seqdesign_core::Error),
}

pub type ServiceResult<T> = Result<T, ServiceError>;

/// JSON error body `{code, message, details}`.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub details: Value,
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        use seqdesign_core::Error as E;
        match self {
            ServiceError::NotFound(_) | ServiceError::NoRoute(_) => "not-found",
            ServiceError::InvalidConfig { .. } => "invalid-config",
            ServiceError::NegativeCount(_) => "negative-count",
            ServiceError::BadRequest(_) => "bad-request",
            ServiceError::Storage(_) => "storage-error",
            ServiceError::Core(e) => match e {
                E::WrongState(_) => "wrong-state",
                E::UnknownFilter(_) => "unknown-filter",
                E::InvalidConfig(_)
                | E::Parse(_)
                | E::DimensionMismatch { .. }
                | E::EmptyFilter(_)
                | E::GreedyNeedsTwoTemplates(_) => "invalid-config",
                E::Io(_) => "storage-error",
                _ => "compute-failed",
            },
        }
    }

    /// HTTP status code for the error.
    pub fn status(&self) -> u16 {
        match self.code() {
            "not-found" => 404,
            "wrong-state" => 409,
            "invalid-config" | "unknown-filter" => 422,
            "negative-count" | "bad-request" => 400,
            _ => 500,
        }
    }

    pub fn body(&self) -> ErrorBody {
        let details = match self {
            ServiceError::NotFound(id) => json!({ "id": id }),
            ServiceError::InvalidConfig { field, .. } => json!({ "field": field }),
            ServiceError::NegativeCount(c) => json!({ "count": c }),
            ServiceError::Core(seqdesign_core::Error::UnknownFilter(id)) => json!({ "filter_id": id }),
            _ => Value::Null,
        };
        ErrorBody {
            code: self.code().to_string(),
            message: self.to_string(),
            details,
        }
    }
}

impl From<std::io::Error> for ServiceError {
    fn from(e: std::io::Error) -> Self {
        ServiceError::Storage(e.to_string())
    }
}
