use gppm_core::GppmError;
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config {path}: {message}")]
    Config { path: String, message: String },

    #[error("{0}")]
    Validation(String),

    #[error(transparent)]
    Core(#[from] GppmError),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn is_numerical(&self) -> bool {
        matches!(self, CliError::Core(e) if e.is_numerical())
    }

    pub fn exit_code(&self) -> i32 {
        if self.is_numerical() {
            3
        } else {
            2
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let kind = if self.is_numerical() { "numerical" } else { "validation" };
        let mut body = json!({ "kind": kind, "message": self.to_string() });
        if let CliError::Config { path, .. } = self {
            body["path"] = json!(path);
        }
        json!({ "error": body })
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
