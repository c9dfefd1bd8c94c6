//! Error taxonomy of the runner and its exit codes.

use serde_json::{json, Value};
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CAPACITY: i32 = 3;
pub const EXIT_INDETERMINATE: i32 = 4;
pub const EXIT_INTERNAL: i32 = 5;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("config: {0}")]
    Config(String),

    /// A run that cannot fit; `suggestion` is a scaled-down config fragment.
    #[error("capacity: {message}")]
    Capacity { message: String, suggestion: Option<Value> },

    #[error("indeterminate: {0}")]
    Indeterminate(String),

    #[error("internal: {0}")]
    Internal(String),

    #[error(transparent)]
    Core(#[from] rwre_core::Error),
}

impl LabError {
    pub fn exit_code(&self) -> i32 {
        use rwre_core::Error as E;
        match self {
            LabError::Config(_) => EXIT_CONFIG,
            LabError::Capacity { .. } => EXIT_CAPACITY,
            LabError::Indeterminate(_) => EXIT_INDETERMINATE,
            LabError::Internal(_) => EXIT_INTERNAL,
            LabError::Core(e) => match e {
                E::InvalidParams(_) | E::Quantization(_) | E::Range(_) | E::Format(_) => EXIT_CONFIG,
                E::Capacity { .. } | E::ExcessiveCensoring { .. } => EXIT_CAPACITY,
                E::WindowUnderrun(_) | E::MissingChild(_) | E::Io(_) => EXIT_INTERNAL,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            EXIT_CONFIG => "config",
            EXIT_CAPACITY => "capacity",
            EXIT_INDETERMINATE => "indeterminate",
            _ => "internal",
        }
    }

    /// Machine-readable form printed on stderr.
    pub fn diagnostic(&self) -> Value {
        let mut v = json!({
            "status": "error",
            "exit_code": self.exit_code(),
            "kind": self.kind(),
            "message": self.to_string(),
        });
        if let LabError::Capacity { suggestion: Some(s), .. } = self {
            v["suggestion"] = s.clone();
        }
        v
    }
}

impl From<serde_json::Error> for LabError {
    fn from(e: serde_json::Error) -> Self {
        LabError::Config(e.to_string())
    }
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Internal(e.to_string())
    }
}

pub type LabResult<T> = std::result::Result<T, LabError>;
