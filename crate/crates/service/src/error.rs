use pedafeed_core::error::{AgentError, PipelineError};
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("provider error: {0}")]
    Provider(String),
    #[error("data error: {0}")]
    Data(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl ServiceError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ServiceError::Config(_) => 2,
            ServiceError::Provider(_) => 3,
            ServiceError::Pipeline(PipelineError::Agent(AgentError::Gateway(_) | AgentError::Parse(_))) => 3,
            ServiceError::Data(_) | ServiceError::Pipeline(_) | ServiceError::Io(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self.exit_code() {
            2 => "config",
            3 => "provider",
            _ => "data",
        }
    }

    /// Machine-readable form written to stderr by the CLI.
    pub fn to_json(&self) -> serde_json::Value {
        let mut value = json!({ "error": self.kind(), "message": self.to_string(), "exit_code": self.exit_code() });
        if let ServiceError::Config(problems) = self {
            value["problems"] = json!(problems);
        }
        value
    }
}
