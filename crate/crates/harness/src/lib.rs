//! Experiment harness for the barrier-rl crate: configuration and
//! presets, deterministic seeded runners with CSV metrics, and the
//! verification suite behind `barrier-rl verify`.

pub mod checks;
pub mod config;
pub mod experiments;
pub mod metrics;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("run error: {0}")]
    Run(String),
}

impl HarnessError {
    /// Machine-readable error record for the CLI's nonzero exits.
    pub fn to_json(&self) -> serde_json::Value {
        let kind = match self {
            HarnessError::Config(_) => "config",
            HarnessError::Io(_) => "io",
            HarnessError::Run(_) => "run",
        };
        serde_json::json!({ "error": kind, "message": self.to_string() })
    }
}
