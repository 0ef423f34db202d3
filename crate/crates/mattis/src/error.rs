use std::path::PathBuf;

use serde_json::json;

/// Everything a run can fail with, each kind owning one exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] mattis_core::Error),
    #[error("acceptance check failed: {0}")]
    Acceptance(String),
}

pub type CliResult<T> = Result<T, CliError>;

pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const CAPABILITY: i32 = 3;
    pub const NON_CONVERGENCE: i32 = 4;
    pub const ACCEPTANCE: i32 = 5;
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use mattis_core::Error as E;
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Io { .. } => exit::IO,
            CliError::Core(e) => match e {
                E::Validation(_) | E::Config(_) => exit::CONFIG,
                E::Capability(_) | E::Capacity(_) => exit::CAPABILITY,
                E::NonConvergence { .. } | E::Numerical { .. } => exit::NON_CONVERGENCE,
            },
            CliError::Acceptance(_) => exit::ACCEPTANCE,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Core(e) => e.kind(),
            CliError::Acceptance(_) => "acceptance",
        }
    }

    /// Machine-readable form printed by `--error-json`.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        if let CliError::Core(
            mattis_core::Error::NonConvergence { trace, .. } | mattis_core::Error::Numerical { trace, .. },
        ) = self
        {
            let finite: Vec<serde_json::Value> = trace
                .iter()
                .map(|r| if r.is_finite() { json!(r) } else { json!(r.to_string()) })
                .collect();
            v["trace"] = serde_json::Value::Array(finite);
        }
        v
    }
}
