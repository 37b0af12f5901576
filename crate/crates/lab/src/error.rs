use std::fmt;
use std::path::PathBuf;

/// Every problem found while reading a config, reported together.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct ConfigError {
    pub unknown: Vec<String>,
    pub missing: Vec<String>,
    pub invalid: Vec<String>,
}

impl ConfigError {
    pub fn is_empty(&self) -> bool {
        self.unknown.is_empty() && self.missing.is_empty() && self.invalid.is_empty()
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        ConfigError { invalid: vec![msg.into()], ..Default::default() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if !self.unknown.is_empty() {
            parts.push(format!("unknown keys: {}", self.unknown.join(", ")));
        }
        if !self.missing.is_empty() {
            parts.push(format!("missing required keys: {}", self.missing.join(", ")));
        }
        parts.extend(self.invalid.iter().cloned());
        write!(f, "{}", parts.join("; "))
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error(transparent)]
    Core(#[from] condlab_core::Error),
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("json output: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Usage(String),
}

impl LabError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
