use std::fmt;

use crate::config::ConfigError;

/// Why a command failed; decides the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Exit 2.
    Config(ConfigError),
    /// Exit 1.
    Runtime(anyhow::Error),
    /// Exit 3; names the failed audit checks.
    Audit(Vec<String>),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Config(_) => 2,
            Failure::Audit(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "{e}"),
            Failure::Runtime(e) => write!(f, "{e:#}"),
            Failure::Audit(names) => write!(f, "audit failed: {}", names.join(", ")),
        }
    }
}

impl std::error::Error for Failure {}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

/// Core config errors become config failures; everything else is a runtime failure.
impl From<adabatch_core::Error> for Failure {
    fn from(e: adabatch_core::Error) -> Self {
        match e {
            adabatch_core::Error::Config(m) => Failure::Config(ConfigError::unlocated(m)),
            other => Failure::Runtime(other.into()),
        }
    }
}
