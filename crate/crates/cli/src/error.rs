use thiserror::Error;

/// A command failure, classified by exit code.
#[derive(Debug, Error)]
pub enum Failure {
    /// Unreadable or invalid input.
    #[error("{0}")]
    Input(String),
    /// The scoring backend failed or is unsupported.
    #[error("{0}")]
    Backend(String),
    /// The service could not start or stopped abnormally.
    #[error("{0}")]
    Service(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Input(_) => 2,
            Failure::Backend(_) => 3,
            Failure::Service(_) => 1,
        }
    }
}

impl From<tokscope_core::Error> for Failure {
    fn from(e: tokscope_core::Error) -> Self {
        if e.is_backend() {
            Failure::Backend(e.to_string())
        } else {
            Failure::Input(e.to_string())
        }
    }
}
