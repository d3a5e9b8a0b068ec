use thiserror::Error;

/// Errors produced by the analysis engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("logit at index {index} is not finite ({value})")]
    InvalidLogits { index: usize, value: f64 },

    #[error("distribution has empty support")]
    EmptySupport,

    #[error("sequence is empty")]
    EmptySequence,

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: expected position {expected}, found {found}")]
    SequenceGap {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("selected token {token_id} is absent from the support{}", at_line(*.line))]
    SelectionMissing { token_id: u32, line: Option<usize> },

    #[error("top-k probability mass {mass} exceeds 1{}", at_line(*.line))]
    MassOverflow { mass: f64, line: Option<usize> },

    #[error("backend request timed out after {attempts} attempt(s)")]
    BackendTimeout { attempts: u32 },

    #[error("backend returned HTTP {status}: {fragment}")]
    Backend { status: u16, fragment: String },

    #[error("backend transport failure: {0}")]
    Transport(String),

    #[error("backend does not return prompt logprobs: {fragment}")]
    UnsupportedBackend { fragment: String },

    #[error("{distributions} distributions but {texts} token texts")]
    Alignment { distributions: usize, texts: usize },

    #[error("monitor window is empty")]
    NoData,

    #[error("no baseline has been frozen")]
    NoBaseline,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown metric kind `{0}`")]
    UnknownMetric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn at_line(line: Option<usize>) -> String {
    match line {
        Some(l) => format!(" (line {l})"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn with_line(self, line: usize) -> Self {
        match self {
            Error::SelectionMissing { token_id, .. } => Error::SelectionMissing {
                token_id,
                line: Some(line),
            },
            Error::MassOverflow { mass, .. } => Error::MassOverflow {
                mass,
                line: Some(line),
            },
            Error::InvalidLogits { .. } | Error::EmptySupport | Error::InvalidDistribution(_) => {
                Error::Parse {
                    line,
                    message: self.to_string(),
                }
            }
            other => other,
        }
    }

    /// True for failures that originate at the scoring backend.
    pub fn is_backend(&self) -> bool {
        matches!(
            self,
            Error::BackendTimeout { .. }
                | Error::Backend { .. }
                | Error::Transport(_)
                | Error::UnsupportedBackend { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
