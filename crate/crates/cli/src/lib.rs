//! Command implementations and the HTTP service behind the `tokscope` binary.

pub mod error;
pub mod server;
pub mod source;
pub mod store;
pub mod stream;
pub mod stub_server;

use std::path::Path;

use tokscope_core::{
    reverse_words, AnalysisSession, BackendDescriptor, ComparisonReport, FlagThresholds, Report,
    TrigramStub,
};

use crate::error::Failure;
use crate::source::{session_from_backend, session_from_records};

/// Input of `analyze`.
#[derive(Clone, Debug)]
pub enum AnalyzeInput<'a> {
    Records {
        path: &'a Path,
        buffer: Option<&'a Path>,
    },
    Backend {
        backend: &'a BackendDescriptor,
        prompt: &'a str,
    },
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))
}

pub fn read_text(path: &Path) -> Result<String, Failure> {
    String::from_utf8(read(path)?)
        .map_err(|_| Failure::Input(format!("{} is not valid UTF-8", path.display())))
}

pub async fn analyze(
    label: &str,
    input: AnalyzeInput<'_>,
    thresholds: &FlagThresholds,
) -> Result<Report, Failure> {
    thresholds.validate()?;
    let session = match input {
        AnalyzeInput::Records { path, buffer } => {
            let records = read(path)?;
            let buffer = buffer.map(read).transpose()?;
            session_from_records(label, &records, buffer.as_deref())?
        }
        AnalyzeInput::Backend { backend, prompt } => {
            session_from_backend(label, backend, prompt).await?
        }
    };
    Ok(session.report(thresholds))
}

/// Scoring source for the reversal experiment.
#[derive(Clone, Copy, Debug)]
pub enum ReversalScorer<'a> {
    Backend(&'a BackendDescriptor),
    /// In-process full-logit stub.
    Stub(&'a TrigramStub),
}

pub const ORIGINAL_LABEL: &str = "original";
pub const REVERSED_LABEL: &str = "reversed";

/// Scores `text` and its word-reversed form and compares them.
pub async fn reversal(text: &str, scorer: ReversalScorer<'_>) -> Result<ComparisonReport, Failure> {
    let reversed = reverse_words(text);
    let score = |label: &'static str, text: String| async move {
        let session = match scorer {
            ReversalScorer::Backend(b) => session_from_backend(label, b, &text).await?,
            ReversalScorer::Stub(stub) => {
                let (d, t) = stub.score(&text)?;
                AnalysisSession::build(label, d, t)?.with_source_text(text)
            }
        };
        Ok::<_, Failure>(session)
    };
    let left = score(ORIGINAL_LABEL, text.to_string()).await?;
    let right = score(REVERSED_LABEL, reversed).await?;
    Ok(left.compare(&right))
}
