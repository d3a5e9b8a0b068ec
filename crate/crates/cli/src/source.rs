//! Building sessions from record payloads or a scoring backend.

use tokscope_core::ingestion::{fetch_logprobs, parse_records_with_buffer};
use tokscope_core::{AnalysisSession, BackendDescriptor, Result};

/// Label given to sessions built from records when none is supplied.
pub const DEFAULT_RECORDS_LABEL: &str = "records";
/// Label given to sessions scored from a prompt when none is supplied.
pub const DEFAULT_PROMPT_LABEL: &str = "prompt";

pub fn session_from_records(
    label: &str,
    records: &[u8],
    buffer: Option<&[u8]>,
) -> Result<AnalysisSession> {
    let parsed = parse_records_with_buffer(records, buffer)?;
    AnalysisSession::build(label, parsed.distributions, parsed.texts)
}

pub async fn session_from_backend(
    label: &str,
    backend: &BackendDescriptor,
    prompt: &str,
) -> Result<AnalysisSession> {
    let scored = fetch_logprobs(backend, prompt).await?;
    Ok(
        AnalysisSession::build(label, scored.distributions, scored.texts)?
            .with_source_text(prompt)
            .with_vocabulary(scored.vocabulary),
    )
}
