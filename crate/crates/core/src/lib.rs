//! Token-level uncertainty metrics for language-model output.
//!
//! Distributions come in through [`ingestion`] (record files or a
//! completions endpoint), are grouped into an [`AnalysisSession`] whose
//! metric vectors are computed lazily, and can be streamed through a
//! [`MonitorState`] for drift detection.

pub mod corpus;
pub mod error;
pub mod ingestion;
pub mod metrics;
pub mod monitor;
pub mod session;
pub mod stub;

pub use error::{Error, Result};
pub use ingestion::{
    fetch_logprobs, lump_tail, parse_records, BackendDescriptor, LogitRecord, ParsedRecords,
    ScoredText,
};
pub use metrics::{
    distribution_entropy, distribution_skewentropy, distribution_varentropy, normalize_logits,
    sequence_perplexity, token_probability, token_surprisal, Coverage, MetricCache, MetricKind,
    TokenDistribution, TokenIds, TokenMetrics,
};
pub use monitor::{MonitorConfig, MonitorState, MonitorStatus, Signal};
pub use session::{
    reverse_words, AggregateStats, AnalysisSession, ComparisonReport, FlagThresholds, Report,
    SessionId,
};
pub use stub::TrigramStub;
