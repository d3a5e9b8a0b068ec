//! Turning external logit and logprob sources into validated distributions.

mod backend;
mod lump;
mod records;

pub use backend::{fetch_logprobs, parse_completion_response, BackendDescriptor, ScoredText};
pub use lump::{lump_tail, MASS_TOLERANCE, MIN_TAIL_MASS};
pub use records::{
    parse_records, parse_records_with_buffer, write_records, BufferRef, LogitRecord, ParsedRecords,
    RecordReader,
};
