//! Line-delimited logit records.
//!
//! One JSON object per line, one line per token position:
//!
//! ```text
//! {"pos":0,"token_id":17,"token":"We","logits":[1.5,-0.25,...]}
//! {"pos":1,"token_id":4,"token":" hold","top_logprobs":[[4,-0.1],[9,-2.7]]}
//! {"pos":2,"token_id":8,"token":" these","logits_ref":{"offset":0,"len":49152}}
//! ```
//!
//! `logits` is indexed by token id. `top_logprobs` lists `(id, logprob)`
//! pairs in non-increasing logprob order; unobserved mass is lumped into a
//! tail entry. `logits_ref` points at `len` little-endian `f32` scores
//! starting at byte `offset` of a side buffer supplied by the caller.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::lump::lump_tail;
use crate::error::{Error, Result};
use crate::metrics::{logsumexp, normalize_logits, TokenDistribution, TokenIds};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogitRecord {
    pub pos: usize,
    pub token_id: u32,
    pub token: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logits: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_logprobs: Option<Vec<(u32, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logits_ref: Option<BufferRef>,
}

/// Location of a logit vector inside an external `f32` buffer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BufferRef {
    pub offset: usize,
    pub len: usize,
}

impl LogitRecord {
    /// Converts the record into a distribution positioned at `pos`.
    pub fn to_distribution(&self, buffer: Option<&[u8]>) -> Result<TokenDistribution> {
        let payloads = self.logits.is_some() as u8
            + self.top_logprobs.is_some() as u8
            + self.logits_ref.is_some() as u8;
        if payloads != 1 {
            return Err(Error::InvalidDistribution(
                "record needs exactly one of `logits`, `top_logprobs`, `logits_ref`".into(),
            ));
        }
        let dist = if let Some(logits) = &self.logits {
            full_logits(logits.clone(), self.token_id)?
        } else if let Some(r) = self.logits_ref {
            let buffer = buffer.ok_or_else(|| {
                Error::InvalidDistribution("`logits_ref` used without a logits buffer".into())
            })?;
            full_logits(read_f32s(buffer, r)?, self.token_id)?
        } else {
            let topk = self.top_logprobs.as_deref().unwrap_or_default();
            if let Some(w) = topk.windows(2).find(|w| w[1].1 > w[0].1) {
                return Err(Error::InvalidDistribution(format!(
                    "top_logprobs not in non-increasing order ({} then {})",
                    w[0].1, w[1].1
                )));
            }
            lump_tail(topk, self.token_id)?
        };
        Ok(dist.with_position(self.pos))
    }

    /// Serializes a distribution back into record form.
    ///
    /// Distributions that kept their raw scores are written as `logits`;
    /// everything else is written as observed `top_logprobs`, leaving any
    /// lumped tail to be rebuilt on read.
    pub fn from_distribution(d: &TokenDistribution, token: &str) -> Self {
        let mut record = LogitRecord {
            pos: d.position(),
            token_id: d.selected_token_id(),
            token: token.to_string(),
            logits: None,
            top_logprobs: None,
            logits_ref: None,
        };
        match (d.raw_logits(), d.token_ids()) {
            (Some(raw), TokenIds::Dense(_)) => record.logits = Some(raw.to_vec()),
            (_, ids) => {
                let tail = d.tail_index();
                let mut pairs: Vec<(u32, f64)> = d
                    .log_probs()
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| Some(*i) != tail)
                    .map(|(i, &lp)| (ids.get(i).expect("aligned ids"), lp))
                    .collect();
                pairs.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                record.top_logprobs = Some(pairs);
            }
        }
        record
    }
}

fn full_logits(logits: Vec<f64>, token_id: u32) -> Result<TokenDistribution> {
    if token_id as usize >= logits.len() {
        return Err(Error::SelectionMissing {
            token_id,
            line: None,
        });
    }
    normalize_logits(logits, token_id as usize)
}

fn read_f32s(buffer: &[u8], r: BufferRef) -> Result<Vec<f64>> {
    let end = r
        .len
        .checked_mul(4)
        .and_then(|n| n.checked_add(r.offset))
        .filter(|&end| end <= buffer.len())
        .ok_or_else(|| {
            Error::InvalidDistribution(format!(
                "logits_ref {}+{} floats exceeds buffer of {} bytes",
                r.offset,
                r.len,
                buffer.len()
            ))
        })?;
    Ok(buffer[r.offset..end]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect())
}

/// Streaming reader yielding `(line number, record)` pairs.
///
/// Blank lines are skipped. Malformed lines, including a truncated final
/// line, surface as [`Error::Parse`] carrying their 1-based line number.
pub struct RecordReader<R> {
    inner: R,
    line: usize,
    buf: Vec<u8>,
}

impl<R: BufRead> RecordReader<R> {
    pub fn new(inner: R) -> Self {
        Self {
            inner,
            line: 0,
            buf: Vec::new(),
        }
    }
}

impl<R: BufRead> Iterator for RecordReader<R> {
    type Item = Result<(usize, LogitRecord)>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.inner.read_until(b'\n', &mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e.into())),
            }
            self.line += 1;
            let line = self.line;
            let text = match std::str::from_utf8(&self.buf) {
                Ok(t) => t.trim(),
                Err(e) => {
                    return Some(Err(Error::Parse {
                        line,
                        message: format!("invalid UTF-8: {e}"),
                    }))
                }
            };
            if text.is_empty() {
                continue;
            }
            return Some(
                serde_json::from_str::<LogitRecord>(text)
                    .map(|r| (line, r))
                    .map_err(|e| Error::Parse {
                        line,
                        message: e.to_string(),
                    }),
            );
        }
    }
}

/// Distributions and token texts read from a record stream.
#[derive(Clone, Debug, Default)]
pub struct ParsedRecords {
    pub distributions: Vec<TokenDistribution>,
    pub texts: Vec<String>,
}

/// Parses a whole record stream into an ordered sequence.
pub fn parse_records(input: impl BufRead) -> Result<ParsedRecords> {
    parse_records_with_buffer(input, None)
}

/// As [`parse_records`], resolving `logits_ref` payloads against `buffer`.
pub fn parse_records_with_buffer(
    input: impl BufRead,
    buffer: Option<&[u8]>,
) -> Result<ParsedRecords> {
    let mut out = ParsedRecords::default();
    for item in RecordReader::new(input) {
        let (line, record) = item?;
        let expected = out.distributions.len();
        if record.pos != expected {
            return Err(Error::SequenceGap {
                line,
                expected,
                found: record.pos,
            });
        }
        if let Some(topk) = &record.top_logprobs {
            let lps: Vec<f64> = topk.iter().map(|p| p.1).collect();
            let total = logsumexp(&lps);
            if total > super::lump::MASS_TOLERANCE {
                return Err(Error::MassOverflow {
                    mass: total.exp(),
                    line: Some(line),
                });
            }
        }
        let dist = record
            .to_distribution(buffer)
            .map_err(|e| e.with_line(line))?;
        out.distributions.push(dist);
        out.texts.push(record.token);
    }
    Ok(out)
}

/// Writes one record per distribution.
pub fn write_records(
    mut out: impl Write,
    distributions: &[TokenDistribution],
    texts: &[String],
) -> Result<()> {
    if distributions.len() != texts.len() {
        return Err(Error::Alignment {
            distributions: distributions.len(),
            texts: texts.len(),
        });
    }
    for (d, t) in distributions.iter().zip(texts) {
        let record = LogitRecord::from_distribution(d, t);
        serde_json::to_writer(&mut out, &record).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
