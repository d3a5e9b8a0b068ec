//! A deterministic word-level language model used as a stand-in backend.
//!
//! The model is a smoothed trigram counter over a training text. Tokens are
//! words with their leading whitespace attached, so the token texts of a
//! scored prompt concatenate back to the prompt. Every word of the training
//! text is in the vocabulary both bare and with a leading space; anything
//! else maps to `<unk>`.
//!
//! Logits at each position depend on the two previous token ids:
//!
//! * trigram context seen in training: `ln(count + 1e-3)`
//! * otherwise, previous token seen: `ln(bigram count + 0.05)`
//! * otherwise: `ln(unigram count + 1)`

use std::collections::HashMap;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::ingestion::LogitRecord;
use crate::metrics::{normalize_logits, TokenDistribution};

pub const UNKNOWN_TOKEN: &str = "<unk>";

const BOS: u32 = u32::MAX;
const TRIGRAM_SMOOTHING: f64 = 1e-3;
const BIGRAM_SMOOTHING: f64 = 0.05;
const UNIGRAM_SMOOTHING: f64 = 1.0;

/// One token of a segmented text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Piece {
    pub id: u32,
    /// Exact slice of the input, including leading whitespace.
    pub text: String,
    /// Offset of `text` in the input, in chars.
    pub char_offset: usize,
}

#[derive(Clone, Debug)]
pub struct TrigramStub {
    vocabulary: Vec<String>,
    ids: HashMap<String, u32>,
    unigram: Vec<u32>,
    bigram: HashMap<u32, HashMap<u32, u32>>,
    trigram: HashMap<(u32, u32), HashMap<u32, u32>>,
}

impl TrigramStub {
    pub fn train(corpus: &str) -> Self {
        let mut vocabulary = vec![UNKNOWN_TOKEN.to_string()];
        let mut ids = HashMap::new();
        ids.insert(UNKNOWN_TOKEN.to_string(), 0);
        for word in corpus.split_whitespace() {
            for form in [word.to_string(), format!(" {word}")] {
                if !ids.contains_key(&form) {
                    ids.insert(form.clone(), vocabulary.len() as u32);
                    vocabulary.push(form);
                }
            }
        }
        let mut stub = TrigramStub {
            unigram: vec![0; vocabulary.len()],
            vocabulary,
            ids,
            bigram: HashMap::new(),
            trigram: HashMap::new(),
        };
        let (mut prev2, mut prev1) = (BOS, BOS);
        for piece in stub.segment(corpus) {
            stub.unigram[piece.id as usize] += 1;
            *stub
                .bigram
                .entry(prev1)
                .or_default()
                .entry(piece.id)
                .or_default() += 1;
            *stub
                .trigram
                .entry((prev2, prev1))
                .or_default()
                .entry(piece.id)
                .or_default() += 1;
            (prev2, prev1) = (prev1, piece.id);
        }
        stub
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn vocabulary_size(&self) -> usize {
        self.vocabulary.len()
    }

    /// Splits `text` into whitespace-prefixed words. Trailing whitespace is
    /// attached to the last piece.
    pub fn segment(&self, text: &str) -> Vec<Piece> {
        let mut pieces: Vec<Piece> = Vec::new();
        let mut start = 0;
        let mut start_char = 0;
        let mut in_word = false;
        let mut word_start = 0;
        for (chars, (byte, c)) in text.char_indices().enumerate() {
            if c.is_whitespace() {
                if in_word {
                    pieces.push(self.piece(text, start, word_start, byte, start_char));
                    start = byte;
                    start_char = chars;
                    in_word = false;
                }
            } else if !in_word {
                in_word = true;
                word_start = byte;
            }
        }
        if in_word {
            pieces.push(self.piece(text, start, word_start, text.len(), start_char));
        } else if let Some(last) = pieces.last_mut() {
            last.text.push_str(&text[start..]);
        }
        pieces
    }

    fn piece(
        &self,
        text: &str,
        start: usize,
        word_start: usize,
        end: usize,
        char_offset: usize,
    ) -> Piece {
        let word = &text[word_start..end];
        let key = if word_start > start {
            format!(" {word}")
        } else {
            word.to_string()
        };
        Piece {
            id: self.ids.get(&key).copied().unwrap_or(0),
            text: text[start..end].to_string(),
            char_offset,
        }
    }

    /// Logits over the whole vocabulary after the context `(prev2, prev1)`;
    /// `None` stands for the start of the text.
    pub fn logits(&self, prev2: Option<u32>, prev1: Option<u32>) -> Vec<f64> {
        let (prev2, prev1) = (prev2.unwrap_or(BOS), prev1.unwrap_or(BOS));
        let n = self.vocabulary.len();
        if let Some(counts) = self.trigram.get(&(prev2, prev1)) {
            return smoothed(n, counts, TRIGRAM_SMOOTHING);
        }
        if let Some(counts) = self.bigram.get(&prev1) {
            return smoothed(n, counts, BIGRAM_SMOOTHING);
        }
        self.unigram
            .iter()
            .map(|&c| (c as f64 + UNIGRAM_SMOOTHING).ln())
            .collect()
    }

    fn contexts(pieces: &[Piece]) -> impl Iterator<Item = (Option<u32>, Option<u32>)> + '_ {
        (0..pieces.len()).map(|i| {
            let prev = |back: usize| i.checked_sub(back).map(|j| pieces[j].id);
            (prev(2), prev(1))
        })
    }

    /// Full-logit records for `text`, one per piece, scored from the start
    /// of the text.
    pub fn records(&self, text: &str) -> Vec<LogitRecord> {
        let pieces = self.segment(text);
        Self::contexts(&pieces)
            .zip(&pieces)
            .enumerate()
            .map(|(pos, ((p2, p1), piece))| LogitRecord {
                pos,
                token_id: piece.id,
                token: piece.text.clone(),
                logits: Some(self.logits(p2, p1)),
                top_logprobs: None,
                logits_ref: None,
            })
            .collect()
    }

    /// Distributions and token texts for `text`.
    pub fn score(&self, text: &str) -> Result<(Vec<TokenDistribution>, Vec<String>)> {
        let pieces = self.segment(text);
        if pieces.is_empty() {
            return Err(Error::EmptySequence);
        }
        let distributions = Self::contexts(&pieces)
            .zip(&pieces)
            .enumerate()
            .map(|(pos, ((p2, p1), piece))| {
                normalize_logits(self.logits(p2, p1), piece.id as usize)
                    .map(|d| d.with_position(pos))
            })
            .collect::<Result<_>>()?;
        Ok((distributions, pieces.into_iter().map(|p| p.text).collect()))
    }

    /// A completions-style response echoing `prompt` with the `top_k` most
    /// probable alternatives per position. Token strings are `token_id:N`.
    pub fn completion_json(&self, model: &str, prompt: &str, top_k: usize) -> Value {
        let pieces = self.segment(prompt);
        let mut tokens = Vec::new();
        let mut token_logprobs = Vec::new();
        let mut top_logprobs = Vec::new();
        let mut offsets = Vec::new();
        for ((p2, p1), piece) in Self::contexts(&pieces).zip(&pieces) {
            let d = normalize_logits(self.logits(p2, p1), piece.id as usize)
                .expect("stub logits are finite");
            let lp = d.log_probs();
            let mut order: Vec<usize> = (0..lp.len()).collect();
            order.sort_by(|&a, &b| lp[b].total_cmp(&lp[a]).then(a.cmp(&b)));
            let top: serde_json::Map<String, Value> = order
                .into_iter()
                .take(top_k)
                .map(|i| (format!("token_id:{i}"), json!(lp[i])))
                .collect();
            tokens.push(json!(format!("token_id:{}", piece.id)));
            token_logprobs.push(json!(d.selected_log_prob()));
            top_logprobs.push(Value::Object(top));
            offsets.push(json!(piece.char_offset));
        }
        json!({
            "object": "text_completion",
            "model": model,
            "choices": [{
                "index": 0,
                "text": prompt,
                "finish_reason": "length",
                "logprobs": {
                    "tokens": tokens,
                    "token_logprobs": token_logprobs,
                    "top_logprobs": top_logprobs,
                    "text_offset": offsets,
                },
            }],
        })
    }
}

fn smoothed(n: usize, counts: &HashMap<u32, u32>, smoothing: f64) -> Vec<f64> {
    let mut logits = vec![smoothing.ln(); n];
    for (&id, &c) in counts {
        logits[id as usize] = (c as f64 + smoothing).ln();
    }
    logits
}
