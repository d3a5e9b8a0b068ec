//! Analyzed sequences and everything derived from them.

mod report;
mod stats;
mod text;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::SystemTime;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{sequence_perplexity, MetricCache, MetricKind, TokenDistribution};

pub use report::{
    color_map, ComparisonReport, ComparisonRow, FlagThresholds, FlaggedToken, Report, ScatterPoint,
};
pub use stats::{median, AggregateStats, Summary};
pub use text::{character_count, reverse_words};

/// Opaque random 128-bit session identifier, shown as 32 hex digits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SessionId(u128);

impl SessionId {
    pub fn random() -> Self {
        SessionId(rand::random())
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}

impl FromStr for SessionId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.len() != 32 {
            return Err(Error::Config(format!("malformed session id `{s}`")));
        }
        u128::from_str_radix(s, 16)
            .map(SessionId)
            .map_err(|_| Error::Config(format!("malformed session id `{s}`")))
    }
}

impl Serialize for SessionId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SessionId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One alternative at a token position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alternative {
    pub token_id: u32,
    /// Token text, when known.
    pub token: Option<String>,
    pub probability: f64,
    pub logprob: f64,
}

/// Highest-probability alternatives at one position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopAlternatives {
    pub position: usize,
    pub selected_token_id: u32,
    pub token: String,
    /// Sorted by non-increasing probability.
    pub alternatives: Vec<Alternative>,
    /// Residual mass of a lumped distribution.
    pub tail_probability: Option<f64>,
}

/// An analyzed sequence: its distributions, token texts and lazily computed
/// metric vectors.
#[derive(Debug)]
pub struct AnalysisSession {
    id: SessionId,
    label: String,
    distributions: Arc<[TokenDistribution]>,
    texts: Vec<String>,
    source_text: String,
    vocabulary: HashMap<u32, String>,
    cache: MetricCache,
    created_at: SystemTime,
}

impl AnalysisSession {
    /// Assembles a session. No metric is computed until first read.
    ///
    /// The source text defaults to the concatenated token texts.
    pub fn build(
        label: impl Into<String>,
        distributions: Vec<TokenDistribution>,
        texts: Vec<String>,
    ) -> Result<Self> {
        if distributions.len() != texts.len() {
            return Err(Error::Alignment {
                distributions: distributions.len(),
                texts: texts.len(),
            });
        }
        if distributions.is_empty() {
            return Err(Error::EmptySequence);
        }
        let vocabulary = distributions
            .iter()
            .zip(&texts)
            .map(|(d, t)| (d.selected_token_id(), t.clone()))
            .collect();
        Ok(AnalysisSession {
            id: SessionId::random(),
            label: label.into(),
            source_text: texts.concat(),
            distributions: distributions.into(),
            texts,
            vocabulary,
            cache: MetricCache::new(),
            created_at: SystemTime::now(),
        })
    }

    /// Overrides the text used for the character count.
    pub fn with_source_text(mut self, text: impl Into<String>) -> Self {
        self.source_text = text.into();
        self
    }

    /// Adds token texts for alternative ids.
    pub fn with_vocabulary(mut self, vocabulary: HashMap<u32, String>) -> Self {
        for (id, text) in vocabulary {
            self.vocabulary.entry(id).or_insert(text);
        }
        self
    }

    pub fn id(&self) -> SessionId {
        self.id
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.distributions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distributions.is_empty()
    }

    pub fn distributions(&self) -> &[TokenDistribution] {
        &self.distributions
    }

    pub fn texts(&self) -> &[String] {
        &self.texts
    }

    pub fn source_text(&self) -> &str {
        &self.source_text
    }

    pub fn created_at(&self) -> SystemTime {
        self.created_at
    }

    pub fn cache(&self) -> &MetricCache {
        &self.cache
    }

    /// Per-position values of `kind`, computed on first access.
    pub fn metric(&self, kind: MetricKind) -> Arc<[f64]> {
        self.cache.get(kind, &self.distributions)
    }

    pub fn aggregate(&self) -> AggregateStats {
        let metrics: BTreeMap<MetricKind, Summary> = MetricKind::ALL
            .into_iter()
            .map(|k| {
                (
                    k,
                    Summary::of(&self.metric(k)).expect("session is non-empty"),
                )
            })
            .collect();
        let surprisal = self.metric(MetricKind::Surprisal);
        AggregateStats {
            tokens: self.len(),
            characters: character_count(&self.source_text),
            perplexity: sequence_perplexity(&surprisal).expect("session is non-empty"),
            mean_log_probability: -metrics[&MetricKind::Surprisal].mean,
            metrics,
        }
    }

    /// One (entropy, varentropy, position, token) point per position.
    pub fn scatter(&self) -> Vec<ScatterPoint> {
        let entropy = self.metric(MetricKind::Entropy);
        let varentropy = self.metric(MetricKind::Varentropy);
        self.texts
            .iter()
            .enumerate()
            .map(|(i, t)| ScatterPoint {
                entropy: entropy[i],
                varentropy: varentropy[i],
                position: i,
                token: t.clone(),
            })
            .collect()
    }

    /// Positions where surprisal, entropy or varentropy strictly exceed
    /// their thresholds.
    pub fn flag_tokens(&self, thresholds: &FlagThresholds) -> Vec<FlaggedToken> {
        let checks = [
            (MetricKind::Surprisal, thresholds.surprisal),
            (MetricKind::Entropy, thresholds.entropy),
            (MetricKind::Varentropy, thresholds.varentropy),
        ];
        let vectors: Vec<(MetricKind, f64, Arc<[f64]>)> = checks
            .into_iter()
            .map(|(k, t)| (k, t, self.metric(k)))
            .collect();
        (0..self.len())
            .filter_map(|i| {
                let kinds: Vec<MetricKind> = vectors
                    .iter()
                    .filter(|(_, t, v)| v[i] > *t)
                    .map(|(k, _, _)| *k)
                    .collect();
                (!kinds.is_empty()).then_some(FlaggedToken { position: i, kinds })
            })
            .collect()
    }

    /// Heatmap intensities in `[0, 1]` for `kind`.
    pub fn intensities(&self, kind: MetricKind) -> Vec<f64> {
        color_map(&self.metric(kind))
    }

    /// Up to `k` most probable explicit entries at `position`; `None` when
    /// the position is out of range.
    pub fn top_alternatives(&self, position: usize, k: usize) -> Option<TopAlternatives> {
        let d = self.distributions.get(position)?;
        let lp = d.log_probs();
        let tail = d.tail_index();
        let mut order: Vec<usize> = (0..lp.len()).filter(|&i| Some(i) != tail).collect();
        let by_prob = |a: &usize, b: &usize| lp[*b].total_cmp(&lp[*a]).then(a.cmp(b));
        let k = k.min(order.len());
        if k > 0 && k < order.len() {
            order.select_nth_unstable_by(k - 1, by_prob);
            order.truncate(k);
        }
        order.sort_by(by_prob);
        order.truncate(k);
        let ids = d.token_ids();
        let alternatives = order
            .into_iter()
            .map(|i| {
                let token_id = ids.get(i).expect("aligned ids");
                Alternative {
                    token_id,
                    token: self.vocabulary.get(&token_id).cloned(),
                    probability: lp[i].exp(),
                    logprob: lp[i],
                }
            })
            .collect();
        Some(TopAlternatives {
            position,
            selected_token_id: d.selected_token_id(),
            token: self.texts[position].clone(),
            alternatives,
            tail_probability: tail.map(|t| lp[t].exp()),
        })
    }

    pub fn report(&self, thresholds: &FlagThresholds) -> Report {
        let stats = self.aggregate();
        Report {
            label: self.label.clone(),
            tokens: stats.tokens,
            characters: stats.characters,
            metrics: stats.metrics,
            perplexity: stats.perplexity,
            mean_log_probability: stats.mean_log_probability,
            scatter: self.scatter(),
            flags: self.flag_tokens(thresholds),
        }
    }

    pub fn compare(&self, other: &AnalysisSession) -> ComparisonReport {
        ComparisonReport::new(
            self.label.clone(),
            self.aggregate(),
            other.label.clone(),
            other.aggregate(),
        )
    }
}
