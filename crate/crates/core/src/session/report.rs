use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::stats::{AggregateStats, Summary};
use crate::error::{Error, Result};
use crate::metrics::MetricKind;

/// Thresholds above which a token is flagged for review.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlagThresholds {
    /// nats
    pub entropy: f64,
    /// nats²
    pub varentropy: f64,
    /// nats
    pub surprisal: f64,
}

impl Default for FlagThresholds {
    fn default() -> Self {
        FlagThresholds {
            entropy: 4.0,
            varentropy: 10.0,
            surprisal: 6.0,
        }
    }
}

impl FlagThresholds {
    /// Thresholds that flag nothing.
    pub fn never() -> Self {
        FlagThresholds {
            entropy: f64::INFINITY,
            varentropy: f64::INFINITY,
            surprisal: f64::INFINITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("entropy", self.entropy),
            ("varentropy", self.varentropy),
            ("surprisal", self.surprisal),
        ] {
            if v.is_nan() || v < 0.0 {
                return Err(Error::Config(format!("{name} threshold must be >= 0")));
            }
        }
        Ok(())
    }
}

/// Entropy/varentropy coordinates of one token, written as
/// `[entropy, varentropy, position, token]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64, f64, usize, String)", into = "(f64, f64, usize, String)")]
pub struct ScatterPoint {
    pub entropy: f64,
    pub varentropy: f64,
    pub position: usize,
    pub token: String,
}

impl From<(f64, f64, usize, String)> for ScatterPoint {
    fn from((entropy, varentropy, position, token): (f64, f64, usize, String)) -> Self {
        ScatterPoint {
            entropy,
            varentropy,
            position,
            token,
        }
    }
}

impl From<ScatterPoint> for (f64, f64, usize, String) {
    fn from(p: ScatterPoint) -> Self {
        (p.entropy, p.varentropy, p.position, p.token)
    }
}

/// A flagged position and the metrics that triggered, written as
/// `[position, [kinds...]]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "(usize, Vec<MetricKind>)", into = "(usize, Vec<MetricKind>)")]
pub struct FlaggedToken {
    pub position: usize,
    pub kinds: Vec<MetricKind>,
}

impl From<(usize, Vec<MetricKind>)> for FlaggedToken {
    fn from((position, kinds): (usize, Vec<MetricKind>)) -> Self {
        FlaggedToken { position, kinds }
    }
}

impl From<FlaggedToken> for (usize, Vec<MetricKind>) {
    fn from(f: FlaggedToken) -> Self {
        (f.position, f.kinds)
    }
}

/// Everything known about one analyzed sequence, in a stable key order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub label: String,
    pub tokens: usize,
    pub characters: usize,
    pub metrics: BTreeMap<MetricKind, Summary>,
    pub perplexity: f64,
    /// Mean natural-log probability of the selected tokens.
    pub mean_log_probability: f64,
    pub scatter: Vec<ScatterPoint>,
    pub flags: Vec<FlaggedToken>,
}

impl Report {
    /// Pretty-printed JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report is serializable");
        s.push('\n');
        s
    }
}

/// One row of a side-by-side comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub metric: String,
    pub left: f64,
    pub right: f64,
    /// `right - left`
    pub delta: f64,
    /// `right / left`; absent when `left` is zero.
    pub ratio: Option<f64>,
}

impl ComparisonRow {
    fn new(metric: &str, left: f64, right: f64) -> Self {
        ComparisonRow {
            metric: metric.to_string(),
            left,
            right,
            delta: right - left,
            ratio: (left != 0.0).then(|| right / left),
        }
    }
}

/// Aggregates of two sessions side by side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub left_label: String,
    pub right_label: String,
    pub rows: Vec<ComparisonRow>,
    pub left: AggregateStats,
    pub right: AggregateStats,
}

impl ComparisonReport {
    pub fn new(
        left_label: String,
        left: AggregateStats,
        right_label: String,
        right: AggregateStats,
    ) -> Self {
        let mean = |s: &AggregateStats, k: MetricKind| s.metrics[&k].mean;
        let mut rows = vec![
            ComparisonRow::new("tokens", left.tokens as f64, right.tokens as f64),
            ComparisonRow::new(
                "characters",
                left.characters as f64,
                right.characters as f64,
            ),
        ];
        for k in [
            MetricKind::Entropy,
            MetricKind::Varentropy,
            MetricKind::Skewentropy,
        ] {
            rows.push(ComparisonRow::new(
                k.as_str(),
                mean(&left, k),
                mean(&right, k),
            ));
        }
        rows.push(ComparisonRow::new(
            "perplexity",
            left.perplexity,
            right.perplexity,
        ));
        rows.push(ComparisonRow::new(
            "probability",
            mean(&left, MetricKind::Probability),
            mean(&right, MetricKind::Probability),
        ));
        rows.push(ComparisonRow::new(
            "mean_log_probability",
            left.mean_log_probability,
            right.mean_log_probability,
        ));
        rows.push(ComparisonRow::new(
            "surprisal",
            mean(&left, MetricKind::Surprisal),
            mean(&right, MetricKind::Surprisal),
        ));
        ComparisonReport {
            left_label,
            right_label,
            rows,
            left,
            right,
        }
    }

    pub fn row(&self, metric: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report is serializable");
        s.push('\n');
        s
    }

    /// Plain-text table, one metric per row.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<22} {:>14} {:>14} {:>14}",
            "metric", self.left_label, self.right_label, "delta"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<22} {:>14.4} {:>14.4} {:>14.4}",
                r.metric, r.left, r.right, r.delta
            );
        }
        out
    }
}

/// Min-max scales `values` into `[0, 1]`; a constant vector maps to zeros.
pub fn color_map(values: &[f64]) -> Vec<f64> {
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = max - min;
    if !span.is_finite() || span <= 0.0 {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - min) / span).collect()
}
