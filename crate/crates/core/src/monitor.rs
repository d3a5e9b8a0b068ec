//! Rolling-window statistics over a stream of token metrics, scored against
//! a frozen baseline.
//!
//! The window holds the last `capacity` observations. Its mean and standard
//! deviation (population) are maintained with a sliding Welford update and
//! recomputed exactly from the ring after every `capacity` evictions, so
//! accumulated rounding never outlives one window turnover.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{MetricKind, TokenMetrics};
use crate::session::median;

/// Per-token metrics tracked in the window. Perplexity is derived from the
/// surprisal mean.
const TRACKED: [MetricKind; 5] = [
    MetricKind::Probability,
    MetricKind::Surprisal,
    MetricKind::Entropy,
    MetricKind::Varentropy,
    MetricKind::Skewentropy,
];

const MAX_ALARM_LOG: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorConfig {
    /// Window capacity in tokens.
    pub capacity: usize,
    /// Alarm when a drift score exceeds this many baseline deviations.
    pub alarm_k: f64,
    /// Floor on the baseline deviation used as the score denominator.
    pub eps_std: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            capacity: 512,
            alarm_k: 3.0,
            eps_std: 1e-6,
        }
    }
}

impl MonitorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.capacity == 0 {
            return Err(Error::Config("monitor window capacity must be >= 1".into()));
        }
        let valid = self.alarm_k >= 0.0 && self.eps_std > 0.0;
        if !valid {
            return Err(Error::Config(
                "alarm multiplier must be >= 0 and eps_std > 0".into(),
            ));
        }
        Ok(())
    }
}

/// A monitored quantity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signal {
    /// Window mean of a metric. Perplexity is scored on the log scale, where
    /// it coincides with mean surprisal.
    Mean(MetricKind),
    SurprisalMedian,
}

impl Signal {
    pub fn all() -> impl Iterator<Item = Signal> {
        MetricKind::ALL
            .into_iter()
            .map(Signal::Mean)
            .chain(std::iter::once(Signal::SurprisalMedian))
    }
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Signal::Mean(k) => f.write_str(k.as_str()),
            Signal::SurprisalMedian => f.write_str("surprisal_median"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub metrics: BTreeMap<MetricKind, MeanStd>,
    pub surprisal_median: f64,
    pub frozen_at_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alarm {
    /// Number of observations seen when the alarm fired.
    pub observation: u64,
    pub signal: String,
    pub score: f64,
    pub at_ms: u64,
}

#[derive(Clone, Copy, Debug, Default)]
struct SlidingMoments {
    n: usize,
    mean: f64,
    m2: f64,
}

impl SlidingMoments {
    fn add(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn remove(&mut self, x: f64) {
        if self.n <= 1 {
            *self = SlidingMoments::default();
            return;
        }
        let delta = x - self.mean;
        self.n -= 1;
        self.mean -= delta / self.n as f64;
        self.m2 -= delta * (x - self.mean);
    }

    fn exact(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count();
        if n == 0 {
            return SlidingMoments::default();
        }
        let mean = values.clone().sum::<f64>() / n as f64;
        let m2 = values.map(|v| (v - mean) * (v - mean)).sum();
        SlidingMoments { n, mean, m2 }
    }

    fn mean_std(&self) -> MeanStd {
        let var = if self.n == 0 {
            0.0
        } else {
            (self.m2 / self.n as f64).max(0.0)
        };
        MeanStd {
            mean: self.mean,
            std: var.sqrt(),
        }
    }
}

/// Point-in-time view of a monitor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorStatus {
    pub config: MonitorConfig,
    pub observed: u64,
    pub window_len: usize,
    pub window: BTreeMap<MetricKind, MeanStd>,
    pub window_perplexity: Option<f64>,
    pub surprisal_median: Option<f64>,
    pub baseline: Option<Baseline>,
    pub scores: BTreeMap<String, f64>,
    pub alarms_total: u64,
    /// Recent alarms as `[observation, [signals], timestamp_ms]`.
    pub alarms: Vec<(u64, Vec<String>, u64)>,
}

/// Rolling window plus baseline for one token stream.
#[derive(Clone, Debug)]
pub struct MonitorState {
    config: MonitorConfig,
    ring: VecDeque<TokenMetrics>,
    moments: [SlidingMoments; TRACKED.len()],
    evictions: usize,
    observed: u64,
    baseline: Option<Baseline>,
    alarms: VecDeque<Alarm>,
    alarms_total: u64,
}

impl MonitorState {
    pub fn new(config: MonitorConfig) -> Result<Self> {
        config.validate()?;
        Ok(MonitorState {
            config,
            ring: VecDeque::with_capacity(config.capacity),
            moments: Default::default(),
            evictions: 0,
            observed: 0,
            baseline: None,
            alarms: VecDeque::new(),
            alarms_total: 0,
        })
    }

    pub fn config(&self) -> &MonitorConfig {
        &self.config
    }

    pub fn observed(&self) -> u64 {
        self.observed
    }

    pub fn window_len(&self) -> usize {
        self.ring.len()
    }

    pub fn baseline(&self) -> Option<&Baseline> {
        self.baseline.as_ref()
    }

    pub fn alarms(&self) -> impl Iterator<Item = &Alarm> {
        self.alarms.iter()
    }

    pub fn alarms_total(&self) -> u64 {
        self.alarms_total
    }

    pub fn observe(&mut self, metrics: &TokenMetrics) {
        if self.ring.len() == self.config.capacity {
            let old = self.ring.pop_front().expect("ring is full");
            for (m, k) in self.moments.iter_mut().zip(TRACKED) {
                m.remove(old.get(k));
            }
            self.evictions += 1;
        }
        self.ring.push_back(*metrics);
        for (m, k) in self.moments.iter_mut().zip(TRACKED) {
            m.add(metrics.get(k));
        }
        self.observed += 1;
        if self.evictions >= self.config.capacity {
            self.refresh();
        }
    }

    fn refresh(&mut self) {
        for (m, k) in self.moments.iter_mut().zip(TRACKED) {
            *m = SlidingMoments::exact(self.ring.iter().map(move |t| t.get(k)));
        }
        self.evictions = 0;
    }

    /// Current window mean and population standard deviation of `kind`.
    /// Perplexity is reported as its log, i.e. the surprisal statistics.
    pub fn window_stats(&self, kind: MetricKind) -> Option<MeanStd> {
        if self.ring.is_empty() {
            return None;
        }
        let tracked = match kind {
            MetricKind::Perplexity => MetricKind::Surprisal,
            k => k,
        };
        let i = TRACKED.iter().position(|&k| k == tracked)?;
        Some(self.moments[i].mean_std())
    }

    pub fn window_perplexity(&self) -> Option<f64> {
        self.window_stats(MetricKind::Surprisal)
            .map(|s| s.mean.exp())
    }

    pub fn surprisal_median(&self) -> Option<f64> {
        let values: Vec<f64> = self.ring.iter().map(|t| t.surprisal).collect();
        median(&values)
    }

    /// Stores the current window statistics as the baseline, replacing any
    /// previous one.
    pub fn freeze_baseline(&mut self) -> Result<&Baseline> {
        if self.ring.is_empty() {
            return Err(Error::NoData);
        }
        let metrics = TRACKED
            .into_iter()
            .map(|k| (k, self.window_stats(k).expect("window is non-empty")))
            .collect();
        self.baseline = Some(Baseline {
            metrics,
            surprisal_median: self.surprisal_median().expect("window is non-empty"),
            frozen_at_ms: now_ms(),
        });
        Ok(self.baseline.as_ref().expect("just set"))
    }

    /// Deviation of the window from the baseline in units of baseline
    /// standard deviations. Does not record alarms.
    pub fn score(&self, signal: Signal) -> Result<f64> {
        let baseline = self.baseline.as_ref().ok_or(Error::NoBaseline)?;
        if self.ring.is_empty() {
            return Err(Error::NoData);
        }
        let surprisal_std = baseline.metrics[&MetricKind::Surprisal].std;
        let (current, reference, std) = match signal {
            Signal::Mean(kind) => {
                let tracked = match kind {
                    MetricKind::Perplexity => MetricKind::Surprisal,
                    k => k,
                };
                let b = baseline.metrics[&tracked];
                let w = self.window_stats(tracked).expect("window is non-empty");
                (w.mean, b.mean, b.std)
            }
            Signal::SurprisalMedian => (
                self.surprisal_median().expect("window is non-empty"),
                baseline.surprisal_median,
                surprisal_std,
            ),
        };
        Ok((current - reference).abs() / std.max(self.config.eps_std))
    }

    /// Scores `kind`'s window mean and records an alarm when it exceeds the
    /// configured multiplier.
    pub fn drift_score(&mut self, kind: MetricKind) -> Result<f64> {
        self.check(Signal::Mean(kind))
    }

    /// Scores `signal`, recording an alarm when it exceeds the multiplier.
    pub fn check(&mut self, signal: Signal) -> Result<f64> {
        let score = self.score(signal)?;
        if score > self.config.alarm_k {
            self.record(Alarm {
                observation: self.observed,
                signal: signal.to_string(),
                score,
                at_ms: now_ms(),
            });
        }
        Ok(score)
    }

    /// Checks every signal; returns the alarms raised by this call.
    pub fn check_all(&mut self) -> Result<Vec<Alarm>> {
        let before = self.alarms_total;
        for signal in Signal::all() {
            self.check(signal)?;
        }
        let raised = (self.alarms_total - before) as usize;
        Ok(self
            .alarms
            .iter()
            .skip(self.alarms.len().saturating_sub(raised))
            .cloned()
            .collect())
    }

    fn record(&mut self, alarm: Alarm) {
        if self.alarms.len() == MAX_ALARM_LOG {
            self.alarms.pop_front();
        }
        self.alarms.push_back(alarm);
        self.alarms_total += 1;
    }

    /// Alarm log grouped per observation as `[observation, [signals], ms]`.
    pub fn alarm_flags(&self) -> Vec<(u64, Vec<String>, u64)> {
        let mut out: Vec<(u64, Vec<String>, u64)> = Vec::new();
        for a in &self.alarms {
            match out.last_mut() {
                Some(last) if last.0 == a.observation => last.1.push(a.signal.clone()),
                _ => out.push((a.observation, vec![a.signal.clone()], a.at_ms)),
            }
        }
        out
    }

    pub fn status(&self) -> MonitorStatus {
        let window = TRACKED
            .into_iter()
            .filter_map(|k| self.window_stats(k).map(|s| (k, s)))
            .collect();
        let scores = Signal::all()
            .filter_map(|s| self.score(s).ok().map(|v| (s.to_string(), v)))
            .collect();
        MonitorStatus {
            config: self.config,
            observed: self.observed,
            window_len: self.ring.len(),
            window,
            window_perplexity: self.window_perplexity(),
            surprisal_median: self.surprisal_median(),
            baseline: self.baseline.clone(),
            scores,
            alarms_total: self.alarms_total,
            alarms: self.alarm_flags(),
        }
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}
