//! Feeding a live record stream through a [`MonitorState`].

use std::collections::BTreeSet;
use std::io::{self, BufRead, Write};

use tokscope_core::monitor::Signal;
use tokscope_core::{LogitRecord, MetricKind, MonitorConfig, MonitorState, TokenMetrics};

#[derive(Clone, Copy, Debug)]
pub struct StreamOptions {
    pub config: MonitorConfig,
    /// Print window means every this many tokens; 0 disables.
    pub interval: usize,
    /// Freeze the baseline once this many tokens have been observed.
    pub baseline_after: usize,
}

impl StreamOptions {
    pub fn new(config: MonitorConfig) -> Self {
        StreamOptions {
            config,
            interval: 0,
            baseline_after: config.capacity,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StreamSummary {
    pub tokens: u64,
    pub skipped: u64,
    /// Alarm lines printed (rising edges only).
    pub alarms: u64,
}

/// Reads records line by line, printing rolling statistics to `out` and one
/// `ALARM` line each time a signal crosses the threshold. Malformed lines
/// are reported on `diag` and skipped. Fails only when `input` itself
/// cannot be read.
pub fn run(
    mut input: impl BufRead,
    out: &mut impl Write,
    diag: &mut impl Write,
    options: StreamOptions,
) -> io::Result<StreamSummary> {
    let mut monitor = MonitorState::new(options.config)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))?;
    writeln!(
        out,
        "# window={} alarm_k={} baseline_after={} interval={}",
        options.config.capacity, options.config.alarm_k, options.baseline_after, options.interval
    )?;
    let mut summary = StreamSummary::default();
    let mut active: BTreeSet<Signal> = BTreeSet::new();
    let mut buf = Vec::new();
    let mut line_no = 0usize;
    loop {
        buf.clear();
        if input.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        line_no += 1;
        let record = match parse_line(&buf) {
            Ok(Some(r)) => r,
            Ok(None) => continue,
            Err(e) => {
                summary.skipped += 1;
                writeln!(diag, "line {line_no}: skipped: {e}")?;
                continue;
            }
        };
        monitor.observe(&TokenMetrics::compute(&record));
        summary.tokens += 1;

        if monitor.baseline().is_none() && summary.tokens >= options.baseline_after as u64 {
            let baseline = monitor.freeze_baseline().expect("window is non-empty");
            let entropy = baseline.metrics[&MetricKind::Entropy];
            writeln!(
                out,
                "# baseline token={} entropy_mean={:.6} entropy_std={:.6}",
                summary.tokens, entropy.mean, entropy.std
            )?;
        }
        if monitor.baseline().is_some() {
            for signal in Signal::all() {
                let score = monitor.check(signal).expect("baseline is frozen");
                if score > options.config.alarm_k {
                    if active.insert(signal) {
                        summary.alarms += 1;
                        writeln!(
                            out,
                            "ALARM token={} signal={signal} score={score:.3}",
                            summary.tokens
                        )?;
                    }
                } else if active.remove(&signal) {
                    writeln!(out, "clear token={} signal={signal}", summary.tokens)?;
                }
            }
        }
        if options.interval > 0 && summary.tokens % options.interval as u64 == 0 {
            write!(
                out,
                "window token={} len={}",
                summary.tokens,
                monitor.window_len()
            )?;
            for kind in MetricKind::ALL {
                let value = match kind {
                    MetricKind::Perplexity => monitor.window_perplexity(),
                    k => monitor.window_stats(k).map(|s| s.mean),
                };
                write!(out, " {kind}={:.4}", value.unwrap_or(f64::NAN))?;
            }
            writeln!(out)?;
        }
    }
    writeln!(
        out,
        "# tokens={} skipped={} alarms={}",
        summary.tokens, summary.skipped, summary.alarms
    )?;
    Ok(summary)
}

fn parse_line(bytes: &[u8]) -> Result<Option<tokscope_core::TokenDistribution>, String> {
    let text = std::str::from_utf8(bytes).map_err(|e| e.to_string())?;
    if text.trim().is_empty() {
        return Ok(None);
    }
    let record: LogitRecord = serde_json::from_str(text).map_err(|e| e.to_string())?;
    record
        .to_distribution(None)
        .map(Some)
        .map_err(|e| e.to_string())
}
