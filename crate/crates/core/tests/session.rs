use tokscope_core::corpus::preamble;
use tokscope_core::ingestion::{parse_records, write_records};
use tokscope_core::{reverse_words, AnalysisSession, FlagThresholds, MetricKind, TrigramStub};

fn stub_session(stub: &TrigramStub, label: &str, text: &str) -> AnalysisSession {
    let (d, t) = stub.score(text).unwrap();
    AnalysisSession::build(label, d, t).unwrap()
}

#[test]
fn reversed_preamble_is_less_predictable() {
    let stub = TrigramStub::train(preamble());
    let original = stub_session(&stub, "original", preamble());
    let reversed = stub_session(&stub, "reversed", &reverse_words(preamble()));
    assert_eq!(original.len(), 267);
    assert_eq!(original.aggregate().characters, 1628);
    assert_eq!(reversed.aggregate().characters, 1628);

    let report = original.compare(&reversed);
    for metric in ["entropy", "surprisal", "perplexity"] {
        let row = report.row(metric).unwrap();
        assert!(row.right > row.left, "{metric}: {row:?}");
    }
    assert!(report.row("probability").unwrap().delta < 0.0);
}

#[test]
fn comparing_a_session_with_itself_gives_zero_deltas() {
    let stub = TrigramStub::train(preamble());
    let s = stub_session(&stub, "x", preamble());
    let report = s.compare(&s);
    assert!(report.rows.iter().all(|r| r.delta == 0.0));

    let single = stub_session(&stub, "one", "Government.");
    let flipped = stub_session(&stub, "one", &reverse_words("Government."));
    assert!(single.compare(&flipped).rows.iter().all(|r| r.delta == 0.0));
}

#[test]
fn sessions_from_identical_records_give_identical_reports() {
    let stub = TrigramStub::train(preamble());
    let (d, t) = stub.score(preamble()).unwrap();
    let mut buf = Vec::new();
    write_records(&mut buf, &d, &t).unwrap();
    let a = parse_records(buf.as_slice()).unwrap();
    let b = parse_records(buf.as_slice()).unwrap();
    let a = AnalysisSession::build("records", a.distributions, a.texts).unwrap();
    let b = AnalysisSession::build("records", b.distributions, b.texts).unwrap();
    let thresholds = FlagThresholds::default();
    assert_eq!(
        a.report(&thresholds).to_json(),
        b.report(&thresholds).to_json()
    );
}

#[test]
fn scatter_points_equal_cached_vectors() {
    let stub = TrigramStub::train(preamble());
    let s = stub_session(&stub, "x", &reverse_words(preamble()));
    let h = s.metric(MetricKind::Entropy);
    let v = s.metric(MetricKind::Varentropy);
    for p in s.scatter() {
        assert_eq!(p.entropy.to_bits(), h[p.position].to_bits());
        assert_eq!(p.varentropy.to_bits(), v[p.position].to_bits());
        assert_eq!(p.token, s.texts()[p.position]);
    }
}

#[test]
fn aggregates_are_ordered_and_consistent() {
    let stub = TrigramStub::train(preamble());
    let s = stub_session(&stub, "x", &reverse_words(preamble()));
    let agg = s.aggregate();
    for summary in agg.metrics.values() {
        assert!(summary.min <= summary.median && summary.median <= summary.max);
        assert!(summary.min <= summary.mean && summary.mean <= summary.max);
    }
    let mean_surprisal = agg.metrics[&MetricKind::Surprisal].mean;
    assert!((mean_surprisal - agg.perplexity.ln()).abs() <= 1e-9);
    let running = s.metric(MetricKind::Perplexity);
    assert!((running[running.len() - 1] - agg.perplexity).abs() <= 1e-9 * agg.perplexity);
}

#[test]
fn report_json_shape() {
    let stub = TrigramStub::train("a b c a b d");
    let s = stub_session(&stub, "tiny", "a b c");
    let json = s.report(&FlagThresholds::default()).to_json();
    let keys = [
        "label",
        "tokens",
        "characters",
        "metrics",
        "perplexity",
        "mean_log_probability",
        "scatter",
        "flags",
    ];
    let offsets: Vec<usize> = keys
        .iter()
        .map(|k| json.find(&format!("\n  \"{k}\":")).unwrap())
        .collect();
    assert!(offsets.windows(2).all(|w| w[0] < w[1]));
    let value: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(value["tokens"], 3);
    assert_eq!(value["scatter"][2][2], 2);
    assert_eq!(value["scatter"][2][3], " c");
    assert!(value["metrics"]["entropy"]["median"].is_number());
}
