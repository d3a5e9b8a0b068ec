use proptest::prelude::*;
use tokscope_core::ingestion::{lump_tail, parse_records, write_records};
use tokscope_core::metrics::{
    distribution_entropy, distribution_skewentropy, distribution_varentropy, normalize_logits,
    sequence_perplexity, token_probability, token_surprisal, TokenDistribution, TokenMetrics,
};
use tokscope_core::{AnalysisSession, MetricKind};

fn logits(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-40.0f64..40.0, 1..max_len)
}

fn logits_with_selection(max_len: usize) -> impl Strategy<Value = (Vec<f64>, usize)> {
    logits(max_len).prop_flat_map(|l| {
        let n = l.len();
        (Just(l), 0..n)
    })
}

/// `(token id, log-prob)` pairs in non-increasing probability order.
fn ranked(d: &TokenDistribution) -> Vec<(u32, f64)> {
    let lp = d.log_probs();
    let mut out: Vec<(u32, f64)> = (0..lp.len()).map(|i| (i as u32, lp[i])).collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    out
}

fn lumped_entropies(d: &TokenDistribution) -> Vec<f64> {
    let ranked = ranked(d);
    let selected = ranked[0].0;
    (1..=ranked.len())
        .map(|k| distribution_entropy(&lump_tail(&ranked[..k], selected).unwrap()))
        .collect()
}

proptest! {
    #[test]
    fn metrics_are_shift_invariant((l, sel) in logits_with_selection(64), c in -1000.0f64..1000.0) {
        let a = TokenMetrics::compute(&normalize_logits(l.clone(), sel).unwrap());
        let shifted: Vec<f64> = l.iter().map(|z| z + c).collect();
        let b = TokenMetrics::compute(&normalize_logits(shifted, sel).unwrap());
        prop_assert!((a.probability - b.probability).abs() <= 1e-9);
        prop_assert!((a.surprisal - b.surprisal).abs() <= 1e-9);
        prop_assert!((a.entropy - b.entropy).abs() <= 1e-9);
        prop_assert!((a.varentropy - b.varentropy).abs() <= 1e-9);
        prop_assert!((a.skewentropy - b.skewentropy).abs() <= 1e-9 * a.skewentropy.abs().max(1.0));
    }

    #[test]
    fn metrics_respect_their_bounds((l, sel) in logits_with_selection(200)) {
        let d = normalize_logits(l, sel).unwrap();
        let h = distribution_entropy(&d);
        prop_assert!(h >= 0.0);
        prop_assert!(h <= (d.support_size() as f64).ln() + 1e-9);
        prop_assert!(distribution_varentropy(&d) >= 0.0);
        prop_assert!(distribution_skewentropy(&d).is_finite());
        let p = token_probability(&d);
        prop_assert!(p > 0.0 && p <= 1.0);
        prop_assert!((p * token_surprisal(&d).exp() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn merging_entries_never_increases_entropy(
        l in prop::collection::vec(-20.0f64..20.0, 2..50),
        mask in prop::collection::vec(any::<bool>(), 50),
    ) {
        let d = normalize_logits(l.clone(), 0).unwrap();
        let lp = d.log_probs();
        let (merged, kept): (Vec<usize>, Vec<usize>) =
            (0..lp.len()).partition(|&i| i > 0 && mask[i]);
        prop_assume!(!merged.is_empty());
        let mut coarse: Vec<f64> = kept.iter().map(|&i| lp[i]).collect();
        let mass: f64 = merged.iter().map(|&i| lp[i].exp()).sum();
        coarse.push(mass.ln());
        let coarse = normalize_logits(coarse, 0).unwrap();
        prop_assert!(distribution_entropy(&coarse) <= distribution_entropy(&d) + 1e-9);
    }

    #[test]
    fn lumped_entropy_is_a_monotone_lower_bound(l in logits(120)) {
        let d = normalize_logits(l, 0).unwrap();
        let full = distribution_entropy(&d);
        let lumped = lumped_entropies(&d);
        for w in lumped.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9);
        }
        for h in &lumped {
            prop_assert!(*h <= full + 1e-9);
        }
        prop_assert!((lumped[lumped.len() - 1] - full).abs() <= 1e-9);
    }

    #[test]
    fn selected_token_metrics_do_not_depend_on_k((l, k) in logits(80).prop_flat_map(|l| {
        let n = l.len();
        (Just(l), 1..=n)
    })) {
        let full = normalize_logits(l, 0).unwrap();
        let ranked = ranked(&full);
        // Select the least probable token still inside the top-k.
        let selected = ranked[k - 1].0;
        let idx = selected as usize;
        let full = normalize_logits(full.raw_logits().unwrap().to_vec(), idx).unwrap();
        let lumped = lump_tail(&ranked[..k], selected).unwrap();
        prop_assert!((token_surprisal(&lumped) - token_surprisal(&full)).abs() <= 1e-12);
        prop_assert!((token_probability(&lumped) - token_probability(&full)).abs() <= 1e-12);
    }

    #[test]
    fn records_round_trip(seq in prop::collection::vec(logits_with_selection(30), 1..8), topk in any::<bool>()) {
        let distributions: Vec<TokenDistribution> = seq
            .into_iter()
            .enumerate()
            .map(|(pos, (l, sel))| {
                let d = normalize_logits(l, sel).unwrap().with_position(pos);
                if topk && d.support_size() > 2 {
                    let mut r = ranked(&d);
                    r.truncate(d.support_size() - 1);
                    let selected = r[0].0;
                    lump_tail(&r, selected).unwrap().with_position(pos)
                } else {
                    d
                }
            })
            .collect();
        let texts: Vec<String> = (0..distributions.len()).map(|i| format!(" w{i}")).collect();
        let mut buf = Vec::new();
        write_records(&mut buf, &distributions, &texts).unwrap();
        let parsed = parse_records(buf.as_slice()).unwrap();
        prop_assert_eq!(&parsed.texts, &texts);
        let a = AnalysisSession::build("a", distributions, texts.clone()).unwrap();
        let b = AnalysisSession::build("b", parsed.distributions, texts).unwrap();
        for kind in MetricKind::ALL {
            for (x, y) in a.metric(kind).iter().zip(b.metric(kind).iter()) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{kind}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn mean_surprisal_is_log_perplexity(s in prop::collection::vec(0.0f64..30.0, 1..100)) {
        let ppl = sequence_perplexity(&s).unwrap();
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        prop_assert!((mean - ppl.ln()).abs() <= 1e-9);
    }
}

fn sharpened(base: &[f64]) -> Vec<(f64, f64)> {
    [1.0, 0.5, 0.1, 0.01]
        .into_iter()
        .map(|tau| {
            let scaled: Vec<f64> = base.iter().map(|z| z / tau).collect();
            let d = normalize_logits(scaled, 0).unwrap();
            (distribution_entropy(&d), distribution_varentropy(&d))
        })
        .collect()
}

#[test]
fn sharpening_drives_entropy_and_varentropy_to_zero() {
    let peaked = sharpened(&[3.0, 0.0, -0.5, -1.0, -2.0]);
    assert!(peaked
        .windows(2)
        .all(|w| w[1].0 < w[0].0 && w[1].1 < w[0].1));
    assert!(peaked[3].0 < 1e-100 && peaked[3].1 < 1e-100);

    // Entropy always falls; varentropy can first rise when the distribution
    // starts out flat, but still vanishes in the limit.
    let flat = sharpened(&[2.0, 1.3, 0.4, -0.5, -1.0, 0.9]);
    assert!(flat.windows(2).all(|w| w[1].0 < w[0].0));
    assert!(flat[1].1 > flat[0].1);
    assert!(flat[3].0 < 1e-20 && flat[3].1 < 1e-20);
}

#[test]
fn lumping_bounds_on_synthetic_vocabularies() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for size in [10, 100, 1000] {
        let l: Vec<f64> = (0..size).map(|_| rng.random_range(-8.0..8.0)).collect();
        let d = normalize_logits(l, 0).unwrap();
        let full = distribution_entropy(&d);
        let lumped = lumped_entropies(&d);
        assert!(lumped.iter().all(|h| *h <= full + 1e-9));
        assert!(lumped.windows(2).all(|w| w[1] >= w[0] - 1e-9));
        assert!((lumped[size - 1] - full).abs() <= 1e-9);
    }
}
