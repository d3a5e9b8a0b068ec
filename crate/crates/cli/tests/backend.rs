use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use tokscope_cli::stub_server::{self, Behavior};
use tokscope_core::corpus::preamble;
use tokscope_core::metrics::{distribution_entropy, Coverage};
use tokscope_core::{fetch_logprobs, BackendDescriptor, Error, TrigramStub};

const PROMPT: &str = "We hold these truths to";

async fn backend(behavior: Behavior) -> (Arc<TrigramStub>, BackendDescriptor) {
    let stub = Arc::new(TrigramStub::train(preamble()));
    let addr: SocketAddr = "127.0.0.1:0".parse().unwrap();
    let (bound, _) = stub_server::spawn(addr, stub.clone(), behavior)
        .await
        .unwrap();
    let mut descriptor = BackendDescriptor::new(format!("http://{bound}/v1"));
    descriptor.backoff_ms = 10;
    (stub, descriptor)
}

#[tokio::test]
async fn healthy_backend_scores_every_token() {
    let (_, mut b) = backend(Behavior::Normal).await;
    b.top_k = 5;
    let scored = fetch_logprobs(&b, PROMPT).await.unwrap();
    assert_eq!(scored.distributions.len(), 5);
    assert_eq!(scored.texts.concat(), PROMPT);
    for (i, d) in scored.distributions.iter().enumerate() {
        assert_eq!(d.position(), i);
        assert!(matches!(d.coverage(), Coverage::TopKLumped { .. }));
        assert!(d.is_approximate());
    }
}

#[tokio::test]
async fn larger_k_never_lowers_entropy() {
    let (stub, mut b) = backend(Behavior::Normal).await;
    let text = tokscope_core::reverse_words(preamble());
    let prompt: String = text.split(' ').take(40).collect::<Vec<_>>().join(" ");
    b.top_k = 5;
    let small = fetch_logprobs(&b, &prompt).await.unwrap();
    b.top_k = 20;
    let large = fetch_logprobs(&b, &prompt).await.unwrap();
    b.top_k = stub.vocabulary_size();
    let complete = fetch_logprobs(&b, &prompt).await.unwrap();
    let (full, _) = stub.score(&prompt).unwrap();
    for (i, d) in full.iter().enumerate() {
        let h5 = distribution_entropy(&small.distributions[i]);
        let h20 = distribution_entropy(&large.distributions[i]);
        let h_all = distribution_entropy(&complete.distributions[i]);
        let h_full = distribution_entropy(d);
        assert!(h20 >= h5 - 1e-9, "position {i}: {h20} < {h5}");
        assert!(h_full >= h20 - 1e-9);
        assert!((h_all - h_full).abs() <= 1e-9);
    }
}

#[tokio::test]
async fn missing_logprobs_is_unsupported() {
    let (_, b) = backend(Behavior::NoLogprobs).await;
    let err = fetch_logprobs(&b, PROMPT).await.unwrap_err();
    assert!(matches!(err, Error::UnsupportedBackend { .. }), "{err:?}");
}

#[tokio::test]
async fn client_errors_are_not_retried() {
    let (_, b) = backend(Behavior::Status(404)).await;
    let err = fetch_logprobs(&b, PROMPT).await.unwrap_err();
    match err {
        Error::Backend { status, fragment } => {
            assert_eq!(status, 404);
            assert!(fragment.contains("stub failure"));
        }
        other => panic!("{other:?}"),
    }
}

#[tokio::test]
async fn server_errors_fail_after_retries() {
    let (_, b) = backend(Behavior::Status(503)).await;
    let started = std::time::Instant::now();
    let err = fetch_logprobs(&b, PROMPT).await.unwrap_err();
    assert!(matches!(err, Error::Backend { status: 503, .. }), "{err:?}");
    // Two retries wait 10 ms then 20 ms.
    assert!(started.elapsed() >= Duration::from_millis(30));
}

#[tokio::test]
async fn slow_backend_times_out() {
    let (_, mut b) = backend(Behavior::Delay(Duration::from_secs(5))).await;
    b.timeout_secs = 0.2;
    b.retries = 1;
    let err = fetch_logprobs(&b, PROMPT).await.unwrap_err();
    assert!(
        matches!(err, Error::BackendTimeout { attempts: 2 }),
        "{err:?}"
    );
}

#[tokio::test]
async fn missing_auth_variable_is_a_config_error() {
    let (_, mut b) = backend(Behavior::Normal).await;
    b.auth_env = Some("TOKSCOPE_TEST_UNSET_TOKEN".into());
    let err = fetch_logprobs(&b, PROMPT).await.unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err:?}");
}
