use std::time::Duration;

use plantagent::completion::stub::{StubMode, StubServer};
use plantagent::completion::{CompletionBackend, CompletionError, CompletionRequest, RemoteBackend, RemoteConfig};

fn backend(stub: &StubServer, timeout: Duration, retries: u8) -> RemoteBackend {
    let mut cfg = RemoteConfig::new(stub.endpoint());
    cfg.timeout = timeout;
    cfg.retries = retries;
    cfg.model = Some("test-model".into());
    cfg.api_key = Some("k".into());
    RemoteBackend::new(cfg).unwrap()
}

#[tokio::test]
async fn canned_completion_round_trips_verbatim() {
    let canned = "{(S1) – (T1) – (P2) – (T1) – (I3) – (T1) – (S2)}\nExplanation:\n(S1) go.";
    let stub = StubServer::spawn(StubMode::Canned(canned.into())).await.unwrap();
    let out = backend(&stub, Duration::from_secs(5), 0)
        .complete(&CompletionRequest::new("prompt text"))
        .await
        .unwrap();
    assert_eq!(out.text, canned);
    assert_eq!(out.backend_id, "remote");
    let sent = stub.requests();
    assert_eq!(sent.len(), 1);
    assert_eq!(sent[0]["prompt"], "prompt text");
    assert_eq!(sent[0]["model"], "test-model");
    assert_eq!(sent[0]["temperature"], 0.0);
}

#[tokio::test]
async fn server_error_is_a_status_error() {
    let stub = StubServer::spawn(StubMode::Status(500)).await.unwrap();
    let err = backend(&stub, Duration::from_secs(5), 0)
        .complete(&CompletionRequest::new("p"))
        .await
        .unwrap_err();
    assert!(matches!(err, CompletionError::Status { code: 500, .. }), "{err}");
}

#[tokio::test]
async fn one_retry_at_most() {
    let stub = StubServer::spawn(StubMode::Status(503)).await.unwrap();
    let mut b = backend(&stub, Duration::from_secs(5), 1);
    assert!(b.complete(&CompletionRequest::new("p")).await.is_err());
    assert_eq!(stub.requests().len(), 2);

    let stub = StubServer::spawn(StubMode::Status(400)).await.unwrap();
    b = backend(&stub, Duration::from_secs(5), 1);
    assert!(b.complete(&CompletionRequest::new("p")).await.is_err());
    assert_eq!(stub.requests().len(), 1, "client errors are not retried");
}

#[tokio::test]
async fn stalled_server_times_out() {
    let stub = StubServer::spawn(StubMode::Stall(Duration::from_secs(5))).await.unwrap();
    let started = std::time::Instant::now();
    let err = backend(&stub, Duration::from_millis(300), 0)
        .complete(&CompletionRequest::new("p"))
        .await
        .unwrap_err();
    assert_eq!(err, CompletionError::Timeout(Duration::from_millis(300)));
    assert!(started.elapsed() < Duration::from_secs(3));
}

#[tokio::test]
async fn malformed_body_is_reported() {
    let stub = StubServer::spawn(StubMode::Malformed).await.unwrap();
    let err = backend(&stub, Duration::from_secs(5), 0)
        .complete(&CompletionRequest::new("p"))
        .await
        .unwrap_err();
    assert!(matches!(err, CompletionError::Malformed(_)));
}

#[tokio::test]
async fn unreachable_endpoint_is_a_transport_error() {
    let stub = StubServer::spawn(StubMode::Malformed).await.unwrap();
    let cfg = RemoteConfig::new(stub.endpoint());
    drop(stub);
    tokio::time::sleep(Duration::from_millis(50)).await;
    let err = RemoteBackend::new(cfg)
        .unwrap()
        .complete(&CompletionRequest::new("p"))
        .await
        .unwrap_err();
    assert!(matches!(err, CompletionError::Transport(_)), "{err}");
}
