//! The HTTP transport against a local mock endpoint.

mod common;

use std::time::Duration;

use common::*;
use starscore::corpus::MainPanel;
use starscore::gateway::{
    store::load_raw_log, Gateway, GatewayConfig, GatewayError, HttpTransport, ResponseStore,
    RetryPolicy, StoreIndex,
};
use starscore::prompting::{build_prompt, Strategy, SystemInstructionSet};

fn instructions() -> SystemInstructionSet {
    MainPanel::ALL
        .into_iter()
        .fold(SystemInstructionSet::new(), |s, p| s.with(p, "sys"))
}

fn gateway(base_url: &str, dir: &std::path::Path, max_retries: u32) -> Gateway {
    let transport =
        HttpTransport::new(base_url, "test-key".into(), Duration::from_secs(5)).unwrap();
    Gateway::new(
        Box::new(transport),
        GatewayConfig {
            model_id: "mock-model".into(),
            temperature: None,
            retry: RetryPolicy::no_delay(max_retries),
        },
        ResponseStore::open(dir.join("store.jsonl")).unwrap(),
    )
}

#[test]
fn retries_server_errors_then_succeeds() {
    let server = MockServer::start(vec![
        (500, "oops".into()),
        (503, "busy".into()),
        (200, completion_body("1*: 10%\n2*: 20%\n3*: 40%\n4*: 30%")),
    ]);
    let dir = tempfile::tempdir().unwrap();
    let gw = gateway(&server.base_url, dir.path(), 2);
    let a = article("a1", 3, "D1", 2017);
    let bundle = build_prompt(Strategy::ClassificationTable, &a, &instructions()).unwrap();
    let rec = gw.send(&bundle, "a1", 1).unwrap();
    assert_eq!(rec.content, "1*: 10%\n2*: 20%\n3*: 40%\n4*: 30%");

    let seen = server.requests();
    assert_eq!(seen.len(), 3);
    assert_eq!(seen[0].request_line, "POST /v1/chat/completions HTTP/1.1");
    assert_eq!(seen[0].header("authorization"), Some("Bearer test-key"));
    let body: serde_json::Value = serde_json::from_str(&seen[0].body).unwrap();
    assert_eq!(body["model"], "mock-model");
    assert_eq!(body["max_tokens"], 1000);

    let raw = load_raw_log(gw.store().raw_path()).unwrap();
    assert_eq!(
        raw.iter().map(|r| r.status).collect::<Vec<_>>(),
        vec![500, 503, 200]
    );
    assert_eq!(StoreIndex::load(gw.store().path()).unwrap().len(), 1);
}

#[test]
fn persistent_500_surfaces_retryable_error_after_cap() {
    let server = MockServer::start(vec![(500, "down".into())]);
    let dir = tempfile::tempdir().unwrap();
    let gw = gateway(&server.base_url, dir.path(), 2);
    let a = article("a1", 3, "D1", 2017);
    let bundle = build_prompt(Strategy::TokenScore, &a, &instructions()).unwrap();
    let err = gw.send(&bundle, "a1", 1).unwrap_err();
    assert!(
        matches!(
            err,
            GatewayError::Server {
                status: 500,
                attempts: 3
            }
        ),
        "{err}"
    );
    assert!(err.is_retryable());
    assert_eq!(server.requests().len(), 3);
    let body: serde_json::Value = serde_json::from_str(&server.requests()[0].body).unwrap();
    assert_eq!(body["logprobs"], true);
    assert_eq!(body["top_logprobs"], 5);
    assert_eq!(body["max_tokens"], 5);
}

#[test]
fn unauthorized_is_not_retried() {
    let server = MockServer::start(vec![(401, r#"{"error":"bad key"}"#.into())]);
    let dir = tempfile::tempdir().unwrap();
    let gw = gateway(&server.base_url, dir.path(), 5);
    let a = article("a1", 3, "D1", 2017);
    let bundle = build_prompt(Strategy::Standard, &a, &instructions()).unwrap();
    let err = gw.send(&bundle, "a1", 1).unwrap_err();
    assert!(matches!(err, GatewayError::Auth { status: 401, .. }));
    assert_eq!(server.requests().len(), 1);
}

#[test]
fn rate_limit_is_retried() {
    let server = MockServer::start(vec![
        (429, "slow down".into()),
        (200, completion_body("Score: 2*")),
    ]);
    let dir = tempfile::tempdir().unwrap();
    let gw = gateway(&server.base_url, dir.path(), 3);
    let a = article("a1", 3, "D1", 2017);
    let bundle = build_prompt(Strategy::Standard, &a, &instructions()).unwrap();
    assert_eq!(gw.send(&bundle, "a1", 1).unwrap().content, "Score: 2*");
    assert_eq!(server.requests().len(), 2);
}

#[test]
fn malformed_payload_is_kept() {
    let server = MockServer::start(vec![(200, "{not json".into())]);
    let dir = tempfile::tempdir().unwrap();
    let gw = gateway(&server.base_url, dir.path(), 2);
    let a = article("a1", 3, "D1", 2017);
    let bundle = build_prompt(Strategy::Standard, &a, &instructions()).unwrap();
    assert!(matches!(
        gw.send(&bundle, "a1", 1),
        Err(GatewayError::Malformed(_))
    ));
    let raw = load_raw_log(gw.store().raw_path()).unwrap();
    assert_eq!(raw.len(), 1);
    assert_eq!(raw[0].payload, "{not json");
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    // bind then drop to get a port with nothing listening
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let dir = tempfile::tempdir().unwrap();
    let gw = gateway(&format!("http://127.0.0.1:{port}/v1"), dir.path(), 1);
    let a = article("a1", 3, "D1", 2017);
    let bundle = build_prompt(Strategy::Standard, &a, &instructions()).unwrap();
    let err = gw.send(&bundle, "a1", 1).unwrap_err();
    assert!(
        matches!(err, GatewayError::Transport { attempts: 2, .. }),
        "{err}"
    );
}
