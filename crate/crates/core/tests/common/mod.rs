#![allow(dead_code)]

use std::path::PathBuf;

use serde::Deserialize;
use starscore::corpus::{Article, MainPanel};
use starscore::gateway::{wire, ResponseRecord, TokenAlternatives};
use starscore::prompting::Strategy;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

pub fn record(
    article_id: &str,
    strategy: Strategy,
    iteration: u32,
    content: &str,
    token_logprobs: Vec<TokenAlternatives>,
) -> ResponseRecord {
    ResponseRecord {
        request_fingerprint: format!("fp-{article_id}-{iteration}"),
        article_id: article_id.into(),
        strategy,
        iteration,
        model_id: "fixture".into(),
        timestamp: 0,
        content: content.into(),
        token_logprobs,
    }
}

pub fn article(id: &str, unit: u8, department_id: &str, year: i32) -> Article {
    Article {
        id: id.into(),
        title: format!("Title of {id}"),
        abstract_text: format!("Abstract of {id}."),
        unit,
        main_panel: MainPanel::for_unit(unit).unwrap(),
        department_id: department_id.into(),
        year,
    }
}

/// The recorded token-score completion, parsed the way the gateway does.
pub fn logprob_fixture_record() -> ResponseRecord {
    let body = std::fs::read_to_string(fixture("logprob_excerpt.json")).unwrap();
    let parsed = wire::parse_completion(&body, true).unwrap();
    record(
        "excerpt",
        Strategy::TokenScore,
        1,
        &parsed.content,
        parsed.token_logprobs,
    )
}

#[derive(Debug, Deserialize)]
pub struct ClassificationFixture {
    pub iteration: u32,
    pub content: String,
    pub expected_mean: f64,
}

pub fn classification_fixture() -> Vec<ClassificationFixture> {
    read_jsonl("classification_iterations.jsonl")
}

#[derive(Debug, Deserialize)]
pub struct StandardFixture {
    pub id: String,
    pub content: String,
    pub expected: Option<u8>,
}

pub fn standard_fixture() -> Vec<StandardFixture> {
    read_jsonl("standard_responses.jsonl")
}

fn read_jsonl<T: serde::de::DeserializeOwned>(name: &str) -> Vec<T> {
    std::fs::read_to_string(fixture(name))
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

/// Average ranks by counting: rank_i = 1 + #{x_j < x_i} + (#{x_j == x_i} - 1) / 2.
pub fn oracle_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&xi| {
            let below = x.iter().filter(|&&xj| xj < xi).count() as f64;
            let equal = x.iter().filter(|&&xj| xj == xi).count() as f64;
            1.0 + below + (equal - 1.0) / 2.0
        })
        .collect()
}

/// Pearson correlation of the oracle ranks, or `None` when undefined.
pub fn oracle_spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    let rx = oracle_ranks(x);
    let ry = oracle_ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// A request seen by [`MockServer`].
#[derive(Debug, Clone)]
pub struct SeenRequest {
    pub request_line: String,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl SeenRequest {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

/// Minimal HTTP/1.1 server answering each connection with the next scripted
/// `(status, body)`. Once the script runs out, the last reply repeats.
pub struct MockServer {
    pub base_url: String,
    seen: std::sync::Arc<std::sync::Mutex<Vec<SeenRequest>>>,
}

impl MockServer {
    pub fn start(script: Vec<(u16, String)>) -> Self {
        Self::start_with(move |i, _req| script[i.min(script.len() - 1)].clone())
    }

    /// Replies computed from the request index and the request itself.
    pub fn start_with(
        reply: impl Fn(usize, &SeenRequest) -> (u16, String) + Send + 'static,
    ) -> Self {
        use std::io::{BufRead, BufReader, Read, Write};
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let seen = std::sync::Arc::new(std::sync::Mutex::new(Vec::new()));
        let log = seen.clone();
        std::thread::spawn(move || {
            for (i, stream) in listener.incoming().enumerate() {
                let Ok(mut stream) = stream else { continue };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut request_line = String::new();
                if reader.read_line(&mut request_line).is_err() {
                    continue;
                }
                let mut headers = Vec::new();
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 {
                        break;
                    }
                    let line = line.trim_end();
                    if line.is_empty() {
                        break;
                    }
                    if let Some((k, v)) = line.split_once(':') {
                        headers.push((k.trim().to_string(), v.trim().to_string()));
                    }
                }
                let len = headers
                    .iter()
                    .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
                    .and_then(|(_, v)| v.parse::<usize>().ok())
                    .unwrap_or(0);
                let mut body = vec![0u8; len];
                let _ = reader.read_exact(&mut body);
                let req = SeenRequest {
                    request_line: request_line.trim_end().to_string(),
                    headers,
                    body: String::from_utf8_lossy(&body).into_owned(),
                };
                let (status, payload) = reply(i, &req);
                log.lock().unwrap().push(req);
                let response = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                    payload.len()
                );
                let _ = stream.write_all(response.as_bytes());
                let _ = stream.flush();
            }
        });
        MockServer {
            base_url: format!("http://{addr}/v1"),
            seen,
        }
    }

    pub fn requests(&self) -> Vec<SeenRequest> {
        self.seen.lock().unwrap().clone()
    }
}

/// A well-formed chat-completion payload with the given content.
pub fn completion_body(content: &str) -> String {
    serde_json::json!({
        "id": "chatcmpl-mock",
        "object": "chat.completion",
        "model": "mock-model",
        "choices": [{
            "index": 0,
            "message": {"role": "assistant", "content": content},
            "finish_reason": "stop"
        }]
    })
    .to_string()
}
