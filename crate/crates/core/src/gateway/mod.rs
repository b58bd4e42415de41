//! Exchanges prompt bundles for chat-completion responses, persisting every
//! exchange so runs can be resumed and replayed offline.

mod batch;
mod simulate;
pub mod store;
mod transport;
pub mod wire;

use std::fmt;
use std::thread;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::prompting::{PromptBundle, Strategy};

pub use batch::{run_batch, BatchOutcome, ItemFailure};
pub use simulate::SimulatedEndpoint;
pub use store::{replay, RawExchange, ResponseStore, StoreError, StoreIndex};
pub use transport::{
    HttpTransport, Transport, TransportFailure, WireReply, API_KEY_ENV, DEFAULT_BASE_URL,
};

pub const DEFAULT_MODEL: &str = "gpt-4o-mini-2024-07-18";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub system_text: String,
    pub user_text: String,
    pub max_tokens: u32,
    pub logprobs: bool,
    pub top_logprobs: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
}

impl ChatRequest {
    pub fn from_bundle(bundle: &PromptBundle, model_id: &str, temperature: Option<f64>) -> Self {
        ChatRequest {
            model_id: model_id.to_string(),
            system_text: bundle.system_text.clone(),
            user_text: bundle.user_text.clone(),
            max_tokens: bundle.max_response_tokens,
            logprobs: bundle.logprobs_requested,
            top_logprobs: bundle.top_logprobs,
            temperature,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest(
                "max_tokens must be positive".into(),
            ));
        }
        if self.top_logprobs > 5 {
            return Err(GatewayError::InvalidRequest(
                "top_logprobs must be at most 5".into(),
            ));
        }
        if self.top_logprobs > 0 && !self.logprobs {
            return Err(GatewayError::InvalidRequest(
                "top_logprobs requires logprobs".into(),
            ));
        }
        Ok(())
    }

    /// SHA-256 over the serialized request, the article id and the iteration.
    pub fn fingerprint(&self, article_id: &str, iteration: u32) -> String {
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(self).expect("request serializes"));
        hasher.update(b"\0");
        hasher.update(article_id.as_bytes());
        hasher.update(b"\0");
        hasher.update(iteration.to_le_bytes());
        hex::encode(hasher.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprob {
    pub token: String,
    pub logprob: f64,
}

/// One output position: the token the model emitted and its top
/// alternatives, most likely first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenAlternatives {
    pub chosen_token: String,
    pub chosen_logprob: f64,
    pub alternatives: Vec<TokenLogprob>,
}

/// Identifies one exchange in a store.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RecordKey {
    pub article_id: String,
    pub strategy: Strategy,
    pub iteration: u32,
}

impl fmt::Display for RecordKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}",
            self.article_id, self.strategy, self.iteration
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub request_fingerprint: String,
    pub article_id: String,
    pub strategy: Strategy,
    pub iteration: u32,
    pub model_id: String,
    /// Nanoseconds since the Unix epoch when the record was persisted.
    pub timestamp: u64,
    pub content: String,
    #[serde(default)]
    pub token_logprobs: Vec<TokenAlternatives>,
}

impl ResponseRecord {
    pub fn key(&self) -> RecordKey {
        RecordKey {
            article_id: self.article_id.clone(),
            strategy: self.strategy,
            iteration: self.iteration,
        }
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("authentication failed (HTTP {status}): {body}")]
    Auth { status: u16, body: String },
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("server error HTTP {status} after {attempts} attempts")]
    Server { status: u16, attempts: u32 },
    #[error("{message} after {attempts} attempts")]
    Transport { message: String, attempts: u32 },
    #[error("request rejected with HTTP {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed payload (kept in raw log): {0}")]
    Malformed(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl GatewayError {
    /// Whether the failure class is transient (a rerun may succeed).
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            GatewayError::RateLimited { .. }
                | GatewayError::Server { .. }
                | GatewayError::Transport { .. }
        )
    }
}

/// Exponential backoff with equal jitter: attempt `k` waits a uniformly
/// random duration in `[d/2, d]` where `d = min(base * 2^k, max)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 5,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(60),
        }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_retries: u32) -> Self {
        RetryPolicy {
            max_retries,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
        }
    }

    pub fn delay(&self, attempt: u32, rng: &mut impl Rng) -> Duration {
        let factor = 2u32.saturating_pow(attempt.min(30));
        let full = self.base_delay.saturating_mul(factor).min(self.max_delay);
        if full.is_zero() {
            return full;
        }
        let half = full / 2;
        half + full.mul_f64(rng.gen::<f64>() * 0.5)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatewayConfig {
    pub model_id: String,
    pub temperature: Option<f64>,
    pub retry: RetryPolicy,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            model_id: DEFAULT_MODEL.to_string(),
            temperature: None,
            retry: RetryPolicy::default(),
        }
    }
}

/// A transport bound to a response store.
pub struct Gateway {
    transport: Box<dyn Transport>,
    config: GatewayConfig,
    store: ResponseStore,
}

enum Outcome {
    Done(ResponseRecord),
    Retry(GatewayError),
    Fail(GatewayError),
}

impl Gateway {
    pub fn new(transport: Box<dyn Transport>, config: GatewayConfig, store: ResponseStore) -> Self {
        Gateway {
            transport,
            config,
            store,
        }
    }

    pub fn store(&self) -> &ResponseStore {
        &self.store
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    /// Sends one bundle, retrying transient failures, and appends the
    /// resulting record to the store. Every reply body is written to the raw
    /// log before it is parsed.
    pub fn send(
        &self,
        bundle: &PromptBundle,
        article_id: &str,
        iteration: u32,
    ) -> Result<ResponseRecord, GatewayError> {
        if iteration == 0 {
            return Err(GatewayError::InvalidRequest(
                "iteration must be at least 1".into(),
            ));
        }
        let request =
            ChatRequest::from_bundle(bundle, &self.config.model_id, self.config.temperature);
        request.validate()?;
        let fingerprint = request.fingerprint(article_id, iteration);
        let body = wire::request_body(&request);
        let key = RecordKey {
            article_id: article_id.to_string(),
            strategy: bundle.strategy,
            iteration,
        };

        let mut rng = rand::thread_rng();
        let mut attempt = 0u32;
        loop {
            let attempts = attempt + 1;
            let outcome = match self.transport.post_chat(&body, &key) {
                Err(failure) => Outcome::Retry(GatewayError::Transport {
                    message: failure.0,
                    attempts,
                }),
                Ok(reply) => {
                    self.store.append_raw(&RawExchange {
                        request_fingerprint: fingerprint.clone(),
                        article_id: article_id.to_string(),
                        strategy: bundle.strategy,
                        iteration,
                        attempt: attempts,
                        status: reply.status,
                        payload: reply.body.clone(),
                    })?;
                    self.classify(reply, &request, &key, &fingerprint, attempts)
                }
            };
            match outcome {
                Outcome::Done(record) => {
                    self.store.append(&record)?;
                    return Ok(record);
                }
                Outcome::Fail(err) => return Err(err),
                Outcome::Retry(err) => {
                    if attempt >= self.config.retry.max_retries {
                        return Err(err);
                    }
                    thread::sleep(self.config.retry.delay(attempt, &mut rng));
                    attempt += 1;
                }
            }
        }
    }

    fn classify(
        &self,
        reply: WireReply,
        request: &ChatRequest,
        key: &RecordKey,
        fingerprint: &str,
        attempts: u32,
    ) -> Outcome {
        match reply.status {
            200..=299 => match wire::parse_completion(&reply.body, request.logprobs) {
                Ok(parsed) => Outcome::Done(ResponseRecord {
                    request_fingerprint: fingerprint.to_string(),
                    article_id: key.article_id.clone(),
                    strategy: key.strategy,
                    iteration: key.iteration,
                    model_id: parsed.model.unwrap_or_else(|| request.model_id.clone()),
                    timestamp: now_nanos(),
                    content: parsed.content,
                    token_logprobs: parsed.token_logprobs,
                }),
                Err(message) => Outcome::Fail(GatewayError::Malformed(message)),
            },
            401 | 403 => Outcome::Fail(GatewayError::Auth {
                status: reply.status,
                body: truncate(&reply.body, 200),
            }),
            429 => Outcome::Retry(GatewayError::RateLimited { attempts }),
            500..=599 => Outcome::Retry(GatewayError::Server {
                status: reply.status,
                attempts,
            }),
            status => Outcome::Fail(GatewayError::Rejected {
                status,
                body: truncate(&reply.body, 200),
            }),
        }
    }
}

fn truncate(text: &str, max: usize) -> String {
    match text.char_indices().nth(max) {
        Some((idx, _)) => format!("{}...", &text[..idx]),
        None => text.to_string(),
    }
}

fn now_nanos() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_nanos() as u64)
        .unwrap_or(0)
}
