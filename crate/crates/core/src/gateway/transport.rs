use std::time::Duration;

use serde_json::Value;

use super::RecordKey;

/// Environment variable holding the API credential.
pub const API_KEY_ENV: &str = "OPENAI_API_KEY";
pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

/// Status code and body of one HTTP exchange.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireReply {
    pub status: u16,
    pub body: String,
}

/// The request never produced a reply (connect failure, timeout, reset).
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("transport failure: {0}")]
pub struct TransportFailure(pub String);

/// Posts one chat-completion body. `key` identifies the exchange; network
/// transports ignore it, simulated ones may use it.
pub trait Transport: Send + Sync {
    fn post_chat(&self, body: &Value, key: &RecordKey) -> Result<WireReply, TransportFailure>;
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn post_chat(&self, body: &Value, key: &RecordKey) -> Result<WireReply, TransportFailure> {
        (**self).post_chat(body, key)
    }
}

/// Blocking HTTP transport for an OpenAI-style `/chat/completions` endpoint.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    url: String,
    api_key: String,
}

impl HttpTransport {
    pub fn new(
        base_url: &str,
        api_key: String,
        timeout: Duration,
    ) -> Result<Self, TransportFailure> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| TransportFailure(e.to_string()))?;
        let url = format!("{}/chat/completions", base_url.trim_end_matches('/'));
        Ok(HttpTransport {
            client,
            url,
            api_key,
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl Transport for HttpTransport {
    fn post_chat(&self, body: &Value, _key: &RecordKey) -> Result<WireReply, TransportFailure> {
        let response = self
            .client
            .post(&self.url)
            .bearer_auth(&self.api_key)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_string())
            .send()
            .map_err(|e| TransportFailure(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response
            .text()
            .map_err(|e| TransportFailure(e.to_string()))?;
        Ok(WireReply { status, body })
    }
}
