//! Chat-completion wire shapes.

use serde::Deserialize;
use serde_json::{json, Value};

use super::{ChatRequest, TokenAlternatives, TokenLogprob};

pub fn request_body(request: &ChatRequest) -> Value {
    let mut body = json!({
        "model": request.model_id,
        "messages": [
            {"role": "system", "content": request.system_text},
            {"role": "user", "content": request.user_text},
        ],
        "max_tokens": request.max_tokens,
        "logprobs": request.logprobs,
    });
    if request.logprobs {
        body["top_logprobs"] = json!(request.top_logprobs);
    }
    if let Some(t) = request.temperature {
        body["temperature"] = json!(t);
    }
    body
}

#[derive(Debug, Deserialize)]
struct WireResponse {
    #[serde(default)]
    model: Option<String>,
    choices: Vec<WireChoice>,
}

#[derive(Debug, Deserialize)]
struct WireChoice {
    message: WireMessage,
    #[serde(default)]
    logprobs: Option<WireLogprobs>,
}

#[derive(Debug, Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug, Deserialize)]
struct WireLogprobs {
    #[serde(default)]
    content: Option<Vec<WireTokenLogprob>>,
}

#[derive(Debug, Deserialize)]
struct WireTokenLogprob {
    token: String,
    logprob: f64,
    #[serde(default)]
    top_logprobs: Vec<WireTop>,
}

#[derive(Debug, Deserialize)]
struct WireTop {
    token: String,
    logprob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCompletion {
    pub model: Option<String>,
    pub content: String,
    pub token_logprobs: Vec<TokenAlternatives>,
}

/// Extracts message content and, when requested, the per-position top
/// alternatives. Alternatives are re-sorted by logprob descending.
pub fn parse_completion(body: &str, logprobs_requested: bool) -> Result<ParsedCompletion, String> {
    let wire: WireResponse = serde_json::from_str(body).map_err(|e| e.to_string())?;
    let choice = wire
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| "response has no choices".to_string())?;
    let content = choice.message.content.unwrap_or_default();
    let mut token_logprobs = Vec::new();
    if logprobs_requested {
        let positions = choice
            .logprobs
            .and_then(|l| l.content)
            .filter(|c| !c.is_empty())
            .ok_or_else(|| "logprobs were requested but none were returned".to_string())?;
        for pos in positions {
            let mut alternatives: Vec<TokenLogprob> = pos
                .top_logprobs
                .into_iter()
                .map(|t| TokenLogprob {
                    token: t.token,
                    logprob: t.logprob,
                })
                .collect();
            if alternatives.iter().any(|a| a.logprob.is_nan()) || pos.logprob.is_nan() {
                return Err("NaN logprob in response".into());
            }
            alternatives.sort_by(|a, b| b.logprob.total_cmp(&a.logprob));
            token_logprobs.push(TokenAlternatives {
                chosen_token: pos.token,
                chosen_logprob: pos.logprob,
                alternatives,
            });
        }
    }
    Ok(ParsedCompletion {
        model: wire.model,
        content,
        token_logprobs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(logprobs: bool) -> ChatRequest {
        ChatRequest {
            model_id: "m".into(),
            system_text: "s".into(),
            user_text: "u".into(),
            max_tokens: 5,
            logprobs,
            top_logprobs: if logprobs { 5 } else { 0 },
            temperature: None,
        }
    }

    #[test]
    fn request_body_carries_logprob_flags() {
        let body = request_body(&request(true));
        assert_eq!(body["logprobs"], json!(true));
        assert_eq!(body["top_logprobs"], json!(5));
        assert_eq!(body["max_tokens"], json!(5));
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], "u");
        assert!(body.get("temperature").is_none());
    }

    #[test]
    fn request_body_omits_top_logprobs_when_off() {
        let body = request_body(&request(false));
        assert!(body.get("top_logprobs").is_none());
    }

    #[test]
    fn missing_logprobs_is_malformed() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"Score: 3*"}}]}"#;
        assert!(parse_completion(body, true).is_err());
        assert_eq!(parse_completion(body, false).unwrap().content, "Score: 3*");
    }

    #[test]
    fn alternatives_sorted_descending() {
        let body = r#"{"choices":[{"message":{"content":"3"},"logprobs":{"content":[
            {"token":"3","logprob":-0.5,"top_logprobs":[
                {"token":"4","logprob":-1.5},{"token":"3","logprob":-0.5},{"token":"2","logprob":-3.0}]}]}}]}"#;
        let parsed = parse_completion(body, true).unwrap();
        let toks: Vec<_> = parsed.token_logprobs[0]
            .alternatives
            .iter()
            .map(|a| a.token.as_str())
            .collect();
        assert_eq!(toks, ["3", "4", "2"]);
    }
}
