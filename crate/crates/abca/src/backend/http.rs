//! OpenAI-compatible chat-completions client.

use std::time::Duration;

use abca_core::{BackendError, ChatBackend, Completion, CompletionRequest, Provenance, Role, TokenScore, Usage};
use serde_json::{json, Value};

use super::{Limiter, RetryPolicy, DEFAULT_MAX_IN_FLIGHT};

pub const ENV_API_BASE: &str = "ABCA_API_BASE";
pub const ENV_API_KEY: &str = "ABCA_API_KEY";
pub const ENV_MODEL: &str = "ABCA_MODEL";
pub const DEFAULT_MODEL: &str = "gpt-4.1";

pub struct HttpBackend {
    base_url: String,
    api_key: Option<String>,
    model: String,
    agent: ureq::Agent,
    retry: RetryPolicy,
    limiter: Limiter,
}

impl HttpBackend {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            model: model.into(),
            agent: ureq::AgentBuilder::new().timeout(Duration::from_secs(120)).build(),
            retry: RetryPolicy::default(),
            limiter: Limiter::new(DEFAULT_MAX_IN_FLIGHT),
        }
    }

    /// Reads `ABCA_API_BASE` (required), `ABCA_API_KEY` and `ABCA_MODEL`.
    pub fn from_env() -> Result<Self, BackendError> {
        let base = std::env::var(ENV_API_BASE)
            .map_err(|_| BackendError::InvalidRequest(format!("{ENV_API_BASE} is not set")))?;
        let key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
        let model = std::env::var(ENV_MODEL).unwrap_or_else(|_| DEFAULT_MODEL.into());
        Ok(Self::new(base, key, model))
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.limiter = Limiter::new(n);
        self
    }

    fn post(&self, body: &Value) -> Result<Value, BackendError> {
        let _permit = self.limiter.acquire();
        let url = format!("{}/chat/completions", self.base_url);
        self.retry.run(std::thread::sleep, || post_json(&self.agent, &url, self.api_key.as_deref(), body))
    }
}

pub(crate) fn post_json(agent: &ureq::Agent, url: &str, key: Option<&str>, body: &Value) -> Result<Value, BackendError> {
    let mut r = agent.post(url).set("Content-Type", "application/json");
    if let Some(k) = key {
        r = r.set("Authorization", &format!("Bearer {k}"));
    }
    match r.send_json(body) {
        Ok(resp) => resp.into_json::<Value>().map_err(|e| BackendError::Transport(e.to_string())),
        Err(ureq::Error::Status(code, resp)) => {
            let detail = resp.into_string().unwrap_or_default();
            Err(status_error(code, &detail))
        }
        Err(ureq::Error::Transport(t)) => Err(BackendError::Transport(t.to_string())),
    }
}

pub fn status_error(code: u16, detail: &str) -> BackendError {
    match code {
        429 => BackendError::RateLimited,
        500..=599 => BackendError::Transport(format!("HTTP {code}")),
        _ => BackendError::ProviderError(format!("HTTP {code}: {}", detail.chars().take(200).collect::<String>())),
    }
}

/// Request body sent to `/chat/completions`. The sample slot is not sent.
pub fn wire_request(req: &CompletionRequest) -> Value {
    let messages: Vec<Value> = req
        .messages
        .iter()
        .map(|m| {
            let role = match m.role {
                Role::System => "system",
                Role::User => "user",
                Role::Assistant => "assistant",
            };
            json!({"role": role, "content": m.content})
        })
        .collect();
    let mut body = json!({
        "model": req.model_id,
        "messages": messages,
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
    });
    if req.want_logprobs {
        body["logprobs"] = json!(true);
    }
    if let Some(seed) = req.seed {
        body["seed"] = json!(seed);
    }
    body
}

/// Extracts text, per-token log-probabilities and usage from a response.
pub fn parse_wire_response(v: &Value, want_logprobs: bool) -> Result<Completion, BackendError> {
    let choice = v
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| BackendError::ProviderError("response has no choices".into()))?;
    let text = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::ProviderError("response has no message content".into()))?
        .to_string();
    let tokens = match choice.pointer("/logprobs/content").and_then(Value::as_array) {
        Some(items) if !items.is_empty() => {
            let mut out = Vec::with_capacity(items.len());
            for it in items {
                let token = it.get("token").and_then(Value::as_str);
                let lp = it.get("logprob").and_then(Value::as_f64);
                match (token, lp) {
                    // providers occasionally report tiny positive values from rounding
                    (Some(t), Some(lp)) => out.push(TokenScore { token: t.to_string(), logprob: lp.min(0.0) }),
                    _ => return Err(BackendError::ProviderError("malformed logprob entry".into())),
                }
            }
            Some(out)
        }
        _ => None,
    };
    if want_logprobs && tokens.is_none() {
        return Err(BackendError::MissingLogprobs);
    }
    let usage = Usage {
        prompt_tokens: v.pointer("/usage/prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
        completion_tokens: v.pointer("/usage/completion_tokens").and_then(Value::as_u64).unwrap_or(0),
    };
    Ok(Completion { text, tokens: if want_logprobs { tokens } else { None }, usage, provenance: Provenance::Live })
}

impl ChatBackend for HttpBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion, BackendError> {
        req.validate()?;
        let v = self.post(&wire_request(req))?;
        parse_wire_response(&v, req.want_logprobs)
    }

    fn model_id(&self) -> String {
        self.model.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use abca_core::Message;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    #[test]
    fn wire_shape() {
        let mut r = CompletionRequest::new("m", vec![Message::system("s"), Message::user("u")]);
        r.want_logprobs = true;
        r.seed = Some(9);
        r.sample_slot = Some(2);
        let b = wire_request(&r);
        assert_eq!(b["messages"][1], json!({"role": "user", "content": "u"}));
        assert_eq!(b["logprobs"], json!(true));
        assert_eq!(b["seed"], json!(9));
        assert!(b.get("sample_slot").is_none());
    }

    #[test]
    fn parse_response() {
        let v = json!({
            "choices": [{"message": {"content": "hi"},
                         "logprobs": {"content": [{"token": "hi", "logprob": -0.25}]}}],
            "usage": {"prompt_tokens": 3, "completion_tokens": 1}
        });
        let c = parse_wire_response(&v, true).unwrap();
        assert_eq!(c.tokens.unwrap()[0].logprob, -0.25);
        assert_eq!(c.usage.prompt_tokens, 3);
        let bare = json!({"choices": [{"message": {"content": "hi"}}]});
        assert_eq!(parse_wire_response(&bare, true), Err(BackendError::MissingLogprobs));
        assert!(parse_wire_response(&bare, false).unwrap().tokens.is_none());
        assert!(parse_wire_response(&json!({}), false).is_err());
    }

    #[test]
    fn status_mapping() {
        assert_eq!(status_error(429, ""), BackendError::RateLimited);
        assert!(status_error(503, "").is_retryable());
        assert!(!status_error(400, "bad").is_retryable());
    }

    // Serves canned HTTP responses in order, one per connection.
    fn serve(responses: Vec<(u16, &'static str)>) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            for (code, body) in responses {
                let (mut s, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(s.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    if line == "\r\n" {
                        break;
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                let resp = format!(
                    "HTTP/1.1 {code} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                s.write_all(resp.as_bytes()).unwrap();
            }
        });
        format!("http://{addr}")
    }

    #[test]
    fn retries_rate_limits_against_local_server() {
        let ok = r#"{"choices": [{"message": {"content": "done"}}]}"#;
        let base = serve(vec![(429, "{}"), (200, ok)]);
        let quick = RetryPolicy { max_attempts: 3, base_delay: Duration::from_millis(1), max_delay: Duration::from_millis(2) };
        let b = HttpBackend::new(base, Some("k".into()), "m").with_retry(quick);
        let c = b.complete(&CompletionRequest::new("m", vec![Message::user("q")])).unwrap();
        assert_eq!(c.text, "done");
        assert_eq!(c.provenance, Provenance::Live);

        let base = serve(vec![(400, r#"{"error": "nope"}"#)]);
        let b = HttpBackend::new(base, None, "m").with_retry(quick);
        let e = b.complete(&CompletionRequest::new("m", vec![Message::user("q")])).unwrap_err();
        assert!(matches!(e, BackendError::ProviderError(_)));
    }
}
