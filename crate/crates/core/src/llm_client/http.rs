use std::sync::{Condvar, Mutex};
use std::time::Duration;

use log::{debug, warn};
use serde_json::{json, Value};

use super::{BackendConfig, ChatBackend, ChatRequest, LlmError, Result};

/// Counting gate for in-flight requests.
struct Gate {
    permits: Mutex<usize>,
    freed: Condvar,
}

impl Gate {
    fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits.max(1)),
            freed: Condvar::new(),
        }
    }

    fn enter(&self) -> GateGuard<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.freed.wait(permits).unwrap();
        }
        *permits -= 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().unwrap() += 1;
        self.0.freed.notify_one();
    }
}

/// Blocking chat-completions client with exponential backoff.
///
/// Transport failures, HTTP 429 and 5xx are retried up to `max_retries`
/// times, sleeping `backoff_base_s * 2^attempt` in between. Other statuses
/// and unparseable bodies fail immediately.
pub struct HttpBackend {
    config: BackendConfig,
    endpoint: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    gate: Gate,
}

enum Attempt {
    Retry(LlmError),
    Fatal(LlmError),
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Result<Self> {
        config.validate()?;
        let api_key = match &config.api_key_env {
            Some(var) => {
                Some(std::env::var(var).map_err(|_| LlmError::MissingApiKey(var.clone()))?)
            }
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_s))
            .build()
            .map_err(|e| LlmError::InvalidRequest(format!("cannot build HTTP client: {e}")))?;
        let base = config.base_url.trim_end_matches('/');
        let endpoint = if base.ends_with("/chat/completions") {
            base.to_owned()
        } else {
            format!("{base}/chat/completions")
        };
        let gate = Gate::new(config.max_in_flight);
        Ok(Self {
            config,
            endpoint,
            api_key,
            client,
            gate,
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn body(req: &ChatRequest) -> Value {
        let mut body = json!({
            "model": req.model_id,
            "messages": req.messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        if let Some(seed) = req.seed {
            body["seed"] = json!(seed);
        }
        body
    }

    fn attempt(&self, body: &Value) -> std::result::Result<String, Attempt> {
        let mut call = self.client.post(&self.endpoint).json(body);
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        let response = call.send().map_err(|e| {
            Attempt::Retry(LlmError::Timeout {
                attempts: 0,
                detail: e.to_string(),
            })
        })?;
        let status = response.status();
        let text = response.text().map_err(|e| {
            Attempt::Retry(LlmError::Timeout {
                attempts: 0,
                detail: e.to_string(),
            })
        })?;
        if !status.is_success() {
            let err = LlmError::HttpStatus {
                code: status.as_u16(),
                body: text.chars().take(500).collect(),
            };
            return Err(if status.as_u16() == 429 || status.is_server_error() {
                Attempt::Retry(err)
            } else {
                Attempt::Fatal(err)
            });
        }
        extract_content(&text).map_err(Attempt::Fatal)
    }
}

/// Pulls `choices[0].message.content` out of a response body.
pub(crate) fn extract_content(text: &str) -> Result<String> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| LlmError::MalformedResponse(format!("not JSON: {e}")))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| LlmError::MalformedResponse("missing choices[0].message.content".into()))
}

impl ChatBackend for HttpBackend {
    fn complete(&self, req: &ChatRequest) -> Result<String> {
        req.validate()?;
        let body = Self::body(req);
        let _permit = self.gate.enter();
        let attempts = self.config.max_retries + 1;
        let mut last = None;
        for attempt in 0..attempts {
            if attempt > 0 {
                let wait = self.config.backoff_base_s * 2f64.powi(attempt as i32 - 1);
                std::thread::sleep(Duration::from_secs_f64(wait));
            }
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fatal(err)) => return Err(err),
                Err(Attempt::Retry(err)) => {
                    debug!(
                        "attempt {} of {attempts} to {} failed: {err}",
                        attempt + 1,
                        self.endpoint
                    );
                    last = Some(err);
                }
            }
        }
        let err = match last {
            Some(LlmError::Timeout { detail, .. }) => LlmError::Timeout { attempts, detail },
            Some(other) => other,
            None => unreachable!("at least one attempt is made"),
        };
        warn!(
            "giving up on {} after {attempts} attempts: {err}",
            self.endpoint
        );
        Err(err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extracts_first_choice() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"hello"}},{"message":{"content":"no"}}]}"#;
        assert_eq!(extract_content(body).unwrap(), "hello");
    }

    #[test]
    fn missing_content_is_malformed() {
        for body in [
            r#"{"choices":[{"message":{}}]}"#,
            r#"{"choices":[]}"#,
            "not json",
        ] {
            assert!(matches!(
                extract_content(body),
                Err(LlmError::MalformedResponse(_))
            ));
        }
    }

    #[test]
    fn endpoint_suffix_is_added_once() {
        let mk = |url: &str| {
            HttpBackend::new(BackendConfig {
                base_url: url.into(),
                ..Default::default()
            })
            .unwrap()
            .endpoint()
            .to_owned()
        };
        assert_eq!(mk("http://h/v1"), "http://h/v1/chat/completions");
        assert_eq!(mk("http://h/v1/"), "http://h/v1/chat/completions");
        assert_eq!(
            mk("http://h/v1/chat/completions"),
            "http://h/v1/chat/completions"
        );
    }

    #[test]
    fn missing_api_key_variable() {
        let cfg = BackendConfig {
            api_key_env: Some("ASSISTKIT_TEST_SURELY_UNSET_KEY".into()),
            ..Default::default()
        };
        assert!(matches!(
            HttpBackend::new(cfg),
            Err(LlmError::MissingApiKey(_))
        ));
    }
}
