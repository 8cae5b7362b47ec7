//! HTTP clients for the chat-completion and text-embedding endpoints.
//!
//! Both endpoints speak the de-facto JSON schema: chat requests POST
//! `{model, messages, temperature}` to `{base}/chat/completions` and the
//! reply is read from the first choice's message content; embedding requests
//! POST `{model, input}` to `{base}/embeddings` and the reply is the first
//! `data` entry's `embedding` array.
//!
//! Transient failures (transport errors, HTTP 5xx/429) are retried with
//! exponential backoff up to a configured budget; 4xx responses are
//! permanent and never retried.

use serde_json::{json, Value};

use super::EnrichError;

#[derive(Debug, Clone)]
pub struct ClientConfig {
    /// Endpoint base, e.g. `https://api.example.com/v1`; route suffixes are
    /// appended.
    pub base_url: String,
    /// Bearer token; omitted from requests when `None` (mock servers).
    pub api_key: Option<String>,
    pub chat_model: String,
    pub embed_model: String,
    /// Sampling temperature sent with every chat request; must lie in [0, 2].
    pub temperature: f64,
    /// Number of retries after the first attempt for transient failures.
    pub retry_budget: usize,
    /// First backoff sleep; doubles per retry. Tests set this to ~1ms.
    pub backoff_base_ms: u64,
}

impl ClientConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        ClientConfig {
            base_url: base_url.into(),
            api_key: None,
            chat_model: "gpt-4o-mini".to_string(),
            embed_model: "text-embedding-3-small".to_string(),
            temperature: 0.7,
            retry_budget: 3,
            backoff_base_ms: 250,
        }
    }
}

pub struct LlmClient {
    config: ClientConfig,
}

impl LlmClient {
    pub fn new(config: ClientConfig) -> Result<Self, EnrichError> {
        if !(0.0..=2.0).contains(&config.temperature) || !config.temperature.is_finite() {
            return Err(EnrichError::BadTemperature(config.temperature));
        }
        Ok(LlmClient { config })
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }

    fn url(&self, route: &str) -> String {
        format!("{}/{route}", self.config.base_url.trim_end_matches('/'))
    }

    /// Ask the chat endpoint to complete `prompt` at the configured
    /// temperature; returns the completion text (possibly empty — callers
    /// decide whether that is an error).
    pub fn chat(&self, prompt: &str) -> Result<String, EnrichError> {
        self.chat_at(prompt, self.config.temperature)
    }

    /// Like [`chat`](Self::chat) with an explicit temperature override.
    pub fn chat_at(&self, prompt: &str, temperature: f64) -> Result<String, EnrichError> {
        if !(0.0..=2.0).contains(&temperature) || !temperature.is_finite() {
            return Err(EnrichError::BadTemperature(temperature));
        }
        let url = self.url("chat/completions");
        let body = json!({
            "model": self.config.chat_model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
        });
        let reply = self.post_with_retry(&url, &body)?;
        let content = reply
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or(EnrichError::BadResponse {
                url: url.clone(),
                field: "choices[0].message.content",
            })?;
        Ok(content.to_string())
    }

    /// Embed `text`; returns the raw vector (finite-ness checked here,
    /// dimension consistency checked by the caching layer).
    pub fn embed(&self, text: &str) -> Result<Vec<f32>, EnrichError> {
        let url = self.url("embeddings");
        let body = json!({
            "model": self.config.embed_model,
            "input": text,
        });
        let reply = self.post_with_retry(&url, &body)?;
        let arr = reply
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or(EnrichError::BadResponse {
                url: url.clone(),
                field: "data[0].embedding",
            })?;
        let mut values = Vec::with_capacity(arr.len());
        for v in arr {
            let f = v.as_f64().ok_or(EnrichError::BadResponse {
                url: url.clone(),
                field: "data[0].embedding (numeric components)",
            })? as f32;
            if !f.is_finite() {
                return Err(EnrichError::NonFiniteEmbedding {
                    context: text.chars().take(40).collect(),
                });
            }
            values.push(f);
        }
        Ok(values)
    }

    fn post_with_retry(&self, url: &str, body: &Value) -> Result<Value, EnrichError> {
        let attempts = 1 + self.config.retry_budget;
        let mut last_failure = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let sleep = self.config.backoff_base_ms.saturating_mul(1 << (attempt - 1));
                std::thread::sleep(std::time::Duration::from_millis(sleep));
            }
            let mut request = ureq::post(url);
            if let Some(key) = &self.config.api_key {
                request = request.header("Authorization", format!("Bearer {key}"));
            }
            match request.send_json(body) {
                Ok(mut response) => {
                    return response
                        .body_mut()
                        .read_json::<Value>()
                        .map_err(|e| EnrichError::BadResponse {
                            url: format!("{url} ({e})"),
                            field: "JSON body",
                        });
                }
                // 429 is a rate limit: transient. Other 4xx are caller bugs:
                // permanent, no retry.
                Err(ureq::Error::StatusCode(status)) if (400..500).contains(&status) && status != 429 => {
                    return Err(EnrichError::Permanent {
                        status,
                        url: url.to_string(),
                        body: String::new(),
                    });
                }
                Err(e) => {
                    last_failure = e.to_string();
                    log::warn!("attempt {}/{attempts} against {url} failed: {e}", attempt + 1);
                }
            }
        }
        Err(EnrichError::Transient {
            attempts,
            url: url.to_string(),
            last: last_failure,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mockllm::{Behavior, MockLlmServer};

    fn fast_config(base: &str) -> ClientConfig {
        let mut c = ClientConfig::new(base);
        c.backoff_base_ms = 1;
        c
    }

    #[test]
    fn chat_round_trip_carries_model_message_temperature() {
        let server = MockLlmServer::start(Behavior {
            describe: Box::new(|prompt| format!("echo:{prompt}")),
            ..Behavior::with_dim(4)
        });
        let client = LlmClient::new(fast_config(&server.base_url())).unwrap();
        let reply = client.chat("Tell me about HER2").unwrap();
        assert_eq!(reply, "echo:Tell me about HER2");

        let reqs = server.requests_to("/chat/completions");
        assert_eq!(reqs.len(), 1);
        let body = &reqs[0].body;
        assert_eq!(body["model"], "gpt-4o-mini");
        assert_eq!(body["temperature"], 0.7);
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["messages"][0]["content"], "Tell me about HER2");
    }

    #[test]
    fn embed_round_trip() {
        let server = MockLlmServer::start(Behavior::with_dim(5));
        let client = LlmClient::new(fast_config(&server.base_url())).unwrap();
        let v = client.embed("aspirin").unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(server.requests_to("/embeddings").len(), 1);
        assert_eq!(server.requests_to("/embeddings")[0].body["input"], "aspirin");
        // Same text twice gives the same vector (server is deterministic).
        assert_eq!(client.embed("aspirin").unwrap(), v);
    }

    #[test]
    fn transient_500s_within_budget_recover() {
        let server = MockLlmServer::start(Behavior {
            fail_first: 2,
            fail_status: 500,
            ..Behavior::with_dim(3)
        });
        let mut config = fast_config(&server.base_url());
        config.retry_budget = 2;
        let client = LlmClient::new(config).unwrap();
        assert_eq!(client.embed("x").unwrap().len(), 3);
        // 2 failures + 1 success all hit the server.
        assert_eq!(server.request_count(), 3);
    }

    #[test]
    fn retry_budget_exhaustion_is_transient_error() {
        let server = MockLlmServer::start(Behavior {
            fail_first: 3,
            fail_status: 500,
            ..Behavior::with_dim(3)
        });
        let mut config = fast_config(&server.base_url());
        config.retry_budget = 2;
        let client = LlmClient::new(config).unwrap();
        let err = client.embed("x").unwrap_err();
        assert!(matches!(err, EnrichError::Transient { attempts: 3, .. }), "{err}");
        assert_eq!(server.request_count(), 3);
    }

    #[test]
    fn http_4xx_is_permanent_and_not_retried() {
        let server = MockLlmServer::start(Behavior {
            fail_first: 99,
            fail_status: 401,
            ..Behavior::with_dim(3)
        });
        let mut config = fast_config(&server.base_url());
        config.retry_budget = 5;
        let client = LlmClient::new(config).unwrap();
        let err = client.chat("hi").unwrap_err();
        assert!(matches!(err, EnrichError::Permanent { status: 401, .. }), "{err}");
        assert_eq!(server.request_count(), 1, "4xx must not be retried");
    }

    #[test]
    fn bearer_header_sent_when_key_present() {
        let server = MockLlmServer::start(Behavior::with_dim(2));
        let mut config = fast_config(&server.base_url());
        config.api_key = Some("sk-test".to_string());
        let client = LlmClient::new(config).unwrap();
        client.embed("x").unwrap();
        let reqs = server.requests_to("/embeddings");
        assert_eq!(
            reqs[0].headers.get("authorization").map(String::as_str),
            Some("Bearer sk-test")
        );
    }

    #[test]
    fn temperature_out_of_range_rejected() {
        let mut config = ClientConfig::new("http://localhost:1");
        config.temperature = 2.5;
        assert!(matches!(
            LlmClient::new(config),
            Err(EnrichError::BadTemperature(_))
        ));
    }
}
