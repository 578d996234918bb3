use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Message, Prompt, Provider, ProviderError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    /// Chat-completions endpoint URL.
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: Option<String>,
    pub max_in_flight: usize,
    pub max_attempts: usize,
    pub initial_backoff_ms: u64,
    pub timeout_secs: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            endpoint: "http://localhost:8000/v1/chat/completions".to_string(),
            model: String::new(),
            temperature: 0.8,
            api_key_env: None,
            max_in_flight: 4,
            max_attempts: 3,
            initial_backoff_ms: 500,
            timeout_secs: 120,
        }
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [Message],
    temperature: f64,
}

/// Counting gate on concurrent requests.
struct Gate {
    in_flight: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().expect("gate lock");
        while *n >= self.limit {
            n = self.freed.wait(n).expect("gate lock");
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().expect("gate lock");
        *n -= 1;
        self.0.freed.notify_one();
    }
}

/// Chat-style JSON client with retries and a cap on in-flight requests.
pub struct HttpProvider {
    config: HttpConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
    gate: Gate,
}

enum Failure {
    Retryable(String),
    Fatal(String),
}

impl HttpProvider {
    pub fn new(config: HttpConfig) -> Result<Self, ProviderError> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                ProviderError::Config(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| ProviderError::Config(e.to_string()))?;
        let gate = Gate {
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
            limit: config.max_in_flight.max(1),
        };
        Ok(HttpProvider {
            config,
            client,
            api_key,
            gate,
        })
    }

    fn attempt(&self, body: &str) -> Result<String, Failure> {
        let mut req = self
            .client
            .post(&self.config.endpoint)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_string());
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Failure::Retryable(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Failure::Retryable(e.to_string()))?;
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Failure::Retryable(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(Failure::Fatal(format!("HTTP {status}: {text}")));
        }
        let v: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Failure::Fatal(format!("invalid JSON: {e}")))?;
        v.pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .map(str::to_string)
            .ok_or_else(|| Failure::Fatal("response has no choices[0].message.content".to_string()))
    }
}

impl Provider for HttpProvider {
    fn generate(&self, prompt: &Prompt) -> Result<String, ProviderError> {
        let body = serde_json::to_string(&ChatRequest {
            model: &self.config.model,
            messages: &prompt.messages,
            temperature: self.config.temperature,
        })
        .map_err(|e| ProviderError::Config(e.to_string()))?;
        let _permit = self.gate.acquire();
        let attempts = self.config.max_attempts.max(1);
        let mut backoff = Duration::from_millis(self.config.initial_backoff_ms);
        let mut last = String::new();
        for k in 1..=attempts {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(Failure::Fatal(m)) => {
                    return Err(ProviderError::Http {
                        attempts: k,
                        message: m,
                    })
                }
                Err(Failure::Retryable(m)) => {
                    log::warn!("request attempt {k}/{attempts} failed: {m}");
                    last = m;
                    if k < attempts {
                        thread::sleep(backoff);
                        backoff *= 2;
                    }
                }
            }
        }
        Err(ProviderError::Http {
            attempts,
            message: last,
        })
    }
}
