//! Teacher backend speaking the chat-completions wire format over HTTP.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use pedagogy_core::backends::{BackendError, TeacherBackend};
use pedagogy_core::pipeline::HttpSettings;
use reqwest::blocking::{Client, Response};
use reqwest::StatusCode;
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HttpError {
    #[error("invalid teacher settings: {0}")]
    InvalidSettings(String),
    #[error("could not build HTTP client: {0}")]
    Client(String),
}

/// Counting semaphore bounding in-flight requests.
struct Permits {
    free: Mutex<usize>,
    ready: Condvar,
}

struct Permit<'a>(&'a Permits);

impl Permits {
    fn new(n: usize) -> Self {
        Self { free: Mutex::new(n), ready: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("permit lock");
        while *free == 0 {
            free = self.ready.wait(free).expect("permit lock");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("permit lock") += 1;
        self.0.ready.notify_one();
    }
}

pub struct HttpTeacher {
    client: Client,
    settings: HttpSettings,
    api_key: Option<String>,
    permits: Permits,
    backoff: Duration,
}

enum Attempt {
    Done(Result<String, BackendError>),
    Retry { error: BackendError, wait: Option<Duration> },
}

impl HttpTeacher {
    /// The API key, if any, is read from the environment variable named by
    /// `settings.api_key_env`.
    pub fn new(settings: &HttpSettings) -> Result<Self, HttpError> {
        if settings.endpoint.trim().is_empty() {
            return Err(HttpError::InvalidSettings("endpoint is empty".into()));
        }
        if settings.parallelism == 0 {
            return Err(HttpError::InvalidSettings("parallelism must be at least 1".into()));
        }
        let api_key = std::env::var(&settings.api_key_env).ok().filter(|k| !k.is_empty());
        if api_key.is_none() {
            log::warn!("{} is not set; sending requests without a credential", settings.api_key_env);
        }
        let client = Client::builder()
            .timeout(Duration::from_secs(settings.timeout_secs))
            .build()
            .map_err(|e| HttpError::Client(e.to_string()))?;
        Ok(Self {
            client,
            settings: settings.clone(),
            api_key,
            permits: Permits::new(settings.parallelism),
            backoff: Duration::from_millis(500),
        })
    }

    /// Base delay of the exponential retry backoff.
    pub fn with_backoff(mut self, base: Duration) -> Self {
        self.backoff = base;
        self
    }

    fn body(&self, system: &str, user: &str) -> Value {
        let mut body = json!({
            "model": self.settings.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        });
        if let Some(t) = self.settings.temperature {
            body["temperature"] = json!(t);
        }
        if let Some(n) = self.settings.max_tokens {
            body["max_tokens"] = json!(n);
        }
        body
    }

    fn attempt(&self, body: &Value) -> Attempt {
        let mut req = self.client.post(&self.settings.endpoint).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        match req.send() {
            Ok(resp) => self.handle(resp),
            Err(e) if e.is_timeout() => Attempt::Retry { error: BackendError::Timeout, wait: None },
            Err(e) => Attempt::Retry { error: BackendError::Transport(e.to_string()), wait: None },
        }
    }

    fn handle(&self, resp: Response) -> Attempt {
        let status = resp.status();
        let retry_after = resp
            .headers()
            .get(reqwest::header::RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        if status == StatusCode::TOO_MANY_REQUESTS {
            return Attempt::Retry { error: BackendError::RateLimited(0), wait: retry_after };
        }
        if status.is_server_error() {
            return Attempt::Retry { error: BackendError::Transport(format!("server returned {status}")), wait: retry_after };
        }
        let text = match resp.text() {
            Ok(t) => t,
            Err(e) if e.is_timeout() => return Attempt::Retry { error: BackendError::Timeout, wait: None },
            Err(e) => return Attempt::Retry { error: BackendError::Transport(e.to_string()), wait: None },
        };
        if !status.is_success() {
            let snippet: String = text.chars().take(200).collect();
            return Attempt::Done(Err(BackendError::Transport(format!("server returned {status}: {snippet}"))));
        }
        Attempt::Done(parse_content(&text))
    }
}

/// Extracts `choices[0].message.content`.
pub fn parse_content(text: &str) -> Result<String, BackendError> {
    let v: Value = serde_json::from_str(text).map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| BackendError::MalformedResponse("no choices[0].message.content".into()))
}

impl TeacherBackend for HttpTeacher {
    fn identity(&self) -> String {
        format!("http({}, model={})", self.settings.endpoint, self.settings.model)
    }

    fn generate(&self, system: &str, user: &str) -> Result<String, BackendError> {
        let _permit = self.permits.acquire();
        let body = self.body(system, user);
        let attempts = self.settings.max_retries + 1;
        let mut attempt = 0;
        loop {
            attempt += 1;
            let (error, wait) = match self.attempt(&body) {
                Attempt::Done(r) => return r,
                Attempt::Retry { error, wait } => (error, wait),
            };
            if attempt >= attempts {
                return Err(match error {
                    BackendError::RateLimited(_) => BackendError::RateLimited(attempt),
                    other => other,
                });
            }
            let delay = wait.unwrap_or(self.backoff * 2u32.saturating_pow(attempt as u32 - 1));
            log::warn!("teacher request failed ({error}); retry {attempt}/{} in {delay:?}", attempts - 1);
            thread::sleep(delay);
        }
    }
}
