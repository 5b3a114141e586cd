//! Chat-completions client over HTTP.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{BackendConfig, BackendError, Completion, CompletionBackend, CompletionUsage};
use crate::knowledge::TokenCounter;

pub const API_KEY_ENV: &str = "EXTAGENTS_API_KEY";

static NETWORK_DENIED: AtomicBool = AtomicBool::new(false);
static NETWORK_ATTEMPTS: AtomicU64 = AtomicU64::new(0);

/// Test hook: while set, every HTTP backend fails before opening a socket.
pub fn set_network_denied(denied: bool) {
    NETWORK_DENIED.store(denied, Ordering::SeqCst);
}

/// Process-wide count of attempted HTTP requests, including denied ones.
pub fn network_attempts() -> u64 {
    NETWORK_ATTEMPTS.load(Ordering::SeqCst)
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: [ChatMessage<'a>; 1],
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

/// Request body sent for `prompt`: the whole prompt as one user message.
pub fn request_body(cfg: &BackendConfig, prompt: &str) -> String {
    serde_json::to_string(&ChatRequest {
        model: &cfg.model_name,
        temperature: cfg.temperature,
        messages: [ChatMessage {
            role: "user",
            content: prompt,
        }],
    })
    .expect("request serializes")
}

/// Extracts reply text and usage from a response body. Missing usage is
/// filled in with `counter`.
pub fn parse_reply(
    body: &[u8],
    prompt: &str,
    counter: &TokenCounter,
) -> Result<(String, CompletionUsage), BackendError> {
    let resp: ChatResponse =
        serde_json::from_slice(body).map_err(|e| BackendError::Protocol(format!("malformed reply: {e}")))?;
    let text = resp
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| BackendError::Protocol("reply has no choices".into()))?
        .message
        .content
        .ok_or_else(|| BackendError::Protocol("choices[0].message.content is null".into()))?;
    let usage = match resp.usage {
        Some(u) => CompletionUsage::new(u.prompt_tokens, u.completion_tokens),
        None => CompletionUsage::new(counter.count(prompt) as u64, counter.count(&text) as u64),
    };
    Ok((text, usage))
}

struct Permits {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Permits);

impl Permits {
    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    api_key: Option<String>,
    permits: Permits,
    attempts: AtomicU64,
}

impl HttpBackend {
    pub fn new(cfg: &BackendConfig) -> Result<Self, BackendError> {
        Self::with_api_key(cfg, std::env::var(API_KEY_ENV).ok())
    }

    pub fn with_api_key(cfg: &BackendConfig, api_key: Option<String>) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build()
            .map_err(|e| BackendError::Config(format!("building http client: {e}")))?;
        Ok(Self {
            client,
            api_key: api_key.filter(|k| !k.is_empty()),
            permits: Permits {
                free: Mutex::new(cfg.max_concurrency.max(1)),
                cv: Condvar::new(),
            },
            attempts: AtomicU64::new(0),
        })
    }

    /// Requests attempted through this backend.
    pub fn attempts(&self) -> u64 {
        self.attempts.load(Ordering::SeqCst)
    }
}

fn retryable(status: u16) -> bool {
    status == 429 || (500..600).contains(&status)
}

impl CompletionBackend for HttpBackend {
    fn send(&self, cfg: &BackendConfig, prompt: &str, counter: &TokenCounter) -> Result<Completion, BackendError> {
        let endpoint = cfg
            .endpoint
            .as_deref()
            .ok_or_else(|| BackendError::Config("http backend needs an endpoint".into()))?;
        let url = format!("{}/chat/completions", endpoint.trim_end_matches('/'));
        let body = request_body(cfg, prompt);
        let _permit = self.permits.acquire();

        let mut last_status = None;
        let mut last_message = String::new();
        for attempt in 1..=cfg.retry.max_attempts {
            if attempt > 1 {
                std::thread::sleep(Duration::from_millis(cfg.retry.backoff_ms(attempt - 1)));
            }
            NETWORK_ATTEMPTS.fetch_add(1, Ordering::SeqCst);
            self.attempts.fetch_add(1, Ordering::SeqCst);
            if NETWORK_DENIED.load(Ordering::SeqCst) {
                return Err(BackendError::Transport {
                    attempts: attempt,
                    status: None,
                    message: "network access denied".into(),
                });
            }
            let started = Instant::now();
            let mut req = self
                .client
                .post(&url)
                .header(reqwest::header::CONTENT_TYPE, "application/json")
                .body(body.clone());
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            let resp = match req.send() {
                Ok(r) => r,
                Err(e) => {
                    log::warn!("{url}: attempt {attempt} failed: {e}");
                    last_message = e.to_string();
                    continue;
                }
            };
            let status = resp.status().as_u16();
            let bytes = match resp.bytes() {
                Ok(b) => b,
                Err(e) => {
                    last_status = Some(status);
                    last_message = e.to_string();
                    continue;
                }
            };
            if !(200..300).contains(&status) {
                last_status = Some(status);
                last_message = String::from_utf8_lossy(&bytes).chars().take(200).collect();
                if retryable(status) {
                    log::warn!("{url}: attempt {attempt} got status {status}");
                    continue;
                }
                return Err(BackendError::Transport {
                    attempts: attempt,
                    status: last_status,
                    message: last_message,
                });
            }
            let (text, usage) = parse_reply(&bytes, prompt, counter)?;
            return Ok(Completion {
                text,
                usage,
                elapsed_us: started.elapsed().as_micros() as u64,
            });
        }
        Err(BackendError::Transport {
            attempts: cfg.retry.max_attempts,
            status: last_status,
            message: last_message,
        })
    }
}
