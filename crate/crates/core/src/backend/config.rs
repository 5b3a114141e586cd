use serde::{Deserialize, Serialize};

use super::BackendError;

/// Default context length: 136k tokens, leaving room for 128k chunks plus
/// prompt scaffolding.
pub const DEFAULT_MAX_CONTEXT: usize = 136 * 1024;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    #[default]
    Oracle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub backoff_multiplier: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            initial_backoff_ms: 1000,
            backoff_multiplier: 2,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based).
    pub fn backoff_ms(&self, retry: u32) -> u64 {
        let factor = u64::from(self.backoff_multiplier.max(1)).saturating_pow(retry.saturating_sub(1));
        self.initial_backoff_ms.saturating_mul(factor)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub model_name: String,
    pub temperature: f64,
    /// Context length `L` in tokens.
    pub max_context: usize,
    pub retry: RetryPolicy,
    pub timeout_ms: u64,
    /// Concurrent in-flight requests per backend instance.
    pub max_concurrency: usize,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Oracle,
            endpoint: None,
            model_name: "oracle".into(),
            temperature: 0.0,
            max_context: DEFAULT_MAX_CONTEXT,
            retry: RetryPolicy::default(),
            timeout_ms: 120_000,
            max_concurrency: 8,
        }
    }
}

impl BackendConfig {
    pub fn oracle(max_context: usize) -> Self {
        Self {
            max_context,
            ..Self::default()
        }
    }

    pub fn http(endpoint: impl Into<String>, model_name: impl Into<String>, max_context: usize) -> Self {
        Self {
            kind: BackendKind::Http,
            endpoint: Some(endpoint.into()),
            model_name: model_name.into(),
            max_context,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let bad = |m: String| Err(BackendError::Config(m));
        if self.max_context == 0 {
            return bad("max_context must be positive".into());
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return bad(format!("temperature must be finite and >= 0, got {}", self.temperature));
        }
        if self.retry.max_attempts == 0 {
            return bad("retry.max_attempts must be at least 1".into());
        }
        if self.max_concurrency == 0 {
            return bad("max_concurrency must be at least 1".into());
        }
        if self.kind == BackendKind::Http && self.endpoint.as_deref().is_none_or(str::is_empty) {
            return bad("http backend needs an endpoint".into());
        }
        Ok(())
    }
}

/// Backend settings per agent role. Rating falls back to the seeking backend.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoleBackends {
    pub seeking: BackendConfig,
    pub reasoning: BackendConfig,
    pub rating: Option<BackendConfig>,
}

impl RoleBackends {
    pub fn uniform(cfg: BackendConfig) -> Self {
        Self {
            seeking: cfg.clone(),
            reasoning: cfg,
            rating: None,
        }
    }

    pub fn rating(&self) -> &BackendConfig {
        self.rating.as_ref().unwrap_or(&self.seeking)
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        self.seeking.validate()?;
        self.reasoning.validate()?;
        self.rating().validate()
    }
}
