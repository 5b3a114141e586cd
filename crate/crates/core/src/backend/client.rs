use std::fmt;
use std::sync::Arc;

use super::{BackendConfig, BackendError, BackendKind, CompletionUsage, HttpBackend, OracleBackend, RoleBackends};
use crate::knowledge::TokenCounter;

/// One model reply.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub usage: CompletionUsage,
    /// Wall time of the call in microseconds; modeled for the oracle.
    pub elapsed_us: u64,
}

/// Transport for completion requests. Budget checks happen in
/// [`ModelClient`] before a backend is reached.
pub trait CompletionBackend: Send + Sync {
    fn send(&self, cfg: &BackendConfig, prompt: &str, counter: &TokenCounter) -> Result<Completion, BackendError>;
}

/// A configured backend for one role.
#[derive(Clone)]
pub struct ModelClient {
    config: BackendConfig,
    backend: Arc<dyn CompletionBackend>,
}

impl fmt::Debug for ModelClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelClient")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl ModelClient {
    pub fn new(config: BackendConfig, backend: Arc<dyn CompletionBackend>) -> Self {
        Self { config, backend }
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    pub fn max_context(&self) -> usize {
        self.config.max_context
    }

    /// Sends `prompt`. A prompt of `max_context` tokens or more is refused
    /// without touching the backend.
    pub fn complete(&self, prompt: &str, counter: &TokenCounter) -> Result<Completion, BackendError> {
        let tokens = counter.count(prompt);
        if tokens >= self.config.max_context {
            return Err(BackendError::Budget {
                prompt_tokens: tokens,
                max_context: self.config.max_context,
            });
        }
        self.backend.send(&self.config, prompt, counter)
    }
}

/// Free-function form of [`ModelClient::complete`].
pub fn complete(client: &ModelClient, prompt: &str, counter: &TokenCounter) -> Result<Completion, BackendError> {
    client.complete(prompt, counter)
}

#[derive(Clone, Debug)]
pub struct RoleClients {
    pub seeking: ModelClient,
    pub reasoning: ModelClient,
    pub rating: ModelClient,
}

impl RoleClients {
    /// Same backend for every role.
    pub fn uniform(client: ModelClient) -> Self {
        Self {
            seeking: client.clone(),
            reasoning: client.clone(),
            rating: client,
        }
    }

    /// Builds clients for `roles`. Oracle roles share `oracle`, which must be
    /// given when any role uses it.
    pub fn from_config(roles: &RoleBackends, oracle: Option<Arc<OracleBackend>>) -> Result<Self, BackendError> {
        roles.validate()?;
        let build = |cfg: &BackendConfig| -> Result<ModelClient, BackendError> {
            let backend: Arc<dyn CompletionBackend> = match cfg.kind {
                BackendKind::Oracle => oracle
                    .clone()
                    .ok_or_else(|| BackendError::Config("oracle backend selected but no world loaded".into()))?,
                BackendKind::Http => Arc::new(HttpBackend::new(cfg)?),
            };
            Ok(ModelClient::new(cfg.clone(), backend))
        };
        Ok(Self {
            seeking: build(&roles.seeking)?,
            reasoning: build(&roles.reasoning)?,
            rating: build(roles.rating())?,
        })
    }
}
