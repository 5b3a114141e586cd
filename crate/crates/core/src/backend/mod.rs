//! Model calls: configuration, prompt templates, the HTTP and oracle
//! transports, usage accounting and cost.

mod client;
mod config;
mod cost;
pub mod http;
pub mod oracle;
mod sentinel;
pub mod template;

pub use client::{complete, Completion, CompletionBackend, ModelClient, RoleClients};
pub use config::{BackendConfig, BackendKind, RetryPolicy, RoleBackends, DEFAULT_MAX_CONTEXT};
pub use cost::{estimate_cost, CompletionUsage, Cost, CostModel};
pub use http::HttpBackend;
pub use oracle::{Fact, LatencyModel, OracleBackend, OracleConfig, World, WorldQuestion};
pub use sentinel::{is_no_answer, is_no_information, is_sentinel, NO_ANSWER, NO_INFORMATION};
pub use template::{
    iteration_label, render, Bindings, PromptTemplate, TaskFamily, TemplateError, TemplateKind, TemplateLibrary,
    TemplateSet,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("prompt of {prompt_tokens} tokens does not fit max_context {max_context}")]
    Budget { prompt_tokens: usize, max_context: usize },
    #[error("transport failed after {attempts} attempt(s){}: {message}", status.map(|s| format!(" (last status {s})")).unwrap_or_default())]
    Transport {
        attempts: u32,
        status: Option<u16>,
        message: String,
    },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("oracle: {0}")]
    Oracle(String),
}
