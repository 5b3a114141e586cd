//! End-to-end runs: the synchronize-then-reason loop, its interleaved
//! variant, and dispatch to the baseline methods.

mod config;
mod extagents;
mod record;

pub use config::{Method, RunConfig};
pub(crate) use extagents::prepare_chunks;
pub use extagents::{run_extagents, run_interleaved};
pub use record::{read_results, write_results, ResultRecord, RESULT_SCHEMA};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, OracleBackend, RoleClients, TaskFamily, TemplateError, TemplateLibrary, World};
use crate::baselines;
use crate::context::CallContext;
use crate::knowledge::{CharsPerToken, KnowledgeError, KnowledgeSource, Language, Sample, SourceKind, TokenCounter};
use crate::reason::{ReasonError, ReasoningOutcome};
use crate::sync::SyncError;
use crate::trace::{Totals, Trace, TraceError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RunFailure {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("knowledge: {0}")]
    Knowledge(String),
    #[error(transparent)]
    Sync(#[from] SyncError),
    #[error(transparent)]
    Reason(#[from] ReasonError),
    #[error("{0}")]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

impl From<KnowledgeError> for RunFailure {
    fn from(e: KnowledgeError) -> Self {
        match e {
            KnowledgeError::Config(m) => RunFailure::Config(m),
            other => RunFailure::Knowledge(other.to_string()),
        }
    }
}

/// A failed run with whatever was traced before the failure.
#[derive(Debug, Clone, thiserror::Error)]
#[error("{failure}")]
pub struct RunError {
    pub failure: RunFailure,
    pub partial_trace: Trace,
}

impl RunError {
    pub fn new(failure: impl Into<RunFailure>, partial_trace: Trace) -> Self {
        Self {
            failure: failure.into(),
            partial_trace,
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(RunFailure::Config(message.into()), Trace::new())
    }

    pub fn is_config(&self) -> bool {
        matches!(self.failure, RunFailure::Config(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunResult {
    pub method: Method,
    pub answer: String,
    pub outcome: ReasoningOutcome,
    /// Number of chunks the knowledge was split into.
    pub chunks: usize,
    pub trace: Trace,
    pub totals: Totals,
}

/// A configured engine: backends, templates and a worker pool.
pub struct Engine {
    config: RunConfig,
    clients: RoleClients,
    templates: TemplateLibrary,
    pool: rayon::ThreadPool,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl Engine {
    pub fn new(config: RunConfig, clients: RoleClients, templates: TemplateLibrary) -> Result<Self, RunError> {
        config.validate().map_err(RunError::config)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .thread_name(|i| format!("extagents-{i}"))
            .build()
            .map_err(|e| RunError::config(format!("worker pool: {e}")))?;
        Ok(Self {
            config,
            clients,
            templates,
            pool,
        })
    }

    /// Engine whose roles are built from `config.role_backends`; oracle roles
    /// answer from `world`.
    pub fn from_config(config: RunConfig, world: Option<World>, templates: TemplateLibrary) -> Result<Self, RunError> {
        config.validate().map_err(RunError::config)?;
        let oracle = match world {
            Some(w) => Some(Arc::new(
                OracleBackend::new(w, templates.clone(), config.oracle.clone())
                    .map_err(|e| RunError::config(e.to_string()))?,
            )),
            None => None,
        };
        let clients =
            RoleClients::from_config(&config.role_backends, oracle).map_err(|e| RunError::config(e.to_string()))?;
        Self::new(config, clients, templates)
    }

    /// All roles on the oracle with built-in templates.
    pub fn with_oracle(config: RunConfig, world: World) -> Result<Self, RunError> {
        Self::from_config(config, Some(world), TemplateLibrary::builtin())
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn clients(&self) -> &RoleClients {
        &self.clients
    }

    pub fn templates(&self) -> &TemplateLibrary {
        &self.templates
    }

    /// Runs `f` on this engine's worker pool.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }

    pub fn counter_for(&self, language: Language) -> TokenCounter {
        match self.config.chars_per_token {
            Some(r) => TokenCounter::approximate(CharsPerToken::from_f64(r).expect("validated rate")),
            None => TokenCounter::for_language(language),
        }
    }

    pub fn run_sample(&self, sample: &Sample) -> Result<RunResult, RunError> {
        let language = self.config.language.unwrap_or(sample.language);
        let counter = self.counter_for(language);
        let source = sample.to_source(&counter).map_err(|e| RunError::new(e, Trace::new()))?;
        self.run_query(&sample.question, &source, language)
    }

    /// Runs the configured method on one query.
    pub fn run_query(
        &self,
        question: &str,
        source: &KnowledgeSource,
        language: Language,
    ) -> Result<RunResult, RunError> {
        let counter = self.counter_for(language);
        let family = match source.kind() {
            SourceKind::LongDocument => TaskFamily::LongDocument,
            SourceKind::RetrievedCorpus => TaskFamily::OpenDomain,
        };
        let ctx = CallContext {
            question,
            templates: self.templates.get(family, language),
            clients: &self.clients,
            counter: &counter,
        };
        let cfg = &self.config;
        let mut trace = Trace::new();
        let run = self.pool.install(|| match cfg.method {
            Method::Extagents if cfg.interleaved => run_interleaved(&ctx, source, cfg, &mut trace),
            Method::Extagents => run_extagents(&ctx, source, cfg, &mut trace),
            Method::Direct => baselines::run_direct(&ctx, source, cfg, &mut trace),
            Method::ChainOfAgents => baselines::run_chain_of_agents(&ctx, source, cfg, &mut trace),
            Method::LlmMapreduce => baselines::run_llm_mapreduce(&ctx, source, cfg, &mut trace),
        });
        let (outcome, chunks) = match run {
            Ok(v) => v,
            Err(failure) => return Err(RunError::new(failure, trace)),
        };
        let totals = match trace.totals(&cfg.cost_model) {
            Ok(t) => t,
            Err(e) => return Err(RunError::new(e, trace)),
        };
        Ok(RunResult {
            method: cfg.method,
            answer: outcome.answer.clone().unwrap_or_default(),
            outcome,
            chunks,
            trace,
            totals,
        })
    }
}

/// Longest dependency chain of `trace`, in calls.
pub fn critical_path_rounds(trace: &Trace) -> Result<u64, TraceError> {
    trace.critical_path_rounds()
}
