//! Orchestration engine for question answering over external knowledge that
//! exceeds a model's context window.

pub mod backend;
pub mod baselines;
mod context;
pub mod eval;
pub mod knowledge;
pub mod orchestrator;
pub mod reason;
pub mod sync;
pub mod synth;
pub mod trace;

pub use context::CallContext;
pub use orchestrator::{Engine, Method, RunConfig, RunError, RunFailure, RunResult};
