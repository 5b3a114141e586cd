use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backend::{CostModel, OracleConfig, RoleBackends};
use crate::baselines::BaselineConfig;
use crate::knowledge::Language;
use crate::reason::ScheduleVariant;
use crate::sync::RankingMode;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Extagents,
    Direct,
    ChainOfAgents,
    LlmMapreduce,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Extagents,
        Method::Direct,
        Method::ChainOfAgents,
        Method::LlmMapreduce,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Extagents => "extagents",
            Method::Direct => "direct",
            Method::ChainOfAgents => "chain_of_agents",
            Method::LlmMapreduce => "llm_mapreduce",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        Method::ALL.into_iter().find(|m| m.as_str() == norm).ok_or_else(|| {
            format!("unknown method `{s}` (expected extagents, direct, chain_of_agents or llm_mapreduce)")
        })
    }
}

/// Everything that determines a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    /// Knowledge is truncated to this many tokens before partitioning.
    pub input_budget: usize,
    pub chunk_size: usize,
    /// Maximum synchronization timesteps `T`.
    pub max_timesteps: usize,
    /// Maximum schedule length `S`.
    pub schedule_cap: usize,
    pub schedule_variant: ScheduleVariant,
    /// Run the full schedule in every round instead of only the first.
    pub accumulate_every_round: bool,
    pub interleaved: bool,
    pub ranking_mode: RankingMode,
    pub chunk_exclusion: bool,
    pub role_backends: RoleBackends,
    pub seed: u64,
    /// Forces the language instead of using each sample's.
    pub language: Option<Language>,
    /// Overrides the per-language chars-per-token rate.
    pub chars_per_token: Option<f64>,
    pub workers: usize,
    pub baseline: BaselineConfig,
    pub cost_model: CostModel,
    pub oracle: OracleConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::Extagents,
            input_budget: 1024 * 1024,
            chunk_size: 128 * 1024,
            max_timesteps: 5,
            schedule_cap: 5,
            schedule_variant: ScheduleVariant::FromOne,
            accumulate_every_round: false,
            interleaved: false,
            ranking_mode: RankingMode::LlmRated,
            chunk_exclusion: false,
            role_backends: RoleBackends::default(),
            seed: 0,
            language: None,
            chars_per_token: None,
            workers: 4,
            baseline: BaselineConfig::default(),
            cost_model: CostModel::GPT_4O_MINI,
            oracle: OracleConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.role_backends.validate().map_err(|e| e.to_string())?;
        let l = self.role_backends.seeking.max_context;
        if self.chunk_size == 0 {
            return Err("chunk_size must be positive".into());
        }
        if self.chunk_size >= l {
            return Err(format!("chunk_size must be < max_context ({} >= {l})", self.chunk_size));
        }
        if self.input_budget == 0 {
            return Err("input_budget must be positive".into());
        }
        if self.max_timesteps == 0 {
            return Err("max_timesteps (T) must be at least 1".into());
        }
        if self.schedule_cap == 0 {
            return Err("schedule_cap (S) must be at least 1".into());
        }
        if self.workers == 0 {
            return Err("workers must be at least 1".into());
        }
        if self.interleaved && self.method != Method::Extagents {
            return Err("interleaved applies only to the extagents method".into());
        }
        if self.interleaved && self.ranking_mode != RankingMode::RetrievalPriority {
            return Err("interleaved needs ranking_mode = retrieval_priority".into());
        }
        if let Some(r) = self.chars_per_token {
            if !r.is_finite() || r <= 0.0 {
                return Err(format!("chars_per_token must be positive, got {r}"));
            }
        }
        self.baseline.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn chunk_must_fit_context() {
        let mut c = RunConfig {
            chunk_size: 256 * 1024,
            ..RunConfig::default()
        };
        c.role_backends.seeking.max_context = 128 * 1024;
        assert!(c.validate().unwrap_err().contains("chunk_size must be < max_context"));
    }

    #[test]
    fn interleaving_needs_rank_order() {
        let mut c = RunConfig {
            interleaved: true,
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
        c.ranking_mode = RankingMode::RetrievalPriority;
        c.validate().unwrap();
    }

    #[test]
    fn method_names() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert_eq!("chain-of-agents".parse::<Method>().unwrap(), Method::ChainOfAgents);
        assert!("longagent".parse::<Method>().is_err());
    }

    #[test]
    fn toml_like_roundtrip() {
        let c = RunConfig::default();
        let j = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&j).unwrap(), c);
    }
}
