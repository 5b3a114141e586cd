//! Layered configuration: built-in defaults, then a TOML file, then flags.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::de::DeserializeOwned;
use serde::Deserialize;

use extagents_core::backend::{BackendConfig, BackendKind};
use extagents_core::eval::FilterConfig;
use extagents_core::knowledge::{parse_token_count, Language};
use extagents_core::sync::RankingMode;
use extagents_core::{Method, RunConfig};

/// Keys whose values may be written as token quantities such as `"128k"`.
const TOKEN_KEYS: &[&str] = &[
    "input_budget",
    "chunk_size",
    "max_context",
    "message_budget",
    "reading_budget",
    "window",
    "keep_over",
    "input_lengths",
];

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub dataset: Option<PathBuf>,
    pub world: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub audit: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub runs: usize,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self { runs: 3 }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub input_lengths: Vec<usize>,
    pub methods: Vec<Method>,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            input_lengths: [8, 16, 32, 64, 128, 256, 512].iter().map(|k| k * 1024).collect(),
            methods: vec![
                Method::Extagents,
                Method::Direct,
                Method::ChainOfAgents,
                Method::LlmMapreduce,
            ],
        }
    }
}

/// The whole configuration document.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub run: RunConfig,
    pub filter: FilterConfig,
    pub paths: Paths,
    pub evaluate: EvaluateSection,
    pub bench: BenchSection,
}

impl Settings {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut value: toml::Value = toml::from_str(text)?;
        expand_token_counts(&mut value, None)?;
        Ok(value.try_into()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("config {}", path.display()))
    }
}

fn expand_token_counts(v: &mut toml::Value, key: Option<&str>) -> Result<()> {
    match v {
        toml::Value::Table(t) => {
            for (k, child) in t.iter_mut() {
                expand_token_counts(child, Some(k))?;
            }
        }
        toml::Value::Array(items) => {
            for item in items {
                expand_token_counts(item, key)?;
            }
        }
        toml::Value::String(s) if key.is_some_and(|k| TOKEN_KEYS.contains(&k)) => {
            let n = parse_token_count(s).map_err(|e| anyhow::anyhow!("{}: {e}", key.unwrap_or_default()))?;
            *v = toml::Value::Integer(i64::try_from(n)?);
        }
        _ => {}
    }
    Ok(())
}

pub fn token_count(s: &str) -> Result<usize, String> {
    parse_token_count(s)
}

/// Parses a snake_case enum value; dashes are accepted for underscores.
pub fn snake<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    let norm = s.trim().to_ascii_lowercase().replace('-', "_");
    serde_json::from_value(serde_json::Value::String(norm)).map_err(|_| format!("unrecognized value `{s}`"))
}

/// Flags shared by every verb that builds an engine.
#[derive(Args, Clone, Debug, Default)]
pub struct Overrides {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = |s: &str| s.parse::<Method>())]
    pub method: Option<Method>,
    /// Knowledge is truncated to this many tokens (e.g. 1024k).
    #[arg(long, value_parser = token_count)]
    pub input_length: Option<usize>,
    #[arg(long, value_parser = token_count)]
    pub chunk_size: Option<usize>,
    /// Synchronization timesteps (T).
    #[arg(long)]
    pub max_timesteps: Option<usize>,
    /// Longest reasoning schedule (S).
    #[arg(long)]
    pub schedule_cap: Option<usize>,
    #[arg(long)]
    pub interleaved: bool,
    #[arg(long, value_parser = snake::<RankingMode>)]
    pub ranking_mode: Option<RankingMode>,
    #[arg(long)]
    pub chunk_exclusion: bool,
    #[arg(long, value_parser = snake::<Language>)]
    pub language: Option<Language>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Backend for every role: oracle or http.
    #[arg(long, value_parser = snake::<BackendKind>)]
    pub backend: Option<BackendKind>,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Context length L of every role.
    #[arg(long, value_parser = token_count)]
    pub max_context: Option<usize>,
    /// Oracle reasoning prompts read only this many leading tokens.
    #[arg(long, value_parser = token_count)]
    pub reading_budget: Option<usize>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Oracle world file.
    #[arg(long)]
    pub world: Option<PathBuf>,
    /// Directory of prompt templates.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

impl Overrides {
    /// Defaults, then the config file, then these flags.
    pub fn resolve(&self) -> Result<Settings> {
        let mut s = match &self.config {
            Some(p) => Settings::load(p)?,
            None => Settings::default(),
        };
        self.apply(&mut s);
        Ok(s)
    }

    fn apply(&self, s: &mut Settings) {
        let run = &mut s.run;
        set(&mut run.method, self.method);
        set(&mut run.input_budget, self.input_length);
        set(&mut run.chunk_size, self.chunk_size);
        set(&mut run.max_timesteps, self.max_timesteps);
        set(&mut run.schedule_cap, self.schedule_cap);
        set(&mut run.ranking_mode, self.ranking_mode);
        set(&mut run.workers, self.workers);
        set(&mut run.seed, self.seed);
        run.interleaved |= self.interleaved;
        run.chunk_exclusion |= self.chunk_exclusion;
        if self.language.is_some() {
            run.language = self.language;
        }
        if self.reading_budget.is_some() {
            run.oracle.reading_budget = self.reading_budget;
        }
        let roles = &mut run.role_backends;
        let mut each = |f: &dyn Fn(&mut BackendConfig)| {
            f(&mut roles.seeking);
            f(&mut roles.reasoning);
            if let Some(r) = roles.rating.as_mut() {
                f(r);
            }
        };
        if let Some(kind) = self.backend {
            each(&|b| b.kind = kind);
        }
        if let Some(e) = &self.endpoint {
            each(&|b| b.endpoint = Some(e.clone()));
        }
        if let Some(m) = &self.model {
            each(&|b| b.model_name = m.clone());
        }
        if let Some(l) = self.max_context {
            each(&|b| b.max_context = l);
        }
        let paths = &mut s.paths;
        set_path(&mut paths.dataset, &self.dataset);
        set_path(&mut paths.world, &self.world);
        set_path(&mut paths.templates, &self.templates);
        set_path(&mut paths.output, &self.output);
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<PathBuf>, v: &Option<PathBuf>) {
    if v.is_some() {
        slot.clone_from(v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_suffixes_in_file() {
        let s = Settings::from_toml(
            r#"
            [run]
            chunk_size = "16k"
            input_budget = 65536
            [run.role_backends.seeking]
            max_context = "32k"
            [bench]
            input_lengths = ["8k", 16384]
            "#,
        )
        .unwrap();
        assert_eq!(s.run.chunk_size, 16 * 1024);
        assert_eq!(s.run.input_budget, 64 * 1024);
        assert_eq!(s.run.role_backends.seeking.max_context, 32 * 1024);
        assert_eq!(s.bench.input_lengths, [8192, 16384]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = Settings::from_toml("[run]\nchunk_sise = 5\n").unwrap_err();
        assert!(format!("{err:#}").contains("chunk_sise"), "{err:#}");
    }

    #[test]
    fn flags_beat_file_beat_defaults() {
        let mut s = Settings::from_toml("[run]\nmax_timesteps = 2\nschedule_cap = 3\n").unwrap();
        let o = Overrides {
            max_timesteps: Some(7),
            ..Overrides::default()
        };
        o.apply(&mut s);
        assert_eq!(s.run.max_timesteps, 7);
        assert_eq!(s.run.schedule_cap, 3);
        assert_eq!(s.run.chunk_size, RunConfig::default().chunk_size);
    }

    #[test]
    fn enum_values() {
        assert_eq!(
            snake::<RankingMode>("retrieval-priority"),
            Ok(RankingMode::RetrievalPriority)
        );
        assert_eq!(snake::<Language>("ZH"), Ok(Language::Zh));
        assert!(snake::<BackendKind>("grpc").is_err());
    }
}
