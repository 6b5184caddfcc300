//! Campaign configuration: one TOML file, layered over built-in defaults,
//! with `key=value` overrides on top.

use std::path::Path;

use optfuzz_core::bandit::Strategy;
use optfuzz_core::model::{ModelRole, StubConfig};
use optfuzz_core::oracle::OracleConfig;
use optfuzz_core::prompt::{ContextBudget, ReqFormat};
use optfuzz_core::sut::SutDescriptor;
use serde::{Deserialize, Serialize};

use crate::collect::{CollectOptions, KeywordMode};
use crate::gateway::HttpConfig;
use crate::sut::Manifest;

pub const DEFAULT_ITERATIONS: u32 = 100;
pub const MINI_ITERATIONS: u32 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub iterations: u32,
    pub batch_size: usize,
    /// Examples shown in a feedback prompt.
    pub feedback_examples: usize,
    pub strategy: Strategy,
    pub requirement_format: ReqFormat,
    /// Root of every derived RNG stream.
    pub seed: u64,
    /// Optimization loops run at once; 0 means one per CPU.
    pub workers: usize,
    /// Let triggering tests seed the pools of passes they hit incidentally.
    pub share_incidental: bool,
    /// Upper bound on arms per pool; absent means unbounded.
    pub pool_cap: Option<usize>,
    /// Exit with status 1 when bugs were filed.
    pub fail_on_bugs: bool,
    pub time_limit_ms: u64,
    pub memory_limit_mb: u64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            iterations: DEFAULT_ITERATIONS,
            batch_size: 10,
            feedback_examples: 3,
            strategy: Strategy::Thompson,
            requirement_format: ReqFormat::Mixed,
            seed: 0,
            workers: 0,
            share_incidental: false,
            pool_cap: None,
            fail_on_bugs: true,
            time_limit_ms: 10_000,
            memory_limit_mb: 1024,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SutKind {
    #[default]
    Minilang,
    Manifest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SutConfig {
    pub kind: SutKind,
    /// MiniLang only.
    pub planted_bugs: bool,
    /// MiniLang only: collect from the pass sources built into the binary
    /// instead of walking `descriptor.source_roots`.
    pub embedded_sources: bool,
    /// MiniLang only: interpreter step budget before a run counts as a
    /// timeout.
    pub fuel: u64,
    pub keyword_mode: KeywordMode,
    pub aux_depth: usize,
    pub descriptor: SutDescriptor,
    pub manifest: Option<Manifest>,
}

impl Default for SutConfig {
    fn default() -> Self {
        Self {
            kind: SutKind::Minilang,
            planted_bugs: false,
            embedded_sources: true,
            fuel: optfuzz_core::minilang::ExecLimits::default().fuel,
            keyword_mode: KeywordMode::Substring,
            aux_depth: 1,
            descriptor: SutDescriptor::minilang(),
            manifest: None,
        }
    }
}

impl SutConfig {
    pub fn collect_options(&self) -> CollectOptions {
        CollectOptions {
            keyword_mode: self.keyword_mode,
            aux_depth: self.aux_depth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelsConfig {
    pub analysis: ModelRole,
    pub generation: ModelRole,
}

impl Default for ModelsConfig {
    fn default() -> Self {
        Self {
            analysis: ModelRole::analysis("stub"),
            generation: ModelRole::generation("stub"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    pub context_tokens: usize,
    pub chars_per_token: f64,
    /// Fence tag preferred when a completion holds several code blocks.
    pub code_tag: String,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            context_tokens: 8192,
            chars_per_token: 4.0,
            code_tag: String::new(),
        }
    }
}

impl PromptConfig {
    pub fn budget(&self) -> ContextBudget {
        ContextBudget::from_tokens(self.context_tokens, self.chars_per_token)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub campaign: CampaignConfig,
    pub sut: SutConfig,
    pub models: ModelsConfig,
    pub stub: StubConfig,
    pub http: HttpConfig,
    pub oracle: OracleConfig,
    pub prompt: PromptConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("bad override `{0}` (expected key=value)")]
    BadOverride(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Profile {
    /// 100 iterations per optimization.
    #[default]
    Default,
    /// 10 iterations per optimization.
    Mini,
}

impl Profile {
    pub fn iterations(self) -> u32 {
        match self {
            Profile::Default => DEFAULT_ITERATIONS,
            Profile::Mini => MINI_ITERATIONS,
        }
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Parses an override value as a TOML literal, falling back to a string.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), ConfigError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::BadOverride(key.into()));
    }
    let mut t = table;
    for p in &parts[..parts.len() - 1] {
        let entry = t
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        t = match entry {
            toml::Value::Table(inner) => inner,
            _ => return Err(ConfigError::BadOverride(key.into())),
        };
    }
    t.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl Config {
    /// Layers `text` and then `overrides` over the defaults. Unknown keys
    /// anywhere are errors.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let file: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        let mut table = toml::Table::try_from(Config::default()).map_err(|e| ConfigError::Parse(e.to_string()))?;
        merge(&mut table, file);
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| ConfigError::BadOverride(o.clone()))?;
            set_path(&mut table, k.trim(), parse_value(v.trim()))?;
        }
        let config: Config = table.try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.into()));
        let c = &self.campaign;
        if c.iterations == 0 {
            return bad("campaign.iterations must be positive");
        }
        if c.batch_size == 0 {
            return bad("campaign.batch_size must be positive");
        }
        if c.feedback_examples == 0 {
            return bad("campaign.feedback_examples must be positive");
        }
        if c.time_limit_ms == 0 {
            return bad("campaign.time_limit_ms must be positive");
        }
        if c.pool_cap == Some(0) {
            return bad("campaign.pool_cap must be positive");
        }
        self.models.analysis.validate().map_err(|e| ConfigError::Invalid(format!("models.analysis: {e}")))?;
        self.models.generation.validate().map_err(|e| ConfigError::Invalid(format!("models.generation: {e}")))?;
        if self.models.generation.samples_per_call != c.batch_size {
            return bad("models.generation.samples_per_call must equal campaign.batch_size");
        }
        self.stub.validate().map_err(|e| ConfigError::Invalid(format!("stub: {e}")))?;
        self.sut.descriptor.validate().map_err(|e| ConfigError::Invalid(format!("sut.descriptor: {e}")))?;
        match (self.sut.kind, &self.sut.manifest) {
            (SutKind::Manifest, None) => return bad("sut.kind = \"manifest\" needs a [sut.manifest] table"),
            (SutKind::Manifest, Some(m)) => m.validate().map_err(ConfigError::Invalid)?,
            _ => {}
        }
        if let optfuzz_core::oracle::ComparisonPolicy::Numeric { rtol, atol } = self.oracle.policy {
            if !(rtol >= 0.0 && atol >= 0.0) {
                return bad("oracle tolerances must be non-negative");
            }
        }
        if self.prompt.chars_per_token.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) || self.prompt.context_tokens == 0 {
            return bad("prompt budget must be positive");
        }
        Ok(())
    }
}
