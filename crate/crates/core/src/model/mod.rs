//! Completion roles, the backend contract, and the seeded stub backend.

mod blocks;
pub mod stub;

pub use blocks::{extract_code_blocks, strip_prompt_echo, truncate_at_stop};
pub use stub::{StubBackend, StubConfig, StyleAggregate};

use alloc::string::String;
use alloc::vec::Vec;
use core::time::Duration;

use serde::{Deserialize, Serialize};

use crate::prompt::PromptBundle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleKind {
    Analysis,
    Generation,
}

pub const DEFAULT_MAX_OUTPUT: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelRole {
    pub role: RoleKind,
    /// Backend id: `stub`, `replay`, or `http`.
    pub endpoint: String,
    pub temperature: f64,
    pub samples_per_call: usize,
    /// Cap on each completion, in characters.
    pub max_output: usize,
}

impl ModelRole {
    /// Deterministic single-sample analysis.
    pub fn analysis(endpoint: &str) -> Self {
        Self {
            role: RoleKind::Analysis,
            endpoint: endpoint.into(),
            temperature: 0.0,
            samples_per_call: 1,
            max_output: DEFAULT_MAX_OUTPUT,
        }
    }

    /// Ten samples at temperature one.
    pub fn generation(endpoint: &str) -> Self {
        Self {
            role: RoleKind::Generation,
            endpoint: endpoint.into(),
            temperature: 1.0,
            samples_per_call: 10,
            max_output: DEFAULT_MAX_OUTPUT,
        }
    }

    pub fn validate(&self) -> Result<(), &'static str> {
        if self.samples_per_call == 0 {
            return Err("samples_per_call must be positive");
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err("temperature must be a finite non-negative number");
        }
        if self.max_output == 0 {
            return Err("max_output must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub texts: Vec<String>,
    pub backend_meta: String,
    pub latency: Duration,
    pub from_cache: bool,
    /// At least one text hit `max_output` and was cut.
    #[serde(default)]
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("no recorded completion for prompt {prompt_hash} (seed {seed})")]
    ReplayMiss { prompt_hash: String, seed: u64 },
    #[error("malformed backend response: {0}")]
    InvalidResponse(String),
}

pub trait CompletionBackend: Send + Sync {
    fn id(&self) -> &str;

    fn complete(
        &self,
        role: &ModelRole,
        prompt: &PromptBundle,
        seed: u64,
    ) -> Result<CompletionResult, ModelError>;
}

/// Cuts every text to `max_chars` characters; reports whether any was cut.
pub fn cap_texts(texts: &mut [String], max_chars: usize) -> bool {
    let mut cut = false;
    for t in texts {
        if let Some((idx, _)) = t.char_indices().nth(max_chars) {
            t.truncate(idx);
            cut = true;
        }
    }
    cut
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn role_defaults() {
        let a = ModelRole::analysis("stub");
        assert_eq!((a.temperature, a.samples_per_call), (0.0, 1));
        let g = ModelRole::generation("stub");
        assert_eq!((g.temperature, g.samples_per_call), (1.0, 10));
        assert!(g.validate().is_ok());
        let bad = ModelRole {
            samples_per_call: 0,
            ..g
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn capping() {
        let mut t = alloc::vec![String::from("héllo"), String::from("ok")];
        assert!(cap_texts(&mut t, 2));
        assert_eq!(t, ["hé", "ok"]);
        assert!(!cap_texts(&mut t, 5));
    }
}
