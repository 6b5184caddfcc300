//! Contract types shared by every system under test.

use alloc::string::String;
use alloc::vec::Vec;
use core::time::Duration;

use serde::{Deserialize, Serialize};

use crate::program::TestProgram;

/// Prefix of instrumentation lines on stderr.
pub const TRIGGER_PREFIX: &str = "WFOPT ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Optimized,
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompileStatus {
    #[default]
    Ok,
    CompileCrash,
    CompileReject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    #[default]
    Ok,
    RunCrash,
    Timeout,
    NotRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SutDescriptor {
    pub name: String,
    pub input_kind: String,
    pub input_spec: String,
    pub source_roots: Vec<String>,
    pub opt_keywords: Vec<String>,
    #[serde(default)]
    pub max_source_lines: Option<usize>,
}

impl SutDescriptor {
    pub fn validate(&self) -> Result<(), &'static str> {
        if self.source_roots.is_empty() {
            return Err("source_roots must not be empty");
        }
        if self.opt_keywords.is_empty() {
            return Err("opt_keywords must not be empty");
        }
        if self.max_source_lines == Some(0) {
            return Err("max_source_lines must be positive");
        }
        Ok(())
    }

    pub fn minilang() -> Self {
        Self {
            name: "MiniLang".into(),
            input_kind: "MiniLang program".into(),
            input_spec: "public MiniLang builtins (print, fma, repeat, str, len)".into(),
            source_roots: alloc::vec!["crates/core/src/minilang/passes".into()],
            opt_keywords: ["fuse", "fold", "elim", "simplif"]
                .iter()
                .map(|s| String::from(*s))
                .collect(),
            max_source_lines: Some(400),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRequest {
    pub program: TestProgram,
    pub mode: RunMode,
    pub time_limit: Duration,
    pub memory_limit: u64,
}

impl RunRequest {
    pub fn new(program: TestProgram, mode: RunMode) -> Self {
        Self {
            program,
            mode,
            time_limit: Duration::from_secs(10),
            memory_limit: 1 << 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunResult {
    pub compile_status: CompileStatus,
    pub run_status: RunStatus,
    #[serde(with = "crate::bytes_text")]
    pub stdout: Vec<u8>,
    #[serde(with = "crate::bytes_text")]
    pub stderr: Vec<u8>,
    pub trigger_log: Vec<String>,
    pub exit_signal: Option<i32>,
    pub exit_code: Option<i32>,
    /// Set when stdout or stderr hit the output cap.
    #[serde(default)]
    pub truncated: bool,
}

impl RunResult {
    pub fn is_ok(&self) -> bool {
        self.compile_status == CompileStatus::Ok && self.run_status == RunStatus::Ok
    }

    /// Checks the status invariants: `NotRun` exactly when compilation did
    /// not succeed, and no trigger lines from a rejected program.
    pub fn is_well_formed(&self) -> bool {
        let not_run = self.run_status == RunStatus::NotRun;
        let compiled = self.compile_status == CompileStatus::Ok;
        not_run != compiled
            && !(self.compile_status == CompileStatus::CompileReject && !self.trigger_log.is_empty())
    }

    pub fn stderr_text(&self) -> alloc::borrow::Cow<'_, str> {
        String::from_utf8_lossy(&self.stderr)
    }
}
