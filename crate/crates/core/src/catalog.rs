//! Collected optimization passes.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::extract::FunctionSpan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptKind {
    CheckFunction,
    PatternMatcher,
    Generic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceFamily {
    BraceDelimited,
    IndentDelimited,
}

impl SourceFamily {
    /// Picks the family from a file extension; `None` for unknown files.
    pub fn from_extension(ext: &str) -> Option<Self> {
        match ext {
            "py" | "pyi" => Some(Self::IndentDelimited),
            "rs" | "c" | "h" | "cc" | "cpp" | "cxx" | "hpp" | "hh" | "inc" | "java" | "js"
            | "ts" | "go" | "cu" | "td" => Some(Self::BraceDelimited),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuxSource {
    pub name: String,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Optimization {
    /// Stable hash of `file_path` and `name`.
    pub id: String,
    pub name: String,
    pub kind: OptKind,
    pub main_source: String,
    pub aux_sources: Vec<AuxSource>,
    pub file_path: String,
    /// 1-based inclusive line range of `main_source` in `file_path`.
    pub line_span: (usize, usize),
    pub total_lines: usize,
}

pub fn count_lines(s: &str) -> usize {
    s.lines().count()
}

pub fn stable_id(file_path: &str, name: &str) -> String {
    crate::hash::short_hex(format!("{file_path}::{name}").as_bytes())
}

/// Heuristic kind: pattern-matcher registrations, boolean check helpers,
/// everything else generic.
pub fn classify_kind(name: &str, body: &str) -> OptKind {
    let lname = name.to_ascii_lowercase();
    let lbody = body.to_ascii_lowercase();
    if lbody.contains("register_replacement")
        || lbody.contains("register_graph_pattern")
        || lbody.contains("patternmatcher")
        || lname.contains("pattern")
    {
        OptKind::PatternMatcher
    } else if ["should_", "can_", "check_", "is_"].iter().any(|p| lname.starts_with(p))
        || lname.ends_with("_check")
    {
        OptKind::CheckFunction
    } else {
        OptKind::Generic
    }
}

impl Optimization {
    pub fn from_function(file_path: &str, f: &FunctionSpan) -> Self {
        let mut opt = Self {
            id: stable_id(file_path, &f.name),
            name: f.name.clone(),
            kind: classify_kind(&f.name, &f.body),
            main_source: f.body.clone(),
            aux_sources: Vec::new(),
            file_path: file_path.into(),
            line_span: (f.start_line, f.end_line),
            total_lines: 0,
        };
        opt.recount();
        opt
    }

    pub fn recount(&mut self) {
        self.total_lines = count_lines(&self.main_source)
            + self
                .aux_sources
                .iter()
                .map(|a| count_lines(&a.source))
                .sum::<usize>();
    }

    /// Main source followed by every auxiliary function.
    pub fn full_source(&self) -> String {
        let mut s = self.main_source.clone();
        for aux in &self.aux_sources {
            if !s.ends_with('\n') {
                s.push('\n');
            }
            s.push('\n');
            s.push_str(&aux.source);
        }
        s
    }

    pub fn without_aux(&self) -> Self {
        let mut o = self.clone();
        o.aux_sources.clear();
        o.recount();
        o
    }
}
