//! Campaign summary: a deterministic JSON record plus a text table.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use optfuzz_core::bandit::Strategy;
use optfuzz_core::oracle::VerdictKind;
use optfuzz_core::prompt::ReqFormat;
use serde::{Deserialize, Serialize};

use crate::Error;

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const TIMING_JSON: &str = "timing.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptReport {
    pub name: String,
    /// Directory and test-id prefix of this optimization's loop.
    pub key: String,
    pub id: String,
    pub blocked: Option<String>,
    pub tests: u64,
    pub triggering_tests: u64,
    /// Every pass hit by this loop's tests, with test counts.
    pub incidental: BTreeMap<String, u64>,
    pub first_trigger_iteration: Option<u32>,
    pub feedback_iterations: u32,
    pub pool_size: usize,
    pub invalid_tests: u64,
    pub backend_failures: u64,
    pub harness_failures: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugSummary {
    pub dedup_key: String,
    pub kind: VerdictKind,
    pub first_test_id: String,
    pub occurrences: u64,
    pub opt_context: BTreeSet<String>,
    pub dir: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Totals {
    /// Distinct passes triggered by any test.
    pub triggered_optimizations: usize,
    /// Loops whose own target was triggered.
    pub targets_hit: usize,
    pub triggering_tests: u64,
    pub tests: u64,
    pub invalid_tests: u64,
    pub backend_failures: u64,
    pub harness_failures: u64,
    pub blocked_optimizations: usize,
}

/// Holds no wall-clock data, so identical campaigns give identical bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub sut: String,
    pub strategy: Strategy,
    pub requirement_format: ReqFormat,
    pub iterations: u32,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizations: Vec<OptReport>,
    pub triggered: BTreeSet<String>,
    pub totals: Totals,
    pub bugs: Vec<BugSummary>,
}

impl CampaignReport {
    pub fn exit_code(&self, fail_on_bugs: bool) -> i32 {
        i32::from(fail_on_bugs && !self.bugs.is_empty())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Timing {
    /// Seconds spent in each loop, by loop key.
    pub per_opt: BTreeMap<String, f64>,
    pub wall_seconds: f64,
}

impl Timing {
    pub fn load(dir: &Path) -> Option<Self> {
        let text = std::fs::read_to_string(dir.join(TIMING_JSON)).ok()?;
        serde_json::from_str(&text).ok()
    }
}

/// One row per optimization and a totals row.
pub fn render_table(r: &CampaignReport, timing: Option<&Timing>) -> String {
    let secs = |key: &str| {
        timing
            .and_then(|t| t.per_opt.get(key))
            .map_or_else(|| "-".to_string(), |s| format!("{s:.1}"))
    };
    let name_w = r
        .optimizations
        .iter()
        .map(|o| o.name.len())
        .chain([12])
        .max()
        .unwrap_or(12);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<name_w$}  {:>9}  {:>16}  {:>7}  {:>8}",
        "Optimization", "Triggered", "Triggering tests", "Tests", "Time (s)"
    );
    let _ = writeln!(out, "{}", "-".repeat(name_w + 50));
    for o in &r.optimizations {
        let hit = match (&o.blocked, o.triggering_tests) {
            (Some(_), _) => "blocked",
            (None, 0) => "no",
            (None, _) => "yes",
        };
        let _ = writeln!(
            out,
            "{:<name_w$}  {:>9}  {:>16}  {:>7}  {:>8}",
            o.name,
            hit,
            o.triggering_tests,
            o.tests,
            secs(&o.key)
        );
    }
    let _ = writeln!(out, "{}", "-".repeat(name_w + 50));
    let total_time = timing.map_or_else(|| "-".to_string(), |t| format!("{:.1}", t.wall_seconds));
    let _ = writeln!(
        out,
        "{:<name_w$}  {:>9}  {:>16}  {:>7}  {:>8}",
        "Total", r.totals.triggered_optimizations, r.totals.triggering_tests, r.totals.tests, total_time
    );
    if r.bugs.is_empty() {
        let _ = writeln!(out, "\nNo bugs filed.");
    } else {
        let _ = writeln!(out, "\nBugs ({}):", r.bugs.len());
        for b in &r.bugs {
            let _ = writeln!(
                out,
                "  {}  x{}  first {}  in {}",
                b.dedup_key, b.occurrences, b.first_test_id, b.dir
            );
        }
    }
    out
}

/// Reads a finished campaign's report.
pub fn load(dir: &Path) -> Result<CampaignReport, Error> {
    let path = dir.join(REPORT_JSON);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Corrupt(format!("{}: {e} (not a finished campaign?)", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Corrupt(format!("{}: {e}", path.display())))
}
