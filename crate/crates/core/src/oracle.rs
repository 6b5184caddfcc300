//! Differential and crash oracles, crash signatures, and bug bookkeeping.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::sut::{CompileStatus, RunResult, RunStatus};
use crate::trigger::parse_trigger_log;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Pass,
    ResultInconsistency,
    CompileCrash,
    RunCrash,
    Timeout,
    /// The baseline itself failed; the program is discarded.
    Invalid,
}

impl VerdictKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VerdictKind::Pass => "pass",
            VerdictKind::ResultInconsistency => "result_inconsistency",
            VerdictKind::CompileCrash => "compile_crash",
            VerdictKind::RunCrash => "run_crash",
            VerdictKind::Timeout => "timeout",
            VerdictKind::Invalid => "invalid",
        }
    }

    pub fn has_key(self) -> bool {
        !matches!(self, VerdictKind::Pass | VerdictKind::Invalid)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub kind: VerdictKind,
    pub detail: String,
    /// Empty exactly for `Pass` and `Invalid`.
    pub dedup_key: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ComparisonPolicy {
    #[default]
    Exact,
    /// Whitespace-separated numbers compared with `|a - b| <= atol + rtol * max(|a|, |b|)`.
    /// NaN equals NaN; lines that do not parse fall back to byte equality.
    Numeric { rtol: f64, atol: f64 },
}

impl ComparisonPolicy {
    pub fn numeric_default() -> Self {
        ComparisonPolicy::Numeric {
            rtol: 1e-4,
            atol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub policy: ComparisonPolicy,
    /// Substrings in optimized-run stderr that count as a compiler crash even
    /// when the process exits cleanly.
    pub forbidden_stderr: Vec<String>,
    /// File optimized-run timeouts as bugs.
    pub file_timeouts: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            policy: ComparisonPolicy::Exact,
            forbidden_stderr: Vec::new(),
            file_timeouts: false,
        }
    }
}

impl OracleConfig {
    pub fn is_bug(&self, kind: VerdictKind) -> bool {
        match kind {
            VerdictKind::ResultInconsistency | VerdictKind::CompileCrash | VerdictKind::RunCrash => true,
            VerdictKind::Timeout => self.file_timeouts,
            VerdictKind::Pass | VerdictKind::Invalid => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Comparison {
    pub equal: bool,
    /// Some line could not be read as numbers and was compared byte-wise.
    pub fell_back: bool,
}

fn parse_number(tok: &str) -> Option<f64> {
    match tok {
        "NaN" | "nan" | "-nan" | "-NaN" => Some(f64::NAN),
        _ => tok.parse::<f64>().ok(),
    }
}

fn numbers_close(x: f64, y: f64, rtol: f64, atol: f64) -> bool {
    if x.is_nan() || y.is_nan() {
        return x.is_nan() && y.is_nan();
    }
    if x.is_infinite() || y.is_infinite() {
        return x == y;
    }
    (x - y).abs() <= atol + rtol * x.abs().max(y.abs())
}

pub fn compare_outputs_detailed(a: &[u8], b: &[u8], policy: ComparisonPolicy) -> Comparison {
    let ComparisonPolicy::Numeric { rtol, atol } = policy else {
        return Comparison {
            equal: a == b,
            fell_back: false,
        };
    };
    let (Ok(sa), Ok(sb)) = (core::str::from_utf8(a), core::str::from_utf8(b)) else {
        return Comparison {
            equal: a == b,
            fell_back: true,
        };
    };
    let la: Vec<&str> = sa.lines().collect();
    let lb: Vec<&str> = sb.lines().collect();
    let mut fell_back = false;
    if la.len() != lb.len() {
        return Comparison {
            equal: false,
            fell_back,
        };
    }
    let mut equal = true;
    for (x, y) in la.iter().zip(&lb) {
        let tx: Vec<&str> = x.split_whitespace().collect();
        let ty: Vec<&str> = y.split_whitespace().collect();
        let nx: Option<Vec<f64>> = tx.iter().map(|t| parse_number(t)).collect();
        let ny: Option<Vec<f64>> = ty.iter().map(|t| parse_number(t)).collect();
        let same = match (nx, ny) {
            (Some(nx), Some(ny)) if nx.len() == ny.len() => {
                nx.iter().zip(&ny).all(|(p, q)| numbers_close(*p, *q, rtol, atol))
            }
            (Some(_), Some(_)) => false,
            _ => {
                fell_back = true;
                x == y
            }
        };
        equal &= same;
    }
    Comparison { equal, fell_back }
}

pub fn compare_outputs(a: &[u8], b: &[u8], policy: ComparisonPolicy) -> bool {
    compare_outputs_detailed(a, b, policy).equal
}

/// Replaces hex addresses with `0x` and drops decimal digits, then collapses
/// whitespace.
pub fn normalize_signature(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let b = s.as_bytes();
    let mut i = 0;
    while i < b.len() {
        if b[i] == b'0' && matches!(b.get(i + 1), Some(b'x' | b'X')) {
            out.push_str("0x");
            i += 2;
            while i < b.len() && b[i].is_ascii_hexdigit() {
                i += 1;
            }
            continue;
        }
        if b[i].is_ascii_digit() {
            i += 1;
            continue;
        }
        // Char boundaries: copy the whole UTF-8 sequence.
        let ch = s[i..].chars().next().expect("in bounds");
        out.push(ch);
        i += ch.len_utf8();
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

const EXCEPTION_MARKERS: &[&str] = &[
    "panicked",
    "INTERNAL_ASSERT",
    "Assertion",
    "assert",
    "Exception",
    "exception",
    "fatal",
    "Segmentation",
    "error",
    "Error",
    "abort",
];

/// Name of the top stack frame in stderr: the text after ` in ` on the first
/// `#N` frame line, without arguments or source location.
fn top_frame(stderr: &str) -> Option<String> {
    for line in stderr.lines() {
        let t = line.trim_start();
        let Some(rest) = t.strip_prefix('#') else { continue };
        if !rest.starts_with(|c: char| c.is_ascii_digit()) {
            continue;
        }
        if let Some(pos) = rest.find(" in ") {
            let name = rest[pos + 4..]
                .split(|c: char| c == '(' || c.is_whitespace())
                .next()
                .unwrap_or("");
            if !name.is_empty() {
                return Some(name.into());
            }
        }
    }
    None
}

/// A normalized crash signature from a failing run.
pub fn crash_signature(r: &RunResult) -> String {
    let stderr = r.stderr_text();
    let raw = top_frame(&stderr)
        .or_else(|| {
            stderr
                .lines()
                .filter(|l| !l.starts_with(crate::sut::TRIGGER_PREFIX))
                .find(|l| EXCEPTION_MARKERS.iter().any(|m| l.contains(m)))
                .map(String::from)
        })
        .unwrap_or_else(|| match (r.exit_signal, r.exit_code) {
            (Some(s), _) => format!("signal {s}"),
            (None, Some(c)) => format!("exit {c}"),
            (None, None) => "unknown".into(),
        });
    // Signal numbers survive normalization through a word form.
    let sig = normalize_signature(&raw);
    if sig.is_empty() {
        "unknown".into()
    } else {
        sig
    }
}

/// Dedup key for a bug verdict: the kind plus either the crash signature in
/// `verdict.detail`'s first line, or the sorted trigger set for result
/// inconsistencies and timeouts.
pub fn dedup<S: AsRef<str>>(verdict: &Verdict, trigger_set: &[S]) -> String {
    if !verdict.kind.has_key() {
        return String::new();
    }
    let body = match verdict.kind {
        VerdictKind::ResultInconsistency | VerdictKind::Timeout => {
            let set: BTreeSet<&str> = trigger_set.iter().map(AsRef::as_ref).collect();
            set.into_iter().collect::<Vec<_>>().join(",")
        }
        _ => normalize_signature(verdict.detail.lines().next().unwrap_or("")),
    };
    format!("{}:{}", verdict.kind.as_str(), body)
}

fn verdict(kind: VerdictKind, detail: String, triggers: &[String]) -> Verdict {
    let mut v = Verdict {
        kind,
        detail,
        dedup_key: String::new(),
    };
    v.dedup_key = dedup(&v, triggers);
    v
}

/// Classifies one program from its optimized and baseline runs. Crash
/// verdicts carry the crash signature on the first line of `detail`.
pub fn judge(optimized: &RunResult, baseline: &RunResult, config: &OracleConfig) -> Verdict {
    let triggers: Vec<String> = parse_trigger_log(&optimized.trigger_log).into_iter().collect();
    if !baseline.is_ok() {
        let why = match (baseline.compile_status, baseline.run_status) {
            (CompileStatus::Ok, s) => format!("baseline run status {s:?}"),
            (c, _) => format!("baseline compile status {c:?}"),
        };
        return verdict(VerdictKind::Invalid, why, &[]);
    }
    match optimized.compile_status {
        CompileStatus::CompileCrash => {
            return verdict(VerdictKind::CompileCrash, crash_signature(optimized), &triggers)
        }
        CompileStatus::CompileReject => {
            let detail = format!("rejected with optimization only\n{}", crash_signature(optimized));
            // The signature must lead `detail`.
            let detail = detail.lines().rev().collect::<Vec<_>>().join("\n");
            return verdict(VerdictKind::CompileCrash, detail, &triggers);
        }
        CompileStatus::Ok => {}
    }
    match optimized.run_status {
        RunStatus::RunCrash => return verdict(VerdictKind::RunCrash, crash_signature(optimized), &triggers),
        RunStatus::Timeout => {
            return verdict(VerdictKind::Timeout, "optimized run timed out".into(), &triggers)
        }
        RunStatus::NotRun => {
            return verdict(VerdictKind::CompileCrash, "optimized program was not run".into(), &triggers)
        }
        RunStatus::Ok => {}
    }
    let stderr = optimized.stderr_text();
    if let Some(p) = config.forbidden_stderr.iter().find(|p| !p.is_empty() && stderr.contains(p.as_str())) {
        let line = stderr.lines().find(|l| l.contains(p.as_str())).unwrap_or(p);
        return verdict(VerdictKind::CompileCrash, line.to_string(), &triggers);
    }
    let cmp = compare_outputs_detailed(&optimized.stdout, &baseline.stdout, config.policy);
    if !cmp.equal {
        return verdict(
            VerdictKind::ResultInconsistency,
            format!(
                "optimized stdout differs from baseline ({} vs {} bytes)",
                optimized.stdout.len(),
                baseline.stdout.len()
            ),
            &triggers,
        );
    }
    verdict(VerdictKind::Pass, String::new(), &[])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugReport {
    pub dedup_key: String,
    pub kind: VerdictKind,
    pub first_test_id: String,
    pub opt_context: BTreeSet<String>,
    pub occurrences: u64,
    pub reproducer: String,
    pub detail: String,
}

/// Bug reports keyed by dedup key.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BugStore {
    pub reports: BTreeMap<String, BugReport>,
}

impl BugStore {
    /// Records one finding; returns true when the key is new.
    pub fn record(&mut self, v: &Verdict, test_id: &str, program: &str, triggers: &BTreeSet<String>) -> bool {
        debug_assert!(v.kind.has_key());
        match self.reports.get_mut(&v.dedup_key) {
            Some(r) => {
                r.occurrences += 1;
                r.opt_context.extend(triggers.iter().cloned());
                false
            }
            None => {
                self.reports.insert(
                    v.dedup_key.clone(),
                    BugReport {
                        dedup_key: v.dedup_key.clone(),
                        kind: v.kind,
                        first_test_id: test_id.into(),
                        opt_context: triggers.clone(),
                        occurrences: 1,
                        reproducer: program.into(),
                        detail: v.detail.clone(),
                    },
                );
                true
            }
        }
    }

    /// Merges another store. The report whose first test id sorts first
    /// keeps its reproducer, so merge order does not matter.
    pub fn merge(&mut self, other: &BugStore) {
        for (k, o) in &other.reports {
            match self.reports.get_mut(k) {
                Some(r) => {
                    r.occurrences += o.occurrences;
                    r.opt_context.extend(o.opt_context.iter().cloned());
                    if o.first_test_id < r.first_test_id {
                        r.first_test_id = o.first_test_id.clone();
                        r.reproducer = o.reproducer.clone();
                        r.detail = o.detail.clone();
                    }
                }
                None => {
                    self.reports.insert(k.clone(), o.clone());
                }
            }
        }
    }
}
