//! Trigger-line parsing and campaign trigger statistics.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::sut::TRIGGER_PREFIX;

/// Pass names from lines carrying the trigger prefix. Other lines are
/// ignored; repeats collapse.
pub fn parse_trigger_log<S: AsRef<str>>(lines: &[S]) -> BTreeSet<String> {
    lines
        .iter()
        .filter_map(|l| l.as_ref().trim_end_matches(['\r', '\n']).strip_prefix(TRIGGER_PREFIX))
        .map(str::trim)
        .filter(|n| !n.is_empty())
        .map(String::from)
        .collect()
}

/// Trigger lines found in raw stderr.
pub fn trigger_lines(stderr: &str) -> Vec<String> {
    stderr
        .lines()
        .filter(|l| l.starts_with(TRIGGER_PREFIX))
        .map(String::from)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParsedTriggers {
    pub names: BTreeSet<String>,
    /// Names absent from the catalog. Kept in `names` as well.
    pub unknown: BTreeSet<String>,
}

pub fn parse_against_catalog<S: AsRef<str>>(lines: &[S], catalog: &BTreeSet<String>) -> ParsedTriggers {
    let names = parse_trigger_log(lines);
    let unknown = names.difference(catalog).cloned().collect();
    ParsedTriggers { names, unknown }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerRecord {
    pub test_id: String,
    pub triggered: BTreeSet<String>,
    pub iteration: u32,
}

/// `(distinct passes triggered by any record, records that triggered target)`.
pub fn campaign_metrics(records: &[TriggerRecord], target: &str) -> (usize, usize) {
    let distinct: BTreeSet<&str> = records
        .iter()
        .flat_map(|r| r.triggered.iter().map(String::as_str))
        .collect();
    let triggering = records.iter().filter(|r| r.triggered.contains(target)).count();
    (distinct.len(), triggering)
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IterationPoint {
    pub tests: usize,
    /// Tests that triggered the loop's own target.
    pub triggering: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OptTriggerStats {
    pub tests: usize,
    pub triggering_tests: usize,
    /// Every pass triggered by tests generated for this target, with counts.
    pub incidental: BTreeMap<String, usize>,
    pub series: BTreeMap<u32, IterationPoint>,
}

/// Campaign-wide aggregate. Records are keyed by target and iteration, so
/// submission order does not affect the result.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TriggerStats {
    pub per_target: BTreeMap<String, OptTriggerStats>,
}

impl TriggerStats {
    pub fn submit(&mut self, target: &str, record: &TriggerRecord) {
        let s = self.per_target.entry(target.into()).or_default();
        s.tests += 1;
        let hit = record.triggered.contains(target);
        if hit {
            s.triggering_tests += 1;
        }
        for name in &record.triggered {
            *s.incidental.entry(name.clone()).or_default() += 1;
        }
        let p = s.series.entry(record.iteration).or_default();
        p.tests += 1;
        p.triggering += usize::from(hit);
    }

    pub fn merge(&mut self, other: &TriggerStats) {
        for (target, o) in &other.per_target {
            let s = self.per_target.entry(target.clone()).or_default();
            s.tests += o.tests;
            s.triggering_tests += o.triggering_tests;
            for (k, v) in &o.incidental {
                *s.incidental.entry(k.clone()).or_default() += v;
            }
            for (it, p) in &o.series {
                let q = s.series.entry(*it).or_default();
                q.tests += p.tests;
                q.triggering += p.triggering;
            }
        }
    }

    /// Passes triggered by any test of the campaign.
    pub fn distinct_triggered(&self) -> BTreeSet<String> {
        self.per_target
            .values()
            .flat_map(|s| s.incidental.keys().cloned())
            .collect()
    }

    /// Targets with at least one test triggering that target itself.
    pub fn targets_hit(&self) -> BTreeSet<String> {
        self.per_target
            .iter()
            .filter(|(_, s)| s.triggering_tests > 0)
            .map(|(k, _)| k.clone())
            .collect()
    }

    pub fn total_triggering_tests(&self) -> usize {
        self.per_target.values().map(|s| s.triggering_tests).sum()
    }

    pub fn total_tests(&self) -> usize {
        self.per_target.values().map(|s| s.tests).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn rec(id: &str, names: &[&str], it: u32) -> TriggerRecord {
        TriggerRecord {
            test_id: id.into(),
            triggered: names.iter().map(|s| String::from(*s)).collect(),
            iteration: it,
        }
    }

    #[test]
    fn parse_examples() {
        let s = parse_trigger_log(&["WFOPT add_zero_elim", "noise", "WFOPT add_zero_elim"]);
        assert_eq!(s.into_iter().collect::<Vec<_>>(), ["add_zero_elim"]);
        assert!(parse_trigger_log::<&str>(&[]).is_empty());
        let catalog: BTreeSet<String> = [String::from("add_zero_elim")].into();
        let p = parse_against_catalog(&["WFOPT unknown_pass"], &catalog);
        assert!(p.names.contains("unknown_pass"));
        assert!(p.unknown.contains("unknown_pass"));
        assert!(parse_trigger_log(&["WFOPT x\r\n", " WFOPT y", "WFOPT "]).contains("x"));
        assert_eq!(parse_trigger_log(&[" WFOPT y", "WFOPT "]).len(), 0);
        assert_eq!(trigger_lines("a\nWFOPT q\nb"), ["WFOPT q"]);
    }

    #[test]
    fn metrics_examples() {
        let r = vec![rec("1", &["t"], 0), rec("2", &["t", "u"], 0), rec("3", &[], 1)];
        assert_eq!(campaign_metrics(&r, "t"), (2, 2));
        assert_eq!(campaign_metrics(&[], "t"), (0, 0));
        let five: Vec<_> = ["a", "b", "c", "d", "e"]
            .iter()
            .enumerate()
            .map(|(i, n)| rec(&alloc::format!("{i}"), &[n], 0))
            .collect();
        assert_eq!(campaign_metrics(&five, "a").0, 5);
    }

    #[test]
    fn stats_separate_target_and_incidental() {
        let mut s = TriggerStats::default();
        s.submit("t", &rec("1", &["t", "u"], 0));
        s.submit("t", &rec("2", &["u"], 1));
        s.submit("v", &rec("3", &[], 0));
        assert_eq!(s.per_target["t"].triggering_tests, 1);
        assert_eq!(s.per_target["t"].incidental["u"], 2);
        assert_eq!(s.distinct_triggered().len(), 2);
        assert_eq!(s.targets_hit().len(), 1);
        assert_eq!(s.total_tests(), 3);
        assert_eq!(s.per_target["t"].series[&1], IterationPoint { tests: 1, triggering: 0 });
    }

    proptest! {
        #[test]
        fn parse_is_order_independent(mut lines in proptest::collection::vec("(WFOPT [a-c]|noise)", 0..12)) {
            let a = parse_trigger_log(&lines);
            lines.reverse();
            prop_assert_eq!(a, parse_trigger_log(&lines));
        }

        #[test]
        fn submission_order_is_irrelevant(
            recs in proptest::collection::vec((0u32..4, proptest::collection::btree_set("[a-c]", 0..3)), 0..20)
        ) {
            let records: Vec<_> = recs
                .iter()
                .enumerate()
                .map(|(i, (it, set))| TriggerRecord { test_id: alloc::format!("{i}"), triggered: set.clone(), iteration: *it })
                .collect();
            let mut fwd = TriggerStats::default();
            let mut rev = TriggerStats::default();
            let mut prev = 0;
            for r in &records {
                fwd.submit("a", r);
                // Triggering-test count never decreases.
                prop_assert!(fwd.per_target["a"].triggering_tests >= prev);
                prev = fwd.per_target["a"].triggering_tests;
            }
            for r in records.iter().rev() {
                rev.submit("a", r);
            }
            prop_assert_eq!(&fwd, &rev);
            let mut merged = TriggerStats::default();
            let (l, r) = records.split_at(records.len() / 2);
            let mut left = TriggerStats::default();
            let mut right = TriggerStats::default();
            l.iter().for_each(|x| left.submit("a", x));
            r.iter().for_each(|x| right.submit("a", x));
            merged.merge(&left);
            merged.merge(&right);
            prop_assert_eq!(&merged, &fwd);
            prop_assert_eq!(fwd.per_target.get("a").map_or(0, |s| s.triggering_tests), campaign_metrics(&records, "a").1);
        }
    }
}
