use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReqFormat {
    /// Prose followed by fenced pseudo-code.
    #[default]
    Mixed,
    NlOnly,
    CodeOnly,
    /// The optimization source itself stands in for a requirement.
    RawImpl,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Requirement {
    pub opt_id: String,
    pub format: ReqFormat,
    pub text: String,
    /// Model id, or `"human"` for seed shots.
    pub produced_by: String,
}

pub const RAW_IMPL_PRODUCER: &str = "source";

impl Requirement {
    pub fn raw_impl(opt_id: &str, source: &str) -> Self {
        Self {
            opt_id: opt_id.into(),
            format: ReqFormat::RawImpl,
            text: source.into(),
            produced_by: RAW_IMPL_PRODUCER.into(),
        }
    }

    /// Derives an ablation variant from a Mixed requirement. Falls back to the
    /// full text when the projection would be empty, so `text` stays
    /// non-empty.
    pub fn project(&self, format: ReqFormat) -> Requirement {
        let text = match format {
            ReqFormat::NlOnly => nl_only(&self.text),
            ReqFormat::CodeOnly => code_only(&self.text),
            ReqFormat::Mixed | ReqFormat::RawImpl => self.text.clone(),
        };
        let text = if text.trim().is_empty() {
            self.text.clone()
        } else {
            text
        };
        Requirement {
            format,
            text,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    Prose,
    Fenced,
}

/// Splits text into prose and fenced-block segments. Fences are lines whose
/// trimmed start is three or more backticks; an unterminated fence runs to
/// the end. Concatenating the segments gives back the input exactly.
pub fn segments(text: &str) -> Vec<(SegmentKind, &str)> {
    let mut out: Vec<(SegmentKind, &str)> = Vec::new();
    let mut seg_start = 0;
    let mut in_fence = false;
    let mut pos = 0;
    for line in text.split_inclusive('\n') {
        let is_fence = line.trim_start().starts_with("```");
        if is_fence && !in_fence {
            if pos > seg_start {
                out.push((SegmentKind::Prose, &text[seg_start..pos]));
            }
            seg_start = pos;
            in_fence = true;
        } else if is_fence && in_fence {
            let end = pos + line.len();
            out.push((SegmentKind::Fenced, &text[seg_start..end]));
            seg_start = end;
            in_fence = false;
        }
        pos += line.len();
    }
    if seg_start < text.len() {
        let kind = if in_fence {
            SegmentKind::Fenced
        } else {
            SegmentKind::Prose
        };
        out.push((kind, &text[seg_start..]));
    }
    out
}

fn join(text: &str, kind: SegmentKind) -> String {
    segments(text)
        .into_iter()
        .filter(|(k, _)| *k == kind)
        .map(|(_, s)| s)
        .collect()
}

/// Prose with every fenced block removed.
pub fn nl_only(text: &str) -> String {
    join(text, SegmentKind::Prose)
}

/// Only the fenced blocks, fences included.
pub fn code_only(text: &str) -> String {
    join(text, SegmentKind::Fenced)
}

pub fn strip_whitespace(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use proptest::prelude::*;

    const MIXED: &str = "Needs an add of zero.\n\n```\nmatch Add(x, 0)\n```\n";

    #[test]
    fn split_mixed() {
        assert_eq!(nl_only(MIXED), "Needs an add of zero.\n\n");
        assert_eq!(code_only(MIXED), "```\nmatch Add(x, 0)\n```\n");
        let r = Requirement {
            opt_id: "o".into(),
            format: ReqFormat::Mixed,
            text: "no code here".into(),
            produced_by: "human".into(),
        };
        assert_eq!(r.project(ReqFormat::CodeOnly).text, "no code here");
        assert_eq!(r.project(ReqFormat::NlOnly).format, ReqFormat::NlOnly);
    }

    #[test]
    fn unterminated_fence_is_code() {
        let t = "a\n```\nb\n";
        assert_eq!(nl_only(t), "a\n");
        assert_eq!(code_only(t), "```\nb\n");
    }

    fn piece() -> impl Strategy<Value = (bool, String)> {
        (any::<bool>(), "[a-z ]{0,12}(\n[a-z ]{0,12}){0,2}")
    }

    proptest! {
        #[test]
        fn split_partitions_text(pieces in proptest::collection::vec(piece(), 0..6)) {
            let mut text = String::new();
            for (fenced, body) in &pieces {
                if *fenced {
                    text.push_str(&format!("```\n{body}\n```\n"));
                } else {
                    text.push_str(&format!("{body}\n"));
                }
            }
            let segs = segments(&text);
            let rebuilt: String = segs.iter().map(|(_, s)| *s).collect();
            prop_assert_eq!(&rebuilt, &text);
            let nl = nl_only(&text);
            let code = code_only(&text);
            prop_assert_eq!(nl.len() + code.len(), text.len());
            prop_assert!(!nl.contains("```"));
            // Prose-then-code texts concatenate back directly.
            let ordered: String = segs
                .iter()
                .filter(|(k, _)| *k == SegmentKind::Prose)
                .chain(segs.iter().filter(|(k, _)| *k == SegmentKind::Fenced))
                .map(|(_, s)| *s)
                .collect();
            prop_assert_eq!(strip_whitespace(&ordered), strip_whitespace(&format!("{nl}{code}")));
        }
    }
}
