//! Prompt rendering for requirement summarization, initial generation and
//! feedback generation.
//!
//! Every prompt is a sequence of blocks. A block is an instruction followed by
//! labelled sections; the last block of a prompt leaves its final section
//! empty, so the prompt ends right at the slot the model is meant to fill.

mod requirement;

pub use requirement::{
    code_only, nl_only, segments, strip_whitespace, ReqFormat, Requirement, SegmentKind,
    RAW_IMPL_PRODUCER,
};

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::catalog::{OptKind, Optimization};
use crate::program::TestProgram;
use crate::sut::SutDescriptor;

pub const SUMMARIZE_TEMPLATE: &str = include_str!("../../templates/summarize.txt");
pub const SUMMARIZE_PATTERN_TEMPLATE: &str = include_str!("../../templates/summarize_pattern.txt");
pub const GENERATE_TEMPLATE: &str = include_str!("../../templates/generate.txt");
pub const FEEDBACK_TEMPLATE: &str = include_str!("../../templates/feedback.txt");

/// Separates blocks; also the natural stop sequence for completions.
pub const BLOCK_SEPARATOR: &str = "\n### Instruction\n";

pub const SECTION_SOURCE: &str = "### Source\n";
pub const SECTION_REQUIREMENT: &str = "### Requirement\n";
pub const SECTION_PROGRAM: &str = "### Program\n";
pub const SECTION_EXAMPLE: &str = "### Triggering example\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShotKind {
    Summarization,
    Generation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptFamily {
    Summarize,
    Generate,
    Feedback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub instruction: String,
    pub opt_source: Option<String>,
    pub requirement: Option<Requirement>,
    pub test: Option<String>,
    pub kind: ShotKind,
}

impl FewShotExample {
    pub fn summarization(instruction: String, opt_source: String, requirement: Requirement) -> Self {
        Self {
            instruction,
            opt_source: Some(opt_source),
            requirement: Some(requirement),
            test: None,
            kind: ShotKind::Summarization,
        }
    }

    pub fn generation(instruction: String, requirement: Requirement, test: String) -> Self {
        Self {
            instruction,
            opt_source: None,
            requirement: Some(requirement),
            test: Some(test),
            kind: ShotKind::Generation,
        }
    }

    fn is_complete(&self) -> bool {
        match self.kind {
            ShotKind::Summarization => self.opt_source.is_some() && self.requirement.is_some(),
            ShotKind::Generation => self.requirement.is_some() && self.test.is_some(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub text: String,
    /// Name of the optimization the prompt is about.
    pub target_opt: String,
    pub family: PromptFamily,
    /// Ids of the triggering examples embedded in a feedback prompt.
    pub example_ids: Vec<String>,
}

impl PromptBundle {
    pub fn hash(&self) -> String {
        crate::hash::sha256_hex(self.text.as_bytes())
    }
}

/// Prompt size limit in characters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBudget {
    pub max_chars: usize,
}

impl ContextBudget {
    pub fn from_tokens(tokens: usize, chars_per_token: f64) -> Self {
        Self {
            max_chars: (tokens as f64 * chars_per_token) as usize,
        }
    }

    pub fn unlimited() -> Self {
        Self {
            max_chars: usize::MAX,
        }
    }
}

impl Default for ContextBudget {
    fn default() -> Self {
        Self::from_tokens(8192, 4.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("prompt needs {needed} characters, budget is {budget}")]
    ContextOverflow { needed: usize, budget: usize },
    #[error("shot {index} is not a complete {expected:?} example")]
    WrongShotKind { index: usize, expected: ShotKind },
    #[error("feedback prompt needs at least one triggering example")]
    NoExamples,
}

/// Replaces `[NAME]` placeholders in one left-to-right pass; substituted text
/// is never rescanned, so program text containing brackets is safe.
pub fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('[') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        let hit = vars.iter().find(|(name, _)| {
            tail.len() > name.len() + 1
                && tail[1..].starts_with(name)
                && tail.as_bytes()[name.len() + 1] == b']'
        });
        match hit {
            Some((name, value)) => {
                out.push_str(value);
                rest = &tail[name.len() + 2..];
            }
            None => {
                out.push('[');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

fn trim_end_newline(s: &str) -> &str {
    s.trim_end_matches('\n')
}

fn push_section(out: &mut String, header: &str, body: Option<&str>) {
    out.push('\n');
    out.push_str(header);
    if let Some(b) = body {
        out.push_str(trim_end_newline(b));
        out.push('\n');
    }
}

fn push_instruction(out: &mut String, instruction: &str) {
    if !out.is_empty() {
        out.push('\n');
    }
    out.push_str("### Instruction\n");
    out.push_str(trim_end_newline(instruction));
    out.push('\n');
}

fn fenced(code: &str) -> String {
    alloc::format!("```\n{}\n```", trim_end_newline(code))
}

fn check(text: String, budget: ContextBudget) -> Result<String, PromptError> {
    if text.chars().count() > budget.max_chars {
        Err(PromptError::ContextOverflow {
            needed: text.chars().count(),
            budget: budget.max_chars,
        })
    } else {
        Ok(text)
    }
}

/// Instruction text for one summarization block.
pub fn summarization_instruction(opt_name: &str, kind: OptKind, d: &SutDescriptor) -> String {
    let template = match kind {
        OptKind::PatternMatcher => SUMMARIZE_PATTERN_TEMPLATE,
        _ => SUMMARIZE_TEMPLATE,
    };
    fill(
        template,
        &[("TARGET INPUT", &d.input_kind), ("OPTIMIZATION NAME", opt_name)],
    )
}

pub fn generation_instruction(opt_name: &str, d: &SutDescriptor) -> String {
    fill(
        GENERATE_TEMPLATE,
        &[
            ("TARGET INPUT", &d.input_kind),
            ("OPTIMIZATION NAME", opt_name),
            ("INPUT SPECIFICATION", &d.input_spec),
        ],
    )
}

pub fn feedback_instruction(opt_name: &str, d: &SutDescriptor) -> String {
    fill(
        FEEDBACK_TEMPLATE,
        &[
            ("TARGET INPUT", &d.input_kind),
            ("OPTIMIZATION NAME", opt_name),
            ("INPUT SPECIFICATION", &d.input_spec),
        ],
    )
}

fn render_summarization(target: &Optimization, source: &str, shots: &[FewShotExample], d: &SutDescriptor) -> String {
    let mut out = String::new();
    for shot in shots {
        push_instruction(&mut out, &shot.instruction);
        push_section(&mut out, SECTION_SOURCE, shot.opt_source.as_deref().map(fenced).as_deref());
        push_section(&mut out, SECTION_REQUIREMENT, shot.requirement.as_ref().map(|r| r.text.as_str()));
    }
    push_instruction(&mut out, &summarization_instruction(&target.name, target.kind, d));
    push_section(&mut out, SECTION_SOURCE, Some(&fenced(source)));
    push_section(&mut out, SECTION_REQUIREMENT, None);
    out
}

/// Summarization prompt: each shot as (instruction, source, requirement),
/// then the target's instruction and source with an empty requirement slot.
/// Over budget, auxiliary functions are dropped before giving up.
pub fn build_summarization_prompt(
    target: &Optimization,
    shots: &[FewShotExample],
    descriptor: &SutDescriptor,
    budget: ContextBudget,
) -> Result<PromptBundle, PromptError> {
    for (index, s) in shots.iter().enumerate() {
        if s.kind != ShotKind::Summarization || !s.is_complete() {
            return Err(PromptError::WrongShotKind {
                index,
                expected: ShotKind::Summarization,
            });
        }
    }
    let full = render_summarization(target, &target.full_source(), shots, descriptor);
    let text = if full.chars().count() <= budget.max_chars {
        full
    } else {
        check(render_summarization(target, &target.main_source, shots, descriptor), budget)?
    };
    Ok(PromptBundle {
        text,
        target_opt: target.name.clone(),
        family: PromptFamily::Summarize,
        example_ids: Vec::new(),
    })
}

fn render_generation(target_req: &Requirement, opt_name: &str, shots: &[FewShotExample], d: &SutDescriptor) -> String {
    let mut out = String::new();
    for shot in shots {
        push_instruction(&mut out, &shot.instruction);
        push_section(&mut out, SECTION_REQUIREMENT, shot.requirement.as_ref().map(|r| r.text.as_str()));
        push_section(&mut out, SECTION_PROGRAM, shot.test.as_deref().map(fenced).as_deref());
    }
    push_instruction(&mut out, &generation_instruction(opt_name, d));
    push_section(&mut out, SECTION_REQUIREMENT, Some(&target_req.text));
    push_section(&mut out, SECTION_PROGRAM, None);
    out
}

/// Initial generation prompt: each shot as (instruction, requirement,
/// program), then the target requirement with an empty program slot. Over
/// budget, shots are dropped oldest first.
pub fn build_generation_prompt(
    target_req: &Requirement,
    opt_name: &str,
    shots: &[FewShotExample],
    descriptor: &SutDescriptor,
    budget: ContextBudget,
) -> Result<PromptBundle, PromptError> {
    for (index, s) in shots.iter().enumerate() {
        if s.kind != ShotKind::Generation || !s.is_complete() {
            return Err(PromptError::WrongShotKind {
                index,
                expected: ShotKind::Generation,
            });
        }
    }
    let mut first = 0;
    let text = loop {
        let text = render_generation(target_req, opt_name, &shots[first..], descriptor);
        if text.chars().count() <= budget.max_chars {
            break text;
        }
        if first == shots.len() {
            return Err(check(text, budget).unwrap_err());
        }
        first += 1;
    };
    Ok(PromptBundle {
        text,
        target_opt: opt_name.into(),
        family: PromptFamily::Generate,
        example_ids: Vec::new(),
    })
}

fn render_feedback(target_req: &Requirement, opt_name: &str, examples: &[&TestProgram], d: &SutDescriptor) -> String {
    let mut out = String::new();
    push_instruction(&mut out, &feedback_instruction(opt_name, d));
    push_section(&mut out, SECTION_REQUIREMENT, Some(&target_req.text));
    for ex in examples {
        push_section(&mut out, SECTION_EXAMPLE, Some(&fenced(&ex.code)));
    }
    push_section(&mut out, SECTION_PROGRAM, None);
    out
}

/// Feedback prompt: instruction, requirement, the triggering examples in the
/// given order, and an empty program slot. Over budget, the largest example is
/// dropped first; at least one is always kept.
pub fn build_feedback_prompt(
    target_req: &Requirement,
    opt_name: &str,
    trigger_examples: &[TestProgram],
    descriptor: &SutDescriptor,
    budget: ContextBudget,
) -> Result<PromptBundle, PromptError> {
    if trigger_examples.is_empty() {
        return Err(PromptError::NoExamples);
    }
    let mut kept: Vec<&TestProgram> = trigger_examples.iter().collect();
    let text = loop {
        let text = render_feedback(target_req, opt_name, &kept, descriptor);
        if text.chars().count() <= budget.max_chars {
            break text;
        }
        if kept.len() == 1 {
            return Err(check(text, budget).unwrap_err());
        }
        // Largest first; among equals, the later one goes.
        let (drop_at, _) = kept
            .iter()
            .enumerate()
            .max_by_key(|(i, p)| (p.code.len(), *i))
            .expect("non-empty");
        kept.remove(drop_at);
    };
    Ok(PromptBundle {
        text,
        target_opt: opt_name.into(),
        family: PromptFamily::Feedback,
        example_ids: kept.iter().map(|p| p.id.clone()).collect(),
    })
}

pub const MINILANG_SEED_OPT: &str = "add_zero_elim";
pub const MINILANG_SEED_REQUIREMENT: &str = include_str!("../../seeds/minilang/add_zero_elim.requirement.md");
pub const MINILANG_SEED_TEST: &str = include_str!("../../seeds/minilang/add_zero_elim.test.ml.txt");

/// The human-written one-shot pair for MiniLang, as a summarization shot and
/// a generation shot.
pub fn minilang_seed_shots(descriptor: &SutDescriptor) -> Option<(FewShotExample, FewShotExample)> {
    let opt = crate::minilang::list_minilang_optimizations()
        .into_iter()
        .find(|o| o.name == MINILANG_SEED_OPT)?;
    let req = Requirement {
        opt_id: opt.id.clone(),
        format: ReqFormat::Mixed,
        text: MINILANG_SEED_REQUIREMENT.into(),
        produced_by: "human".into(),
    };
    let summarize = FewShotExample::summarization(
        summarization_instruction(&opt.name, opt.kind, descriptor),
        opt.full_source(),
        req.clone(),
    );
    let generate = FewShotExample::generation(
        generation_instruction(&opt.name, descriptor),
        req,
        MINILANG_SEED_TEST.into(),
    );
    Some((summarize, generate))
}

/// Projects a shot's requirement into another format, so ablations show
/// shots in the same format as the target. `raw_source` is the shot
/// optimization's source, used for [`ReqFormat::RawImpl`].
pub fn project_shot(shot: &FewShotExample, format: ReqFormat, raw_source: &str) -> FewShotExample {
    let mut s = shot.clone();
    if let Some(r) = &shot.requirement {
        s.requirement = Some(match format {
            ReqFormat::RawImpl => Requirement::raw_impl(&r.opt_id, raw_source),
            other => r.project(other),
        });
    }
    s
}

#[cfg(test)]
mod tests;
