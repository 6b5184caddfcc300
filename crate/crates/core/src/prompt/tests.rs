use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::*;
use crate::catalog::AuxSource;
use crate::minilang::list_minilang_optimizations;

fn descriptor() -> SutDescriptor {
    SutDescriptor::minilang()
}

fn opt(name: &str) -> Optimization {
    list_minilang_optimizations()
        .into_iter()
        .find(|o| o.name == name)
        .unwrap()
}

fn shots() -> (FewShotExample, FewShotExample) {
    minilang_seed_shots(&descriptor()).unwrap()
}

fn mixed(opt_id: &str) -> Requirement {
    Requirement {
        opt_id: opt_id.into(),
        format: ReqFormat::Mixed,
        text: "Needs a product added to a value.\n\n```\nmatch Add(Mul(a, b), c)\n```\n".into(),
        produced_by: "stub".into(),
    }
}

fn program(id: &str, code: &str) -> TestProgram {
    TestProgram::standalone(id, code)
}

fn no_placeholders(text: &str) {
    for p in ["[TARGET INPUT]", "[INPUT SPECIFICATION]", "[OPTIMIZATION NAME]"] {
        assert!(!text.contains(p), "{p} left in prompt");
    }
}

#[test]
fn summarization_with_one_shot() {
    let target = opt("mul_add_fuse");
    let (shot, _) = shots();
    let b = build_summarization_prompt(&target, core::slice::from_ref(&shot), &descriptor(), ContextBudget::default()).unwrap();
    assert_eq!(b.family, PromptFamily::Summarize);
    assert_eq!(b.target_opt, "mul_add_fuse");
    let req_at = b.text.find(shot.requirement.as_ref().unwrap().text.trim_end()).unwrap();
    let src_at = b.text.find(target.main_source.trim_end()).unwrap();
    assert!(req_at < src_at);
    assert!(b.text.ends_with(SECTION_REQUIREMENT));
    assert!(b.text.contains("MiniLang program"));
    no_placeholders(&b.text);
}

#[test]
fn summarization_zero_shot() {
    let target = opt("const_fold");
    let b = build_summarization_prompt(&target, &[], &descriptor(), ContextBudget::default()).unwrap();
    assert_eq!(b.text.matches("### Instruction").count(), 1);
    assert!(b.text.starts_with("### Instruction\n"));
    assert!(b.text.ends_with(SECTION_REQUIREMENT));
}

#[test]
fn summarization_drops_aux_then_fails() {
    let mut target = opt("mul_add_fuse");
    let big: String = (0..500).map(|i| format!("    helper_line_{i}();\n")).collect();
    target.aux_sources.push(AuxSource {
        name: "helper".into(),
        source: big,
    });
    target.recount();
    let lean = build_summarization_prompt(&target.without_aux(), &[], &descriptor(), ContextBudget::unlimited()).unwrap();
    let budget = ContextBudget {
        max_chars: lean.text.chars().count() + 10,
    };
    let b = build_summarization_prompt(&target, &[], &descriptor(), budget).unwrap();
    assert!(b.text.contains(target.main_source.trim_end()));
    assert!(!b.text.contains("helper_line_0"));
    let e = build_summarization_prompt(&target, &[], &descriptor(), ContextBudget { max_chars: 50 }).unwrap_err();
    assert!(matches!(e, PromptError::ContextOverflow { budget: 50, .. }));
}

#[test]
fn pattern_matchers_use_their_own_template() {
    let mut target = opt("const_fold");
    target.kind = OptKind::PatternMatcher;
    let b = build_summarization_prompt(&target, &[], &descriptor(), ContextBudget::default()).unwrap();
    assert!(b.text.contains("registers rewrite patterns"));
    no_placeholders(&b.text);
}

#[test]
fn shot_kinds_are_checked() {
    let (s, g) = shots();
    let target = opt("const_fold");
    assert!(matches!(
        build_summarization_prompt(&target, core::slice::from_ref(&g), &descriptor(), ContextBudget::default()),
        Err(PromptError::WrongShotKind { index: 0, .. })
    ));
    assert!(matches!(
        build_generation_prompt(&mixed("x"), "x", &[g, s], &descriptor(), ContextBudget::default()),
        Err(PromptError::WrongShotKind { index: 1, .. })
    ));
}

#[test]
fn generation_prompt_structure() {
    let (_, g) = shots();
    let req = mixed("m");
    let b = build_generation_prompt(&req, "mul_add_fuse", core::slice::from_ref(&g), &descriptor(), ContextBudget::default()).unwrap();
    assert_eq!(b.family, PromptFamily::Generate);
    assert!(b.example_ids.is_empty());
    assert!(b.text.ends_with(SECTION_PROGRAM));
    assert!(b.text.contains(MINILANG_SEED_TEST.trim_end()));
    assert!(b.text.contains("public MiniLang builtins"));
    no_placeholders(&b.text);

    let mut g2 = g.clone();
    g2.test = Some("print(12345)".into());
    let b = build_generation_prompt(&req, "x", &[g.clone(), g2.clone()], &descriptor(), ContextBudget::default()).unwrap();
    let first = b.text.find(MINILANG_SEED_TEST.trim_end()).unwrap();
    let second = b.text.find("print(12345)").unwrap();
    assert!(first < second);

    // Oldest shot goes first when over budget.
    let only_second = build_generation_prompt(&req, "x", &[g2.clone()], &descriptor(), ContextBudget::unlimited()).unwrap();
    let budget = ContextBudget {
        max_chars: only_second.text.chars().count(),
    };
    let b = build_generation_prompt(&req, "x", &[g, g2], &descriptor(), budget).unwrap();
    assert_eq!(b.text, only_second.text);
}

#[test]
fn raw_impl_requirement_embeds_source() {
    let target = opt("mul_add_fuse");
    let req = Requirement::raw_impl(&target.id, &target.full_source());
    let b = build_generation_prompt(&req, &target.name, &[], &descriptor(), ContextBudget::default()).unwrap();
    assert!(b.text.contains(target.main_source.trim_end()));
}

#[test]
fn feedback_prompt_examples() {
    let req = mixed("m");
    let exs: Vec<_> = (0..3)
        .map(|i| program(&format!("t{i}"), &format!("let a = {i}; print(a * a + a)")))
        .collect();
    let b = build_feedback_prompt(&req, "mul_add_fuse", &exs, &descriptor(), ContextBudget::default()).unwrap();
    assert_eq!(b.family, PromptFamily::Feedback);
    assert_eq!(b.example_ids, ["t0", "t1", "t2"]);
    assert_eq!(b.text.matches(SECTION_EXAMPLE).count(), 3);
    assert!(b.text.ends_with(SECTION_PROGRAM));
    no_placeholders(&b.text);

    let b = build_feedback_prompt(&req, "mul_add_fuse", &exs[..1], &descriptor(), ContextBudget::default()).unwrap();
    assert_eq!(b.example_ids, ["t0"]);

    assert_eq!(
        build_feedback_prompt(&req, "x", &[], &descriptor(), ContextBudget::default()),
        Err(PromptError::NoExamples)
    );
}

#[test]
fn feedback_drops_largest_example() {
    let req = mixed("m");
    let exs = [
        program("small", "print(1)"),
        program("big", &"print(2222222222);\n".repeat(40)),
        program("mid", "let a = 1; print(a)"),
    ];
    let without_big = build_feedback_prompt(&req, "x", &[exs[0].clone(), exs[2].clone()], &descriptor(), ContextBudget::unlimited()).unwrap();
    let budget = ContextBudget {
        max_chars: without_big.text.chars().count() + 5,
    };
    let b = build_feedback_prompt(&req, "x", &exs, &descriptor(), budget).unwrap();
    assert_eq!(b.example_ids, ["small", "mid"]);
    let tiny = build_feedback_prompt(&req, "x", &exs, &descriptor(), ContextBudget { max_chars: 10 });
    assert!(matches!(tiny, Err(PromptError::ContextOverflow { .. })));
}

#[test]
fn fill_does_not_rescan_values() {
    let s = fill("a [X] b [Y] [Z]", &[("X", "[Y]"), ("Y", "y")]);
    assert_eq!(s, "a [Y] b y [Z]");
    assert_eq!(fill("[", &[("X", "1")]), "[");
    assert_eq!(fill("[X", &[("X", "1")]), "[X");
}

#[test]
fn templates_resolve_every_placeholder() {
    let d = descriptor();
    for name in ["a", "[OPTIMIZATION NAME]"] {
        for kind in [OptKind::Generic, OptKind::PatternMatcher] {
            let s = summarization_instruction(name, kind, &d);
            assert!(!s.contains("[TARGET INPUT]"));
        }
        assert!(!generation_instruction("a", &d).contains('['));
        assert!(!feedback_instruction("a", &d).contains('['));
    }
}

#[test]
fn seed_requirement_splits_cleanly() {
    let req = shots().0.requirement.unwrap();
    let nl = req.project(ReqFormat::NlOnly);
    let code = req.project(ReqFormat::CodeOnly);
    assert!(!nl.text.contains("```"));
    assert!(code.text.starts_with("```"));
    assert_eq!(
        strip_whitespace(&format!("{}{}", nl.text, code.text)),
        strip_whitespace(&req.text)
    );
    let g = project_shot(&shots().1, ReqFormat::RawImpl, "fn add_zero_elim() {}");
    assert_eq!(g.requirement.unwrap().text, "fn add_zero_elim() {}");
    let g = project_shot(&shots().1, ReqFormat::NlOnly, "");
    assert_eq!(g.requirement.unwrap().format, ReqFormat::NlOnly);
}

#[test]
fn rendering_is_deterministic() {
    let target = opt("repeat_concat_fuse");
    let (s, _) = shots();
    let a = build_summarization_prompt(&target, core::slice::from_ref(&s), &descriptor(), ContextBudget::default()).unwrap();
    let b = build_summarization_prompt(&target, &[s], &descriptor(), ContextBudget::default()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.hash(), b.hash());
    assert_eq!(a.hash().len(), 64);
}
