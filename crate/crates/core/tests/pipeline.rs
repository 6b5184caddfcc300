//! One optimization loop assembled from the public API only: summarize,
//! generate, run both modes, judge, count.

use std::collections::BTreeSet;

use optfuzz_core::bandit::ArmPool;
use optfuzz_core::minilang::{self, list_minilang_optimizations, MiniLangOptions};
use optfuzz_core::model::{extract_code_blocks, strip_prompt_echo, CompletionBackend, ModelRole, StubBackend, StubConfig};
use optfuzz_core::oracle::{judge, BugStore, OracleConfig, VerdictKind};
use optfuzz_core::program::TestProgram;
use optfuzz_core::prompt::{
    build_feedback_prompt, build_generation_prompt, build_summarization_prompt, minilang_seed_shots, ContextBudget,
    PromptFamily, ReqFormat, Requirement,
};
use optfuzz_core::sut::{RunMode, SutDescriptor};
use optfuzz_core::trigger::{parse_trigger_log, TriggerRecord, TriggerStats};

#[test]
fn mul_add_loop_finds_the_planted_crash() {
    let desc = SutDescriptor::minilang();
    let opt = list_minilang_optimizations().into_iter().find(|o| o.name == "mul_add_fuse").unwrap();
    let (summ_shot, gen_shot) = minilang_seed_shots(&desc).unwrap();
    let stub = StubBackend::new(StubConfig::default());
    let budget = ContextBudget::from_tokens(8192, 4.0);

    let sp = build_summarization_prompt(&opt, &[summ_shot], &desc, budget).unwrap();
    let text = stub.complete(&ModelRole::analysis("stub"), &sp, 0).unwrap().texts.remove(0);
    let req = Requirement {
        opt_id: opt.id.clone(),
        format: ReqFormat::Mixed,
        text: strip_prompt_echo(&text, &sp.text).trim().to_string(),
        produced_by: "stub".into(),
    };
    assert!(req.text.contains("Binary(Add, Binary(Mul"));

    let opts = MiniLangOptions {
        planted_bugs: true,
        ..MiniLangOptions::default()
    };
    let mut pool = ArmPool::new(1);
    let mut programs: Vec<TestProgram> = Vec::new();
    let mut stats = TriggerStats::default();
    let mut bugs = BugStore::default();
    let role = ModelRole::generation("stub");
    for k in 0..10u32 {
        let bundle = if pool.is_empty() {
            build_generation_prompt(&req, &opt.name, std::slice::from_ref(&gen_shot), &desc, budget).unwrap()
        } else {
            let ids = pool.select(3).unwrap();
            let ex: Vec<TestProgram> = programs.iter().filter(|p| ids.contains(&p.id)).cloned().collect();
            build_feedback_prompt(&req, &opt.name, &ex, &desc, budget).unwrap()
        };
        let texts = stub.complete(&role, &bundle, u64::from(k)).unwrap().texts;
        let mut new = Vec::new();
        for (i, t) in texts.iter().enumerate() {
            let code = extract_code_blocks(t, "", Some(&bundle.text)).into_iter().next().unwrap_or_default();
            let id = format!("{k}-{i}");
            let o = minilang::run(&code, RunMode::Optimized, &opts);
            let b = minilang::run(&code, RunMode::Baseline, &opts);
            let v = judge(&o, &b, &OracleConfig::default());
            let triggered: BTreeSet<String> = parse_trigger_log(&o.trigger_log);
            if v.kind.has_key() {
                bugs.record(&v, &id, &code, &triggered);
            }
            stats.submit(
                &opt.name,
                &TriggerRecord {
                    test_id: id.clone(),
                    triggered: triggered.clone(),
                    iteration: k,
                },
            );
            if triggered.contains(&opt.name) {
                programs.push(TestProgram::standalone(id.clone(), code));
                new.push(id);
            }
        }
        let t = new.len() as u64;
        if bundle.family == PromptFamily::Feedback {
            pool.update(&bundle.example_ids, t, texts.len() as u64 - t).unwrap();
            pool.admit_new(&bundle.example_ids, &new).unwrap();
        } else {
            for id in &new {
                pool.seed_arm(id).unwrap();
            }
        }
    }
    let s = &stats.per_target["mul_add_fuse"];
    assert_eq!(s.tests, 100);
    assert!(s.triggering_tests > 20, "{}", s.triggering_tests);
    let keys: Vec<&String> = bugs.reports.keys().collect();
    assert_eq!(keys, ["run_crash:mul_add_fuse::lowered_intrinsic"]);
    assert_eq!(bugs.reports[keys[0]].kind, VerdictKind::RunCrash);
}
