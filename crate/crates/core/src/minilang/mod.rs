//! MiniLang: a small expression language with an instrumented optimizer,
//! bundled as the reference system under test.
//!
//! Baseline runs interpret the parsed program directly. Optimized runs
//! interpret the program after the pass pipeline, and report one
//! `WFOPT <pass>` line per pass activation on stderr. With `planted_bugs`
//! enabled two passes carry deliberate defects (see [`passes`]).

pub mod ast;
pub mod interp;
pub mod optimize;
pub mod parse;
pub mod passes;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::catalog::{Optimization, SourceFamily};
use crate::extract;
use crate::sut::{CompileStatus, RunMode, RunResult, RunStatus};

pub use interp::ExecLimits;
pub use optimize::PASS_NAMES;

/// Conventional extension of MiniLang program files.
pub const FILE_EXTENSION: &str = "ml.txt";

pub const SIGABRT: i32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MiniLangOptions {
    pub planted_bugs: bool,
    pub limits: ExecLimits,
}

/// Compiles and runs one program. Deterministic in `(text, mode, options)`.
pub fn run(text: &str, mode: RunMode, options: &MiniLangOptions) -> RunResult {
    let program = match parse::parse_program(text) {
        Ok(p) => p,
        Err(e) => {
            return RunResult {
                compile_status: CompileStatus::CompileReject,
                run_status: RunStatus::NotRun,
                stderr: format!("error: {e}\n").into_bytes(),
                exit_code: Some(3),
                ..RunResult::default()
            }
        }
    };
    let (program, trigger_log, armed) = match mode {
        RunMode::Baseline => (program, Vec::new(), false),
        RunMode::Optimized => {
            let o = optimize::optimize(&program, options.planted_bugs);
            (o.program, o.trigger_log, o.fused_crash_armed)
        }
    };
    let mut stderr = String::new();
    for line in &trigger_log {
        stderr.push_str(line);
        stderr.push('\n');
    }
    let exec = interp::execute(&program, armed, options.limits);
    let (run_status, exit_code, exit_signal) = match &exec.outcome {
        interp::ExecOutcome::Finished => (RunStatus::Ok, Some(0), None),
        interp::ExecOutcome::Error(interp::RuntimeError::OutOfFuel) => {
            stderr.push_str("error: execution budget exhausted\n");
            (RunStatus::Timeout, None, None)
        }
        interp::ExecOutcome::Error(e) => {
            stderr.push_str(&format!("runtime error: {e}\n"));
            (RunStatus::RunCrash, Some(1), None)
        }
        interp::ExecOutcome::Aborted => {
            // The fake return address varies per program so crash signatures
            // need normalization, but stays fixed for a given program.
            let addr = u64::from_le_bytes(crate::hash::digest8(text.as_bytes()));
            stderr.push_str("fatal: fused kernel abort in crash_if_fused\n");
            stderr.push_str(&format!(
                "    #0 0x{:012x} in mul_add_fuse::lowered_intrinsic\n",
                addr & 0xffff_ffff_ffff
            ));
            (RunStatus::RunCrash, None, Some(SIGABRT))
        }
    };
    RunResult {
        compile_status: CompileStatus::Ok,
        run_status,
        stdout: exec.stdout.into_bytes(),
        stderr: stderr.into_bytes(),
        trigger_log,
        exit_signal,
        exit_code,
        truncated: exec.truncated,
    }
}

/// Source files of the instrumented passes, as `(relative path, text)`.
pub const PASS_SOURCES: &[(&str, &str)] = &[
    ("arith.rs", include_str!("passes/arith.rs")),
    ("compare.rs", include_str!("passes/compare.rs")),
    ("fusion.rs", include_str!("passes/fusion.rs")),
    ("stmt.rs", include_str!("passes/stmt.rs")),
];

/// Every instrumented MiniLang pass as an [`Optimization`], with its source
/// text and directly called helpers attached.
pub fn list_minilang_optimizations() -> Vec<Optimization> {
    let mut corpus = Vec::new();
    for (path, text) in PASS_SOURCES {
        for f in extract::list_functions(text, SourceFamily::BraceDelimited) {
            corpus.push((*path, f));
        }
    }
    let spans: Vec<_> = corpus.iter().map(|(_, f)| f.clone()).collect();
    let mut out: Vec<Optimization> = corpus
        .iter()
        .filter(|(_, f)| PASS_NAMES.contains(&f.name.as_str()))
        .map(|(path, f)| extract::attach_auxiliaries(Optimization::from_function(path, f), &spans, 1))
        .collect();
    out.sort_by(|a, b| (&a.file_path, a.line_span.0).cmp(&(&b.file_path, b.line_span.0)));
    out
}
