//! Standalone MiniLang compiler-and-runner, so the toy compiler can also be
//! driven through a manifest like any external SUT.
//!
//! Exit status: the program's own (0, or 1 on a runtime error), 3 when the
//! source is rejected, 124 when the step budget runs out, and SIGABRT for
//! the planted crash.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use optfuzz_core::minilang::{self, ExecLimits, MiniLangOptions, SIGABRT};
use optfuzz_core::sut::{RunMode, RunStatus};

#[derive(Parser)]
#[command(name = "minilang", about = "Compile and run one MiniLang program")]
struct Args {
    /// Run without any optimization passes.
    #[arg(long, conflicts_with = "optimized")]
    baseline: bool,
    /// Run with every pass enabled (the default).
    #[arg(long)]
    optimized: bool,
    /// Enable the two deliberately wrong passes.
    #[arg(long)]
    planted_bugs: bool,
    /// Interpreter step budget.
    #[arg(long)]
    fuel: Option<u64>,
    file: PathBuf,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let text = match std::fs::read_to_string(&args.file) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("minilang: cannot read {}: {e}", args.file.display());
            return ExitCode::from(2);
        }
    };
    let mut limits = ExecLimits::default();
    if let Some(f) = args.fuel {
        limits.fuel = f;
    }
    let mode = if args.baseline { RunMode::Baseline } else { RunMode::Optimized };
    let r = minilang::run(
        &text,
        mode,
        &MiniLangOptions {
            planted_bugs: args.planted_bugs,
            limits,
        },
    );
    let _ = std::io::stdout().write_all(&r.stdout);
    let _ = std::io::stdout().flush();
    let _ = std::io::stderr().write_all(&r.stderr);
    if r.exit_signal == Some(SIGABRT) {
        std::process::abort();
    }
    if r.run_status == RunStatus::Timeout {
        return ExitCode::from(124);
    }
    ExitCode::from(r.exit_code.unwrap_or(1).clamp(0, 255) as u8)
}
