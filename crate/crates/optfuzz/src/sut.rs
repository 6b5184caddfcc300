//! Systems under test: the in-process MiniLang compiler and external
//! compilers described by a command manifest.

use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Duration;

use optfuzz_core::minilang::{self, ExecLimits, MiniLangOptions};
use optfuzz_core::sut::{CompileStatus, RunMode, RunRequest, RunResult, RunStatus, SutDescriptor, TRIGGER_PREFIX};
use optfuzz_core::trigger::trigger_lines;
use serde::{Deserialize, Serialize};

use crate::sandbox::{self, Captured, Exit, Limits, SandboxFailure};

pub trait Sut: Send + Sync {
    fn descriptor(&self) -> &SutDescriptor;

    /// Extension given to program files, without the leading dot.
    fn file_extension(&self) -> &str;

    fn compile_and_run(&self, request: &RunRequest) -> Result<RunResult, SandboxFailure>;
}

pub struct MiniLangSut {
    pub descriptor: SutDescriptor,
    pub options: MiniLangOptions,
}

impl MiniLangSut {
    pub fn new(planted_bugs: bool) -> Self {
        Self {
            descriptor: SutDescriptor::minilang(),
            options: MiniLangOptions {
                planted_bugs,
                limits: ExecLimits::default(),
            },
        }
    }
}

impl Sut for MiniLangSut {
    fn descriptor(&self) -> &SutDescriptor {
        &self.descriptor
    }

    fn file_extension(&self) -> &str {
        minilang::FILE_EXTENSION
    }

    /// Runs in-process. The time limit is enforced through the interpreter's
    /// fuel budget rather than the wall clock.
    fn compile_and_run(&self, request: &RunRequest) -> Result<RunResult, SandboxFailure> {
        let code = request.program.code.as_str();
        let outcome = panic::catch_unwind(AssertUnwindSafe(|| minilang::run(code, request.mode, &self.options)));
        Ok(outcome.unwrap_or_else(|payload| {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            RunResult {
                compile_status: CompileStatus::CompileCrash,
                run_status: RunStatus::NotRun,
                stderr: format!("minilang panicked: {msg}\n").into_bytes(),
                ..RunResult::default()
            }
        }))
    }
}

fn default_reject_code() -> Option<i32> {
    Some(3)
}

fn default_extension() -> String {
    "txt".into()
}

fn default_output_cap() -> usize {
    sandbox::DEFAULT_OUTPUT_CAP
}

/// Two command lines, each receiving the program path as its last argument.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub compile_run_optimized: Vec<String>,
    pub compile_run_baseline: Vec<String>,
    /// Exit code meaning "the compiler rejected the program".
    #[serde(default = "default_reject_code")]
    pub reject_exit_code: Option<i32>,
    /// Optional stderr line printed between compilation and execution.
    /// When set, failures before it are compiler crashes.
    #[serde(default)]
    pub run_marker: Option<String>,
    /// Stderr substrings that count as internal compiler errors.
    #[serde(default)]
    pub forbidden_stderr: Vec<String>,
    #[serde(default = "default_extension")]
    pub file_extension: String,
    #[serde(default = "default_output_cap")]
    pub output_cap: usize,
}

impl Manifest {
    pub fn validate(&self) -> Result<(), String> {
        for (name, argv) in [
            ("compile_run_optimized", &self.compile_run_optimized),
            ("compile_run_baseline", &self.compile_run_baseline),
        ] {
            if argv.is_empty() || argv[0].is_empty() {
                return Err(format!("manifest command `{name}` is empty"));
            }
        }
        if self.output_cap == 0 {
            return Err("manifest output_cap must be positive".into());
        }
        Ok(())
    }
}

fn find_executable(program: &str, base: &Path) -> Option<PathBuf> {
    if program.contains('/') {
        let p = base.join(program);
        return p.is_file().then_some(p);
    }
    std::env::var_os("PATH")?
        .to_str()?
        .split(':')
        .map(|d| Path::new(d).join(program))
        .find(|p| p.is_file())
}

pub struct ManifestSut {
    pub descriptor: SutDescriptor,
    pub manifest: Manifest,
    optimized: Vec<String>,
    baseline: Vec<String>,
}

impl ManifestSut {
    /// Resolves both commands, relative paths against `base`. Fails when a
    /// command cannot be found.
    pub fn new(descriptor: SutDescriptor, manifest: Manifest, base: &Path) -> Result<Self, String> {
        manifest.validate()?;
        let resolve = |argv: &[String]| -> Result<Vec<String>, String> {
            let exe = find_executable(&argv[0], base)
                .ok_or_else(|| format!("SUT command `{}` not found", argv[0]))?;
            let mut v = vec![exe.to_string_lossy().into_owned()];
            v.extend_from_slice(&argv[1..]);
            Ok(v)
        };
        Ok(Self {
            optimized: resolve(&manifest.compile_run_optimized)?,
            baseline: resolve(&manifest.compile_run_baseline)?,
            descriptor,
            manifest,
        })
    }

    pub fn classify(&self, c: Captured) -> RunResult {
        classify(c, &self.manifest)
    }
}

/// Maps a raw process outcome onto compile and run statuses.
pub fn classify(c: Captured, m: &Manifest) -> RunResult {
    let stderr_text = String::from_utf8_lossy(&c.stderr).into_owned();
    let marker_seen = m
        .run_marker
        .as_deref()
        .map(|mk| stderr_text.lines().any(|l| l.trim_end() == mk));
    let in_compile = marker_seen == Some(false);
    let mut r = RunResult {
        stdout: c.stdout,
        trigger_log: trigger_lines(&stderr_text),
        stderr: c.stderr,
        truncated: c.truncated,
        ..RunResult::default()
    };
    let failed = |r: &mut RunResult, run: RunStatus| {
        if in_compile {
            r.compile_status = CompileStatus::CompileCrash;
            r.run_status = RunStatus::NotRun;
        } else {
            r.run_status = run;
        }
    };
    match c.exit {
        Exit::Code(0) => r.exit_code = Some(0),
        Exit::Code(code) if Some(code) == m.reject_exit_code => {
            r.exit_code = Some(code);
            r.compile_status = CompileStatus::CompileReject;
            r.run_status = RunStatus::NotRun;
            r.trigger_log.clear();
        }
        Exit::Code(code) => {
            r.exit_code = Some(code);
            failed(&mut r, RunStatus::RunCrash);
        }
        Exit::Signal(s) => {
            r.exit_signal = Some(s);
            failed(&mut r, RunStatus::RunCrash);
        }
        Exit::TimedOut => {
            failed(&mut r, RunStatus::Timeout);
            if in_compile {
                r.stderr.extend_from_slice(b"\ncompilation timed out\n");
            }
        }
    }
    r
}

static FILE_COUNTER: std::sync::atomic::AtomicU64 = std::sync::atomic::AtomicU64::new(0);

impl Sut for ManifestSut {
    fn descriptor(&self) -> &SutDescriptor {
        &self.descriptor
    }

    fn file_extension(&self) -> &str {
        &self.manifest.file_extension
    }

    fn compile_and_run(&self, request: &RunRequest) -> Result<RunResult, SandboxFailure> {
        let dir = tempfile::Builder::new().prefix("optfuzz-run").tempdir()?;
        let n = FILE_COUNTER.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        let path = dir.path().join(format!("prog{n}.{}", self.manifest.file_extension));
        std::fs::write(&path, &request.program.code)?;
        let mut argv = match request.mode {
            RunMode::Optimized => self.optimized.clone(),
            RunMode::Baseline => self.baseline.clone(),
        };
        argv.push(path.to_string_lossy().into_owned());
        let limits = Limits {
            time_limit: request.time_limit.max(Duration::from_millis(1)),
            memory_limit: request.memory_limit,
            output_cap: self.manifest.output_cap,
        };
        let c = sandbox::run(&argv, &limits, Some(dir.path()))?;
        let mut r = self.classify(c);
        if request.mode == RunMode::Baseline {
            // Baseline runs never report activations.
            r.trigger_log.retain(|l| !l.starts_with(TRIGGER_PREFIX));
        }
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use optfuzz_core::program::TestProgram;

    fn manifest(marker: Option<&str>) -> Manifest {
        Manifest {
            compile_run_optimized: vec!["sh".into()],
            compile_run_baseline: vec!["sh".into()],
            reject_exit_code: Some(3),
            run_marker: marker.map(String::from),
            forbidden_stderr: vec![],
            file_extension: "sh".into(),
            output_cap: 1 << 20,
        }
    }

    fn captured(exit: Exit, stderr: &str) -> Captured {
        Captured {
            exit,
            stdout: vec![],
            stderr: stderr.as_bytes().to_vec(),
            truncated: false,
            elapsed: Duration::ZERO,
        }
    }

    #[test]
    fn classification() {
        let m = manifest(None);
        let r = classify(captured(Exit::Code(0), "WFOPT a\nnote\n"), &m);
        assert!(r.is_ok());
        assert_eq!(r.trigger_log, ["WFOPT a"]);
        let r = classify(captured(Exit::Code(3), "WFOPT a\nerror\n"), &m);
        assert_eq!(r.compile_status, CompileStatus::CompileReject);
        assert!(r.trigger_log.is_empty() && r.is_well_formed());
        let r = classify(captured(Exit::Signal(11), ""), &m);
        assert_eq!((r.run_status, r.exit_signal), (RunStatus::RunCrash, Some(11)));
        let r = classify(captured(Exit::TimedOut, ""), &m);
        assert_eq!(r.run_status, RunStatus::Timeout);

        let m = manifest(Some("WFRUN"));
        let r = classify(captured(Exit::Signal(6), "WFOPT a\n"), &m);
        assert_eq!(r.compile_status, CompileStatus::CompileCrash);
        assert!(r.is_well_formed());
        let r = classify(captured(Exit::Signal(6), "WFOPT a\nWFRUN\n"), &m);
        assert_eq!(r.run_status, RunStatus::RunCrash);
        let r = classify(captured(Exit::TimedOut, ""), &m);
        assert_eq!((r.compile_status, r.run_status), (CompileStatus::CompileCrash, RunStatus::NotRun));
    }

    #[test]
    fn shell_manifest_end_to_end() {
        let sut = ManifestSut::new(SutDescriptor::minilang(), manifest(None), Path::new(".")).unwrap();
        let prog = TestProgram::standalone("t", "echo WFOPT p >&2; echo hi");
        let r = sut.compile_and_run(&RunRequest::new(prog.clone(), RunMode::Optimized)).unwrap();
        assert_eq!((r.stdout.as_slice(), r.trigger_log.as_slice()), (&b"hi\n"[..], &["WFOPT p".to_string()][..]));
        let r = sut.compile_and_run(&RunRequest::new(prog, RunMode::Baseline)).unwrap();
        assert!(r.trigger_log.is_empty());
    }

    #[test]
    fn missing_command_is_rejected_up_front() {
        let mut m = manifest(None);
        m.compile_run_baseline = vec!["definitely-not-a-compiler-xyz".into()];
        assert!(ManifestSut::new(SutDescriptor::minilang(), m, Path::new(".")).is_err());
    }

    #[test]
    fn minilang_in_process() {
        let sut = MiniLangSut::new(true);
        let run = |code: &str, mode| sut.compile_and_run(&RunRequest::new(TestProgram::standalone("t", code), mode)).unwrap();
        let r = run("let x = 2;\nlet a = x + 0;\nprint(a)", RunMode::Optimized);
        assert_eq!(r.stdout, b"2\n");
        assert!(r.trigger_log.iter().any(|l| l == "WFOPT add_zero_elim"));
        assert_eq!(run("", RunMode::Baseline).compile_status, CompileStatus::CompileReject);
        let r = run("let a = 2; let b = 3; let c = 4; print(a * b + c); crash_if_fused()", RunMode::Optimized);
        assert_eq!(r.run_status, RunStatus::RunCrash);
    }
}
