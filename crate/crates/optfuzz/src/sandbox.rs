//! Subprocess execution with a wall-clock timeout, per-stream output cap
//! and an address-space limit.

use std::io::{self, Read};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::Path;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use wait_timeout::ChildExt;

pub const DEFAULT_OUTPUT_CAP: usize = 1 << 20;

/// Extra time allowed after the limit for killing and reaping the child.
pub const KILL_GRACE: Duration = Duration::from_secs(2);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub time_limit: Duration,
    /// Address-space cap in bytes; 0 disables it.
    pub memory_limit: u64,
    pub output_cap: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            time_limit: Duration::from_secs(10),
            memory_limit: 1 << 30,
            output_cap: DEFAULT_OUTPUT_CAP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Code(i32),
    Signal(i32),
    TimedOut,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Captured {
    pub exit: Exit,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
    pub truncated: bool,
    pub elapsed: Duration,
}

/// A failure of the harness itself. Never a finding against the SUT.
#[derive(Debug, thiserror::Error)]
pub enum SandboxFailure {
    #[error("empty command line")]
    EmptyCommand,
    #[error("cannot start `{program}`: {source}")]
    Spawn { program: String, source: io::Error },
    #[error("sandbox io: {0}")]
    Io(#[from] io::Error),
    #[error("output reader thread died")]
    Reader,
}

fn read_capped<R: Read>(mut r: R, cap: usize) -> io::Result<(Vec<u8>, bool)> {
    let mut kept = Vec::new();
    let mut buf = [0u8; 8192];
    let mut truncated = false;
    loop {
        let n = match r.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        };
        let room = cap.saturating_sub(kept.len());
        if n > room {
            truncated = true;
        }
        // Keep draining past the cap so the child never blocks on a full pipe.
        kept.extend_from_slice(&buf[..n.min(room)]);
    }
    Ok((kept, truncated))
}

fn kill_group(pid: u32) {
    // SAFETY: kill(2) has no memory-safety preconditions.
    unsafe {
        libc::kill(-(pid as libc::pid_t), libc::SIGKILL);
    }
}

/// Runs `argv` with stdin closed. The child gets its own process group so a
/// timeout also kills anything it spawned.
pub fn run(argv: &[String], limits: &Limits, cwd: Option<&Path>) -> Result<Captured, SandboxFailure> {
    let (program, args) = argv.split_first().ok_or(SandboxFailure::EmptyCommand)?;
    let mut cmd = Command::new(program);
    cmd.args(args)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);
    if let Some(dir) = cwd {
        cmd.current_dir(dir);
    }
    let mem = limits.memory_limit;
    if mem > 0 {
        // SAFETY: setrlimit is async-signal-safe and touches no Rust state.
        unsafe {
            cmd.pre_exec(move || {
                let lim = libc::rlimit {
                    rlim_cur: mem as libc::rlim_t,
                    rlim_max: mem as libc::rlim_t,
                };
                if libc::setrlimit(libc::RLIMIT_AS, &lim) != 0 {
                    return Err(io::Error::last_os_error());
                }
                Ok(())
            });
        }
    }
    let start = Instant::now();
    let mut child = cmd.spawn().map_err(|source| SandboxFailure::Spawn {
        program: program.clone(),
        source,
    })?;
    let cap = limits.output_cap;
    let out = child.stdout.take().expect("piped stdout");
    let err = child.stderr.take().expect("piped stderr");
    let out_t = thread::spawn(move || read_capped(out, cap));
    let err_t = thread::spawn(move || read_capped(err, cap));

    let exit = match child.wait_timeout(limits.time_limit)? {
        Some(status) => match (status.code(), status.signal()) {
            (Some(c), _) => Exit::Code(c),
            (None, Some(s)) => Exit::Signal(s),
            (None, None) => Exit::Code(-1),
        },
        None => {
            kill_group(child.id());
            child.wait()?;
            Exit::TimedOut
        }
    };
    // Grandchildren may still hold the pipes open after a normal exit.
    kill_group(child.id());
    let (stdout, t1) = out_t.join().map_err(|_| SandboxFailure::Reader)??;
    let (stderr, t2) = err_t.join().map_err(|_| SandboxFailure::Reader)??;
    Ok(Captured {
        exit,
        stdout,
        stderr,
        truncated: t1 || t2,
        elapsed: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sh(script: &str) -> Vec<String> {
        vec!["/bin/sh".into(), "-c".into(), script.into()]
    }

    #[test]
    fn captures_streams_and_exit() {
        let c = run(&sh("echo out; echo err >&2; exit 4"), &Limits::default(), None).unwrap();
        assert_eq!(c.stdout, b"out\n");
        assert_eq!(c.stderr, b"err\n");
        assert_eq!(c.exit, Exit::Code(4));
        assert!(!c.truncated);
    }

    #[test]
    fn signal_is_reported() {
        let c = run(&sh("kill -SEGV $$"), &Limits::default(), None).unwrap();
        assert_eq!(c.exit, Exit::Signal(libc::SIGSEGV));
    }

    #[test]
    fn timeout_kills_the_group() {
        let limits = Limits {
            time_limit: Duration::from_millis(200),
            ..Limits::default()
        };
        let c = run(&sh("sleep 30 & sleep 30"), &limits, None).unwrap();
        assert_eq!(c.exit, Exit::TimedOut);
        assert!(c.elapsed < limits.time_limit + KILL_GRACE);
    }

    #[test]
    fn output_is_capped() {
        let limits = Limits {
            output_cap: 100,
            ..Limits::default()
        };
        let c = run(&sh("head -c 100000 /dev/zero"), &limits, None).unwrap();
        assert_eq!(c.stdout.len(), 100);
        assert!(c.truncated);
        assert_eq!(c.exit, Exit::Code(0));
    }

    #[test]
    fn missing_program_is_a_harness_failure() {
        let e = run(&["/nonexistent/sut".into()], &Limits::default(), None).unwrap_err();
        assert!(matches!(e, SandboxFailure::Spawn { .. }));
        assert!(matches!(run(&[], &Limits::default(), None), Err(SandboxFailure::EmptyCommand)));
    }
}
