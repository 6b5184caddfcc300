//! The fuzzing loop and the campaign directory.
//!
//! Layout of a campaign directory:
//!
//! ```text
//! campaign.lock              held while a process drives the campaign
//! config.toml, meta.json     resolved config and base directory
//! catalog/optimizations.jsonl
//! requirements/<key>.json
//! tests/<key>/<iter>/        iteration.json + tests.jsonl
//! pools/<key>.json           loop checkpoint: arm pool, RNG state, stats, bugs
//! records/records.jsonl      every model completion, keyed by prompt hash and seed
//! bugs/<kind>-<hash>/        reproducer, both raw results, verdict, bug record
//! metrics.jsonl, report.json, report.txt, timing.json
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use optfuzz_core::bandit::{ArmPool, Strategy};
use optfuzz_core::catalog::Optimization;
use optfuzz_core::hash::{derive_seed, short_hex};
use optfuzz_core::minilang::{ExecLimits, MiniLangOptions};
use optfuzz_core::model::{extract_code_blocks, strip_prompt_echo, ModelError};
use optfuzz_core::oracle::{judge, BugStore, OracleConfig, Verdict, VerdictKind};
use optfuzz_core::program::TestProgram;
use optfuzz_core::prompt::{
    build_feedback_prompt, build_generation_prompt, build_summarization_prompt, generation_instruction,
    minilang_seed_shots, project_shot, summarization_instruction, FewShotExample, PromptBundle, PromptFamily, ReqFormat,
    Requirement, MINILANG_SEED_OPT,
};
use optfuzz_core::sut::{RunMode, RunRequest, RunResult, SutDescriptor};
use optfuzz_core::trigger::{parse_trigger_log, TriggerRecord, TriggerStats};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collect;
use crate::config::{Config, SutKind};
use crate::gateway::{make_backend, records_path, Gateway, RecordStore};
use crate::report::{self, BugSummary, CampaignReport, OptReport, Timing, Totals};
use crate::sut::{ManifestSut, MiniLangSut, Sut};
use crate::Error;

pub const LOCK_FILE: &str = "campaign.lock";
pub const CONFIG_FILE: &str = "config.toml";
pub const META_FILE: &str = "meta.json";
pub const CATALOG_FILE: &str = "catalog/optimizations.jsonl";

/// Where completions come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendMode {
    /// The configured endpoints, recording into the campaign's store.
    Live,
    /// Only the given record file; no model is constructed.
    Replay(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Stop after this many iterations in this invocation; resume later.
    pub stop_after: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    /// Present once every iteration has run.
    pub report: Option<CampaignReport>,
    pub completed_iterations: u32,
    pub analysis_calls: u64,
    pub generation_calls: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Meta {
    base_dir: PathBuf,
}

/// Raw evidence for the first occurrence of a bug.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub test_id: String,
    pub code: String,
    pub optimized: RunResult,
    pub baseline: RunResult,
    pub verdict: Verdict,
}

/// Checkpointed state of one optimization's loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopState {
    pub key: String,
    pub name: String,
    pub opt_id: String,
    pub next_iteration: u32,
    pub blocked: Option<String>,
    pub pool: ArmPool,
    /// Code of every arm ever admitted, by test id.
    pub programs: BTreeMap<String, String>,
    pub stats: TriggerStats,
    pub bugs: BugStore,
    pub evidence: BTreeMap<String, Evidence>,
    pub first_trigger_iteration: Option<u32>,
    pub feedback_iterations: u32,
    pub invalid_tests: u64,
    pub backend_failures: u64,
    pub harness_failures: u64,
}

/// One executed test, as written to `tests.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub program: TestProgram,
    pub optimized: Option<RunResult>,
    pub baseline: Option<RunResult>,
    pub verdict: Option<Verdict>,
    pub triggered: BTreeSet<String>,
    pub reward: bool,
    pub harness_error: Option<String>,
}

/// Header of one iteration, as written to `iteration.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u32,
    pub family: PromptFamily,
    pub example_ids: Vec<String>,
    pub prompt_hash: String,
    pub seed: u64,
    pub tests: usize,
    pub triggering: u64,
    pub backend_error: Option<String>,
}

struct DirLock(PathBuf);

impl DirLock {
    fn acquire(dir: &Path) -> Result<Self, Error> {
        let path = dir.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self(path))
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                let holder = fs::read_to_string(&path).unwrap_or_default();
                Err(Error::Environment(format!(
                    "{} is locked by process {} (delete the lock file if that process is gone)",
                    dir.display(),
                    holder.trim()
                )))
            }
            Err(e) => Err(Error::Io(e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::Corrupt(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Corrupt(format!("{}: {e}", path.display())))
}

fn slug(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect();
    if s.is_empty() {
        "opt".into()
    } else {
        s
    }
}

/// File-safe, unique loop keys, in catalog order.
pub fn loop_keys(catalog: &[Optimization]) -> Vec<String> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for o in catalog {
        *counts.entry(slug(&o.name)).or_default() += 1;
    }
    catalog
        .iter()
        .map(|o| {
            let s = slug(&o.name);
            if counts[&s] > 1 {
                format!("{s}-{}", &o.id[..o.id.len().min(8)])
            } else {
                s
            }
        })
        .collect()
}

fn seed_u64(parts: &[&[u8]]) -> u64 {
    derive_seed(parts)
}

/// Builds the configured SUT. Relative manifest commands resolve against
/// `base`.
pub fn build_sut(config: &Config, base: &Path) -> Result<Arc<dyn Sut>, Error> {
    match config.sut.kind {
        SutKind::Minilang => Ok(Arc::new(MiniLangSut {
            descriptor: config.sut.descriptor.clone(),
            options: MiniLangOptions {
                planted_bugs: config.sut.planted_bugs,
                limits: ExecLimits {
                    fuel: config.sut.fuel,
                    ..ExecLimits::default()
                },
            },
        })),
        SutKind::Manifest => {
            let m = config.sut.manifest.clone().expect("validated");
            ManifestSut::new(config.sut.descriptor.clone(), m, base)
                .map(|s| Arc::new(s) as Arc<dyn Sut>)
                .map_err(Error::Environment)
        }
    }
}

/// Collects the catalog named by the config.
pub fn collect_catalog(config: &Config, base: &Path) -> Result<collect::Collection, Error> {
    let d = &config.sut.descriptor;
    let opts = config.sut.collect_options();
    if config.sut.kind == SutKind::Minilang && config.sut.embedded_sources {
        let optimizations = collect::collect_from_sources(&collect::embedded_minilang_sources(), d, opts)
            .map_err(|e| Error::Config(crate::config::ConfigError::Invalid(e.to_string())))?;
        return Ok(collect::Collection {
            optimizations,
            warnings: Vec::new(),
        });
    }
    collect::collect(d, base, opts).map_err(|e| match e {
        collect::CollectError::UnreadableRoot { .. } => Error::Environment(e.to_string()),
        collect::CollectError::BadPattern(_) => Error::Config(crate::config::ConfigError::Invalid(e.to_string())),
    })
}

/// Seed shots as (summarization, generation, source of the seed pass).
type Shots = Option<(FewShotExample, FewShotExample, String)>;

fn seed_shots(config: &Config, catalog: &[Optimization]) -> Shots {
    if config.sut.descriptor.name != SutDescriptor::minilang().name {
        return None;
    }
    let (s, g) = minilang_seed_shots(&config.sut.descriptor)?;
    let src = catalog
        .iter()
        .find(|o| o.name == MINILANG_SEED_OPT)
        .map(|o| o.full_source())
        .or_else(|| s.opt_source.clone())?;
    Some((s, g, src))
}

pub struct Campaign {
    pub dir: PathBuf,
    pub config: Config,
    base: PathBuf,
    sut: Arc<dyn Sut>,
    analysis: Gateway,
    generation: Gateway,
    catalog: Vec<Optimization>,
    keys: Vec<String>,
    shots: Shots,
    _lock: DirLock,
}

impl Campaign {
    /// Starts a campaign in `dir`, or continues one already there. A
    /// directory holding a different config is refused.
    pub fn open(dir: &Path, config: Config, base: &Path, mode: BackendMode) -> Result<Self, Error> {
        fs::create_dir_all(dir)?;
        let lock = DirLock::acquire(dir)?;
        let cfg_path = dir.join(CONFIG_FILE);
        let text = config.to_toml();
        if cfg_path.exists() {
            let existing = fs::read_to_string(&cfg_path)?;
            if existing != text {
                return Err(Error::Usage(format!(
                    "{} holds a campaign with a different config; use `resume` or a fresh directory",
                    dir.display()
                )));
            }
        } else {
            write_atomic(&cfg_path, text.as_bytes())?;
        }
        let base = base.canonicalize().unwrap_or_else(|_| base.to_path_buf());
        let meta_path = dir.join(META_FILE);
        if !meta_path.exists() {
            write_json(&meta_path, &Meta { base_dir: base.clone() })?;
        }
        Self::build(dir, config, base, mode, lock)
    }

    /// Reopens a campaign from its own directory.
    pub fn resume(dir: &Path, mode: BackendMode) -> Result<Self, Error> {
        let cfg_path = dir.join(CONFIG_FILE);
        if !cfg_path.exists() {
            return Err(Error::Corrupt(format!("{} has no {CONFIG_FILE}", dir.display())));
        }
        let lock = DirLock::acquire(dir)?;
        let config = Config::load(&cfg_path, &[])?;
        let meta: Meta = read_json(&dir.join(META_FILE))?;
        Self::build(dir, config, meta.base_dir, mode, lock)
    }

    fn build(dir: &Path, config: Config, base: PathBuf, mode: BackendMode, lock: DirLock) -> Result<Self, Error> {
        let sut = build_sut(&config, &base)?;
        let catalog_path = dir.join(CATALOG_FILE);
        let catalog = if catalog_path.exists() {
            collect::read_catalog(&catalog_path).map_err(|e| Error::Corrupt(format!("{}: {e}", catalog_path.display())))?
        } else {
            let c = collect_catalog(&config, &base)?;
            for w in &c.warnings {
                eprintln!("warning: skipped {}: {}", w.path, w.reason);
            }
            collect::write_catalog(&catalog_path, &c.optimizations)?;
            c.optimizations
        };
        if catalog.is_empty() {
            return Err(Error::Usage("the catalog is empty; check sut.descriptor.opt_keywords and source_roots".into()));
        }
        let (store, replay) = match &mode {
            BackendMode::Live => (Arc::new(RecordStore::open(&records_path(dir))?), None),
            BackendMode::Replay(path) => {
                let s = Arc::new(
                    RecordStore::read_only(path).map_err(|e| Error::Corrupt(format!("{}: {e}", path.display())))?,
                );
                (s.clone(), Some(s))
            }
        };
        let endpoint = |e: &str| if replay.is_some() { crate::gateway::REPLAY_ID.to_string() } else { e.to_string() };
        let backend = |e: &str| {
            make_backend(&endpoint(e), &config.stub, &config.http, replay.as_ref()).map_err(Error::Usage)
        };
        let analysis = Gateway::new(backend(&config.models.analysis.endpoint)?, store.clone());
        let generation = Gateway::new(backend(&config.models.generation.endpoint)?, store);
        let keys = loop_keys(&catalog);
        let shots = seed_shots(&config, &catalog);
        Ok(Self {
            dir: dir.to_path_buf(),
            config,
            base,
            sut,
            analysis,
            generation,
            catalog,
            keys,
            shots,
            _lock: lock,
        })
    }

    pub fn catalog(&self) -> &[Optimization] {
        &self.catalog
    }

    pub fn base_dir(&self) -> &Path {
        &self.base
    }

    pub fn analysis_calls(&self) -> u64 {
        self.analysis.backend_calls()
    }

    pub fn generation_calls(&self) -> u64 {
        self.generation.backend_calls()
    }

    fn descriptor(&self) -> &SutDescriptor {
        self.sut.descriptor()
    }

    /// The requirement for `opt` in the configured format. Computed once and
    /// stored under `requirements/`; `RawImpl` never calls the model.
    pub fn requirement(&self, key: &str, opt: &Optimization) -> Result<Requirement, ModelError> {
        let format = self.config.campaign.requirement_format;
        let path = self.dir.join("requirements").join(format!("{key}.json"));
        if let Ok(r) = read_json::<Requirement>(&path) {
            if r.format == format && r.opt_id == opt.id {
                return Ok(r);
            }
        }
        let req = if format == ReqFormat::RawImpl {
            Requirement::raw_impl(&opt.id, &opt.full_source())
        } else {
            let shots: Vec<FewShotExample> = self.shots.iter().map(|(s, _, _)| s.clone()).collect();
            let bundle = build_summarization_prompt(opt, &shots, self.descriptor(), self.config.prompt.budget())
                .map_err(|e| ModelError::InvalidResponse(format!("summarization prompt: {e}")))?;
            let seed = seed_u64(&[b"summarize", &self.config.campaign.seed.to_le_bytes(), opt.name.as_bytes()]);
            let res = self.analysis.complete(&self.config.models.analysis, &bundle, seed)?;
            let text = res
                .texts
                .first()
                .map(|t| strip_prompt_echo(t, &bundle.text).trim().to_string())
                .unwrap_or_default();
            if text.is_empty() {
                return Err(ModelError::InvalidResponse("empty requirement".into()));
            }
            let mixed = Requirement {
                opt_id: opt.id.clone(),
                format: ReqFormat::Mixed,
                text,
                produced_by: format!("{}:{}", self.analysis.backend_id(), res.backend_meta),
            };
            mixed.project(format)
        };
        write_json(&path, &req).map_err(|e| ModelError::BackendUnavailable(format!("cannot store requirement: {e}")))?;
        Ok(req)
    }

    fn generation_shots(&self) -> Vec<FewShotExample> {
        let format = self.config.campaign.requirement_format;
        self.shots
            .iter()
            .map(|(_, g, src)| {
                let mut g = project_shot(g, format, src);
                g.instruction = generation_instruction(MINILANG_SEED_OPT, self.descriptor());
                g
            })
            .collect()
    }

    fn new_state(&self, key: &str, opt: &Optimization) -> LoopState {
        let seed = seed_u64(&[b"pool", &self.config.campaign.seed.to_le_bytes(), opt.name.as_bytes()]);
        LoopState {
            key: key.into(),
            name: opt.name.clone(),
            opt_id: opt.id.clone(),
            next_iteration: 0,
            blocked: None,
            pool: ArmPool::new(seed).with_cap(self.config.campaign.pool_cap),
            programs: BTreeMap::new(),
            stats: TriggerStats::default(),
            bugs: BugStore::default(),
            evidence: BTreeMap::new(),
            first_trigger_iteration: None,
            feedback_iterations: 0,
            invalid_tests: 0,
            backend_failures: 0,
            harness_failures: 0,
        }
    }

    fn pool_path(&self, key: &str) -> PathBuf {
        self.dir.join("pools").join(format!("{key}.json"))
    }

    fn load_states(&self) -> Result<Vec<LoopState>, Error> {
        self.catalog
            .iter()
            .zip(&self.keys)
            .map(|(opt, key)| {
                let p = self.pool_path(key);
                if p.exists() {
                    read_json(&p)
                } else {
                    Ok(self.new_state(key, opt))
                }
            })
            .collect()
    }

    fn run_one(&self, program: &TestProgram) -> (Option<RunResult>, Option<RunResult>, Option<String>) {
        let c = &self.config.campaign;
        let req = |mode| RunRequest {
            program: program.clone(),
            mode,
            time_limit: Duration::from_millis(c.time_limit_ms),
            memory_limit: c.memory_limit_mb.saturating_mul(1 << 20),
        };
        let o = self.sut.compile_and_run(&req(RunMode::Optimized));
        let b = self.sut.compile_and_run(&req(RunMode::Baseline));
        match (o, b) {
            (Ok(o), Ok(b)) => (Some(o), Some(b), None),
            (Err(e), _) | (_, Err(e)) => (None, None, Some(e.to_string())),
        }
    }

    fn oracle_config(&self) -> OracleConfig {
        let mut o = self.config.oracle.clone();
        if let Some(m) = &self.config.sut.manifest {
            o.forbidden_stderr.extend(m.forbidden_stderr.iter().cloned());
        }
        o
    }

    /// Runs iteration `k` of one loop. Returns incidental triggering tests
    /// as (pass name, test id, code).
    fn run_iteration(
        &self,
        st: &mut LoopState,
        req: &Requirement,
        gen_shots: &[FewShotExample],
        oracle: &OracleConfig,
        k: u32,
    ) -> io::Result<Vec<(String, String, String)>> {
        let c = &self.config.campaign;
        let d = self.descriptor();
        let budget = self.config.prompt.budget();
        let iter_dir = self.dir.join("tests").join(&st.key).join(format!("{k:04}"));
        fs::create_dir_all(&iter_dir)?;
        let use_feedback = c.strategy != Strategy::NoFeedback && !st.pool.is_empty();
        let mut bundle = None;
        if use_feedback {
            if let Ok(mut ids) = st.pool.select_by(c.strategy, c.feedback_examples) {
                ids.sort();
                let examples: Vec<TestProgram> = ids
                    .iter()
                    .map(|id| TestProgram::standalone(id.clone(), st.programs.get(id).cloned().unwrap_or_default()))
                    .collect();
                bundle = build_feedback_prompt(req, &st.name, &examples, d, budget).ok();
            }
        }
        let bundle: PromptBundle = match bundle {
            Some(b) => b,
            None => match build_generation_prompt(req, &st.name, gen_shots, d, budget) {
                Ok(b) => b,
                Err(e) => {
                    st.blocked = Some(format!("generation prompt: {e}"));
                    return Ok(Vec::new());
                }
            },
        };
        if bundle.family == PromptFamily::Feedback {
            st.feedback_iterations += 1;
        }
        let seed = seed_u64(&[
            b"generate",
            &c.seed.to_le_bytes(),
            st.name.as_bytes(),
            &k.to_le_bytes(),
        ]);
        let mut header = IterationRecord {
            iteration: k,
            family: bundle.family,
            example_ids: bundle.example_ids.clone(),
            prompt_hash: bundle.hash(),
            seed,
            tests: 0,
            triggering: 0,
            backend_error: None,
        };
        let texts = match self.generation.complete(&self.config.models.generation, &bundle, seed) {
            Ok(r) => r.texts,
            Err(e) => {
                st.backend_failures += c.batch_size as u64;
                header.backend_error = Some(e.to_string());
                write_json(&iter_dir.join("iteration.json"), &header)?;
                fs::write(iter_dir.join("tests.jsonl"), b"")?;
                return Ok(Vec::new());
            }
        };
        let mut lines = String::new();
        let mut new_ids = Vec::new();
        let mut incidental = Vec::new();
        for (i, text) in texts.iter().enumerate() {
            let code = extract_code_blocks(text, &self.config.prompt.code_tag, Some(&bundle.text))
                .into_iter()
                .next()
                .unwrap_or_default();
            let program = TestProgram {
                id: format!("{}-{k:04}-{i:03}", st.key),
                opt_id: st.opt_id.clone(),
                code,
                iteration: k,
                parent_example_ids: bundle.example_ids.clone(),
                source_prompt_hash: header.prompt_hash.clone(),
            };
            let (opt_r, base_r, harness_error) = self.run_one(&program);
            let mut rec = TestRecord {
                program,
                optimized: None,
                baseline: None,
                verdict: None,
                triggered: BTreeSet::new(),
                reward: false,
                harness_error,
            };
            if let (Some(o), Some(b)) = (opt_r, base_r) {
                let v = judge(&o, &b, oracle);
                rec.triggered = parse_trigger_log(&o.trigger_log);
                if v.kind == VerdictKind::Invalid {
                    st.invalid_tests += 1;
                }
                rec.reward = rec.triggered.contains(&st.name) && v.kind != VerdictKind::Invalid;
                if oracle.is_bug(v.kind)
                    && st.bugs.record(&v, &rec.program.id, &rec.program.code, &rec.triggered) {
                        st.evidence.insert(
                            v.dedup_key.clone(),
                            Evidence {
                                test_id: rec.program.id.clone(),
                                code: rec.program.code.clone(),
                                optimized: o.clone(),
                                baseline: b.clone(),
                                verdict: v.clone(),
                            },
                        );
                    }
                if v.kind != VerdictKind::Invalid {
                    for name in rec.triggered.iter().filter(|n| **n != st.name) {
                        incidental.push((name.clone(), rec.program.id.clone(), rec.program.code.clone()));
                    }
                }
                rec.optimized = Some(o);
                rec.baseline = Some(b);
                rec.verdict = Some(v);
            } else {
                st.harness_failures += 1;
            }
            st.stats.submit(
                &st.name.clone(),
                &TriggerRecord {
                    test_id: rec.program.id.clone(),
                    triggered: rec.triggered.clone(),
                    iteration: k,
                },
            );
            if rec.reward {
                new_ids.push(rec.program.id.clone());
                st.programs.insert(rec.program.id.clone(), rec.program.code.clone());
            }
            lines.push_str(&serde_json::to_string(&rec)?);
            lines.push('\n');
        }
        let t = new_ids.len() as u64;
        let f = texts.len() as u64 - t;
        header.tests = texts.len();
        header.triggering = t;
        if t > 0 && st.first_trigger_iteration.is_none() {
            st.first_trigger_iteration = Some(k);
        }
        let pool_err = |e: optfuzz_core::bandit::BanditError| io::Error::other(e.to_string());
        if bundle.family == PromptFamily::Feedback {
            if t + f > 0 {
                st.pool.update(&bundle.example_ids, t, f).map_err(pool_err)?;
            }
            st.pool.admit_new(&bundle.example_ids, &new_ids).map_err(pool_err)?;
        } else {
            for id in &new_ids {
                st.pool.seed_arm(id).map_err(pool_err)?;
            }
        }
        fs::write(iter_dir.join("tests.jsonl"), lines)?;
        write_json(&iter_dir.join("iteration.json"), &header)?;
        Ok(incidental)
    }

    /// Runs every remaining iteration (or `stop_after` of them) across all
    /// loops, checkpointing after each one.
    pub fn run(&self, options: RunOptions) -> Result<RunOutcome, Error> {
        let mut wall = Instant::now();
        let c = &self.config.campaign;
        let mut states = self.load_states()?;
        let oracle = self.oracle_config();
        let gen_shots = self.generation_shots();
        let timing = Mutex::new(Timing::load(&self.dir).unwrap_or_default());
        let workers = rayon::ThreadPoolBuilder::new()
            .num_threads(c.workers)
            .build()
            .map_err(|e| Error::Environment(e.to_string()))?;

        // Requirements first; a loop whose requirement fails is blocked.
        let reqs: Vec<Option<Requirement>> = workers.install(|| {
            states
                .par_iter_mut()
                .zip(self.catalog.par_iter())
                .map(|(st, opt)| {
                    if st.blocked.is_some() {
                        return None;
                    }
                    match self.requirement(&st.key, opt) {
                        Ok(r) => Some(r),
                        Err(e) => {
                            st.blocked = Some(format!("requirement: {e}"));
                            None
                        }
                    }
                })
                .collect()
        });

        let start = states.iter().map(|s| s.next_iteration).min().unwrap_or(0);
        let end = match options.stop_after {
            Some(n) => c.iterations.min(start.saturating_add(n)),
            None => c.iterations,
        };
        for k in start..end {
            let results: Vec<io::Result<Vec<(String, String, String)>>> = workers.install(|| {
                states
                    .par_iter_mut()
                    .zip(reqs.par_iter())
                    .map(|(st, req)| {
                        if st.next_iteration > k {
                            return Ok(Vec::new());
                        }
                        let t0 = Instant::now();
                        let out = match (req, &st.blocked) {
                            (Some(r), None) => self.run_iteration(st, r, &gen_shots, &oracle, k),
                            _ => Ok(Vec::new()),
                        };
                        st.next_iteration = k + 1;
                        let mut t = timing.lock().expect("timing poisoned");
                        *t.per_opt.entry(st.key.clone()).or_default() += t0.elapsed().as_secs_f64();
                        out
                    })
                    .collect()
            });
            let mut shared = Vec::new();
            for r in results {
                shared.extend(r?);
            }
            if c.share_incidental {
                share(&mut states, shared);
            }
            for st in &states {
                write_json(&self.pool_path(&st.key), st)?;
            }
            let mut t = timing.lock().expect("timing poisoned");
            t.wall_seconds += wall.elapsed().as_secs_f64();
            wall = Instant::now();
            write_json(&self.dir.join(report::TIMING_JSON), &*t)?;
            drop(t);
        }
        let done = states.iter().all(|s| s.next_iteration >= c.iterations);
        let report = if done { Some(self.finish(&states)?) } else { None };
        let completed = states.iter().map(|s| s.next_iteration).min().unwrap_or(0);
        if done && states.iter().all(|s| s.blocked.is_some()) {
            return Err(Error::Environment(format!(
                "every optimization is blocked; first reason: {}",
                states[0].blocked.as_deref().unwrap_or("")
            )));
        }
        Ok(RunOutcome {
            report,
            completed_iterations: completed,
            analysis_calls: self.analysis_calls(),
            generation_calls: self.generation_calls(),
        })
    }

    fn finish(&self, states: &[LoopState]) -> Result<CampaignReport, Error> {
        let c = &self.config.campaign;
        let mut stats = TriggerStats::default();
        let mut bugs = BugStore::default();
        let mut evidence: BTreeMap<String, &Evidence> = BTreeMap::new();
        for st in states {
            stats.merge(&st.stats);
            bugs.merge(&st.bugs);
            for (k, e) in &st.evidence {
                evidence
                    .entry(k.clone())
                    .and_modify(|cur| {
                        if e.test_id < cur.test_id {
                            *cur = e;
                        }
                    })
                    .or_insert(e);
            }
        }

        let bugs_dir = self.dir.join("bugs");
        if bugs_dir.exists() {
            fs::remove_dir_all(&bugs_dir)?;
        }
        let ext = self.sut.file_extension().to_string();
        let mut summaries = Vec::new();
        for (key, b) in &bugs.reports {
            let name = format!("{}-{}", b.kind.as_str(), short_hex(key.as_bytes()));
            let d = bugs_dir.join(&name);
            fs::create_dir_all(&d)?;
            fs::write(d.join(format!("reproducer.{ext}")), &b.reproducer)?;
            write_json(&d.join("bug.json"), b)?;
            if let Some(e) = evidence.get(key) {
                write_json(&d.join("optimized.json"), &e.optimized)?;
                write_json(&d.join("baseline.json"), &e.baseline)?;
                write_json(&d.join("verdict.json"), &e.verdict)?;
            }
            summaries.push(BugSummary {
                dedup_key: key.clone(),
                kind: b.kind,
                first_test_id: b.first_test_id.clone(),
                occurrences: b.occurrences,
                opt_context: b.opt_context.clone(),
                dir: format!("bugs/{name}"),
            });
        }

        let mut optimizations = Vec::new();
        let mut totals = Totals::default();
        let mut metrics = String::new();
        for st in states {
            let s = st.stats.per_target.get(&st.name).cloned().unwrap_or_default();
            let row = OptReport {
                name: st.name.clone(),
                key: st.key.clone(),
                id: st.opt_id.clone(),
                blocked: st.blocked.clone(),
                tests: s.tests as u64,
                triggering_tests: s.triggering_tests as u64,
                incidental: s.incidental.iter().map(|(k, v)| (k.clone(), *v as u64)).collect(),
                first_trigger_iteration: st.first_trigger_iteration,
                feedback_iterations: st.feedback_iterations,
                pool_size: st.pool.len(),
                invalid_tests: st.invalid_tests,
                backend_failures: st.backend_failures,
                harness_failures: st.harness_failures,
            };
            totals.tests += row.tests;
            totals.triggering_tests += row.triggering_tests;
            totals.invalid_tests += row.invalid_tests;
            totals.backend_failures += row.backend_failures;
            totals.harness_failures += row.harness_failures;
            totals.blocked_optimizations += usize::from(row.blocked.is_some());
            metrics.push_str(&serde_json::to_string(&serde_json::json!({
                "opt": st.name,
                "tests": s.tests,
                "triggering_tests": s.triggering_tests,
                "incidental": s.incidental,
                "series": s.series,
            }))?);
            metrics.push('\n');
            optimizations.push(row);
        }
        let triggered = stats.distinct_triggered();
        totals.triggered_optimizations = triggered.len();
        totals.targets_hit = stats.targets_hit().len();
        metrics.push_str(&serde_json::to_string(&serde_json::json!({ "distinct_triggered": triggered }))?);
        metrics.push('\n');
        write_atomic(&self.dir.join("metrics.jsonl"), metrics.as_bytes())?;

        let r = CampaignReport {
            sut: self.descriptor().name.clone(),
            strategy: c.strategy,
            requirement_format: c.requirement_format,
            iterations: c.iterations,
            batch_size: c.batch_size,
            seed: c.seed,
            optimizations,
            triggered,
            totals,
            bugs: summaries,
        };
        write_atomic(&self.dir.join(report::REPORT_JSON), r.to_json().as_bytes())?;
        let timing = Timing::load(&self.dir);
        write_atomic(&self.dir.join(report::REPORT_TXT), report::render_table(&r, timing.as_ref()).as_bytes())?;
        Ok(r)
    }
}

/// Seeds incidental triggering tests into the pools of the passes they hit.
fn share(states: &mut [LoopState], mut found: Vec<(String, String, String)>) {
    found.sort();
    for (name, id, code) in found {
        for st in states.iter_mut().filter(|s| s.name == name && s.blocked.is_none()) {
            if st.pool.get(&id).is_none() && st.pool.seed_arm(&id).is_ok() {
                st.programs.insert(id.clone(), code.clone());
            }
        }
    }
}

/// Reads every iteration header of one loop, in order.
pub fn read_iterations(dir: &Path, key: &str) -> Result<Vec<IterationRecord>, Error> {
    let root = dir.join("tests").join(key);
    let mut entries: Vec<_> = fs::read_dir(&root)
        .map_err(|e| Error::Corrupt(format!("{}: {e}", root.display())))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .collect();
    entries.sort();
    entries.iter().map(|p| read_json(&p.join("iteration.json"))).collect()
}

/// Reads every test record of one iteration.
pub fn read_tests(dir: &Path, key: &str, iteration: u32) -> Result<Vec<TestRecord>, Error> {
    let p = dir.join("tests").join(key).join(format!("{iteration:04}")).join("tests.jsonl");
    let text = fs::read_to_string(&p).map_err(|e| Error::Corrupt(format!("{}: {e}", p.display())))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::Corrupt(format!("{}: {e}", p.display()))))
        .collect()
}

/// Instruction text for a summarization shot, exposed for the CLI.
pub fn summarize_instruction(opt: &Optimization, d: &SutDescriptor) -> String {
    summarization_instruction(&opt.name, opt.kind, d)
}
