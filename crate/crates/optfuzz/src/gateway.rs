//! Completion gateway: response cache, record/replay store and the HTTP
//! backend. The stub backend lives in the core crate.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::thread;
use std::time::{Duration, Instant};

use optfuzz_core::model::stub::{StubBackend, StubConfig};
use optfuzz_core::model::{cap_texts, truncate_at_stop, CompletionBackend, CompletionResult, ModelError, ModelRole, RoleKind};
use optfuzz_core::prompt::{PromptBundle, BLOCK_SEPARATOR};
use serde::{Deserialize, Serialize};

pub const REPLAY_ID: &str = "replay";

/// One stored completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub backend: String,
    pub role: RoleKind,
    pub prompt_hash: String,
    pub seed: u64,
    pub texts: Vec<String>,
    #[serde(default)]
    pub truncated: bool,
}

type Key = (String, u64);

/// Completions keyed by (prompt hash, seed), optionally appended to a
/// line-delimited file as they arrive.
#[derive(Default)]
pub struct RecordStore {
    entries: RwLock<HashMap<Key, Record>>,
    sink: Option<Mutex<File>>,
}

impl RecordStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads `path` if it exists, then appends new records to it.
    pub fn open(path: &Path) -> io::Result<Self> {
        let entries = if path.exists() { load(path)? } else { HashMap::new() };
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            entries: RwLock::new(entries),
            sink: Some(Mutex::new(file)),
        })
    }

    /// Loads `path` without recording.
    pub fn read_only(path: &Path) -> io::Result<Self> {
        Ok(Self {
            entries: RwLock::new(load(path)?),
            sink: None,
        })
    }

    pub fn get(&self, prompt_hash: &str, seed: u64) -> Option<Record> {
        let map = self.entries.read().expect("record store poisoned");
        map.get(&(prompt_hash.to_string(), seed)).cloned()
    }

    pub fn insert(&self, record: Record) -> io::Result<()> {
        let key = (record.prompt_hash.clone(), record.seed);
        let mut map = self.entries.write().expect("record store poisoned");
        if map.contains_key(&key) {
            return Ok(());
        }
        if let Some(sink) = &self.sink {
            let mut line = serde_json::to_string(&record)?;
            line.push('\n');
            let mut f = sink.lock().expect("record sink poisoned");
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        map.insert(key, record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("record store poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn load(path: &Path) -> io::Result<HashMap<Key, Record>> {
    let mut map = HashMap::new();
    for (n, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: Record = serde_json::from_str(&line).map_err(|e| {
            io::Error::new(io::ErrorKind::InvalidData, format!("{}:{}: {e}", path.display(), n + 1))
        })?;
        map.entry((r.prompt_hash.clone(), r.seed)).or_insert(r);
    }
    Ok(map)
}

/// Serves only what a store holds.
pub struct ReplayBackend {
    store: Arc<RecordStore>,
}

impl ReplayBackend {
    pub fn new(store: Arc<RecordStore>) -> Self {
        Self { store }
    }
}

impl CompletionBackend for ReplayBackend {
    fn id(&self) -> &str {
        REPLAY_ID
    }

    fn complete(&self, _role: &ModelRole, prompt: &PromptBundle, seed: u64) -> Result<CompletionResult, ModelError> {
        let hash = prompt.hash();
        let r = self.store.get(&hash, seed).ok_or(ModelError::ReplayMiss { prompt_hash: hash, seed })?;
        Ok(CompletionResult {
            texts: r.texts,
            backend_meta: format!("{REPLAY_ID}:{}", r.backend),
            latency: Duration::ZERO,
            from_cache: true,
            truncated: r.truncated,
        })
    }
}

fn default_url() -> String {
    "http://127.0.0.1:8080/complete".into()
}
fn default_key_env() -> Option<String> {
    Some("OPTFUZZ_API_KEY".into())
}
fn default_in_flight() -> usize {
    4
}
fn default_attempts() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    500
}
fn default_timeout_s() -> u64 {
    120
}
fn default_stop() -> Vec<String> {
    vec![BLOCK_SEPARATOR.into()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpConfig {
    #[serde(default = "default_url")]
    pub url: String,
    /// Environment variable holding a bearer token, if any.
    #[serde(default = "default_key_env")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_attempts")]
    pub attempts: u32,
    /// Delay before the second attempt; doubles after each failure.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
    #[serde(default = "default_stop")]
    pub stop: Vec<String>,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            url: default_url(),
            api_key_env: default_key_env(),
            max_in_flight: default_in_flight(),
            attempts: default_attempts(),
            backoff_ms: default_backoff_ms(),
            timeout_s: default_timeout_s(),
            stop: default_stop(),
        }
    }
}

#[derive(Serialize)]
struct HttpRequest<'a> {
    prompt: &'a str,
    temperature: f64,
    n: usize,
    max_output: usize,
    stop: &'a [String],
    seed: u64,
}

#[derive(Deserialize)]
struct HttpResponse {
    texts: Vec<String>,
}

struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

struct SlotGuard<'a>(&'a Slots);

impl Slots {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().expect("slots poisoned");
        while *free == 0 {
            free = self.cv.wait(free).expect("slots poisoned");
        }
        *free -= 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("slots poisoned") += 1;
        self.0.cv.notify_one();
    }
}

pub struct HttpBackend {
    config: HttpConfig,
    agent: ureq::Agent,
    token: Option<String>,
    slots: Slots,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_s)))
            .build()
            .into();
        let token = config.api_key_env.as_deref().and_then(|k| std::env::var(k).ok());
        Self {
            slots: Slots {
                free: Mutex::new(config.max_in_flight.max(1)),
                cv: Condvar::new(),
            },
            config,
            agent,
            token,
        }
    }

    fn attempt(&self, body: &HttpRequest<'_>) -> Result<HttpResponse, String> {
        let mut req = self.agent.post(&self.config.url);
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = req.send_json(body).map_err(|e| e.to_string())?;
        resp.body_mut().read_json::<HttpResponse>().map_err(|e| e.to_string())
    }
}

impl CompletionBackend for HttpBackend {
    fn id(&self) -> &str {
        "http"
    }

    fn complete(&self, role: &ModelRole, prompt: &PromptBundle, seed: u64) -> Result<CompletionResult, ModelError> {
        let _slot = self.slots.acquire();
        let body = HttpRequest {
            prompt: &prompt.text,
            temperature: role.temperature,
            n: role.samples_per_call,
            max_output: role.max_output,
            stop: &self.config.stop,
            seed,
        };
        let start = Instant::now();
        let mut delay = Duration::from_millis(self.config.backoff_ms);
        let mut last = String::new();
        for attempt in 0..self.config.attempts.max(1) {
            if attempt > 0 {
                thread::sleep(delay);
                delay *= 2;
            }
            match self.attempt(&body) {
                Ok(r) => {
                    if r.texts.len() != role.samples_per_call {
                        return Err(ModelError::InvalidResponse(format!(
                            "expected {} texts, got {}",
                            role.samples_per_call,
                            r.texts.len()
                        )));
                    }
                    let mut texts: Vec<String> = r
                        .texts
                        .iter()
                        .map(|t| {
                            let mut t = t.as_str();
                            for s in &self.config.stop {
                                t = truncate_at_stop(t, s);
                            }
                            t.to_string()
                        })
                        .collect();
                    let truncated = cap_texts(&mut texts, role.max_output);
                    return Ok(CompletionResult {
                        texts,
                        backend_meta: self.config.url.clone(),
                        latency: start.elapsed(),
                        from_cache: false,
                        truncated,
                    });
                }
                Err(e) => last = e,
            }
        }
        Err(ModelError::BackendUnavailable(format!(
            "{} after {} attempts: {last}",
            self.config.url, self.config.attempts
        )))
    }
}

/// Builds the backend named by `endpoint`. Only `http` constructs a network
/// client.
pub fn make_backend(
    endpoint: &str,
    stub: &StubConfig,
    http: &HttpConfig,
    replay: Option<&Arc<RecordStore>>,
) -> Result<Arc<dyn CompletionBackend>, String> {
    match endpoint {
        "stub" => Ok(Arc::new(StubBackend::new(stub.clone()))),
        "http" => Ok(Arc::new(HttpBackend::new(http.clone()))),
        REPLAY_ID => replay
            .map(|s| Arc::new(ReplayBackend::new(s.clone())) as Arc<dyn CompletionBackend>)
            .ok_or_else(|| "replay endpoint needs a record store".to_string()),
        other => Err(format!("unknown model endpoint `{other}` (expected stub, http or replay)")),
    }
}

/// Front door for one model role: consults the store, calls the backend on
/// a miss, and records the answer.
pub struct Gateway {
    backend: Arc<dyn CompletionBackend>,
    store: Arc<RecordStore>,
    backend_calls: AtomicU64,
}

impl Gateway {
    pub fn new(backend: Arc<dyn CompletionBackend>, store: Arc<RecordStore>) -> Self {
        Self {
            backend,
            store,
            backend_calls: AtomicU64::new(0),
        }
    }

    pub fn backend_id(&self) -> &str {
        self.backend.id()
    }

    /// Calls that reached a model backend. Replayed and cached answers do
    /// not count.
    pub fn backend_calls(&self) -> u64 {
        self.backend_calls.load(Ordering::Relaxed)
    }

    pub fn complete(&self, role: &ModelRole, prompt: &PromptBundle, seed: u64) -> Result<CompletionResult, ModelError> {
        let hash = prompt.hash();
        let id = self.backend.id();
        if let Some(r) = self.store.get(&hash, seed) {
            if r.backend == id || id == REPLAY_ID {
                return Ok(CompletionResult {
                    texts: r.texts,
                    backend_meta: r.backend,
                    latency: Duration::ZERO,
                    from_cache: true,
                    truncated: r.truncated,
                });
            }
        }
        if id == REPLAY_ID {
            return Err(ModelError::ReplayMiss { prompt_hash: hash, seed });
        }
        self.backend_calls.fetch_add(1, Ordering::Relaxed);
        let res = self.backend.complete(role, prompt, seed)?;
        self.store
            .insert(Record {
                backend: id.to_string(),
                role: role.role,
                prompt_hash: hash,
                seed,
                texts: res.texts.clone(),
                truncated: res.truncated,
            })
            .map_err(|e| ModelError::BackendUnavailable(format!("cannot record completion: {e}")))?;
        Ok(res)
    }
}

pub fn records_path(campaign_dir: &Path) -> PathBuf {
    campaign_dir.join("records").join("records.jsonl")
}

#[cfg(test)]
mod tests {
    use super::*;
    use optfuzz_core::prompt::PromptFamily;
    use std::io::Read;
    use std::net::TcpListener;

    fn bundle(text: &str) -> PromptBundle {
        PromptBundle {
            text: text.into(),
            target_opt: "add_zero_elim".into(),
            family: PromptFamily::Generate,
            example_ids: vec![],
        }
    }

    #[test]
    fn caches_and_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = records_path(dir.path());
        let store = Arc::new(RecordStore::open(&path).unwrap());
        let g = Gateway::new(Arc::new(StubBackend::new(StubConfig::default())), store.clone());
        let role = ModelRole::generation("stub");
        let a = g.complete(&role, &bundle("p"), 1).unwrap();
        let b = g.complete(&role, &bundle("p"), 1).unwrap();
        assert_eq!(a.texts.len(), 10);
        assert_eq!(a.texts, b.texts);
        assert!(!a.from_cache && b.from_cache);
        assert_eq!(g.backend_calls(), 1);
        g.complete(&role, &bundle("p"), 2).unwrap();
        assert_eq!(g.backend_calls(), 2);

        let replay = Arc::new(RecordStore::read_only(&path).unwrap());
        assert_eq!(replay.len(), 2);
        let r = Gateway::new(Arc::new(ReplayBackend::new(replay.clone())), replay);
        assert_eq!(r.complete(&role, &bundle("p"), 1).unwrap().texts, a.texts);
        assert!(matches!(r.complete(&role, &bundle("q"), 1), Err(ModelError::ReplayMiss { .. })));
        assert_eq!(r.backend_calls(), 0);
    }

    #[test]
    fn factory_rejects_unknown_endpoints() {
        let (s, h) = (StubConfig::default(), HttpConfig::default());
        assert!(make_backend("stub", &s, &h, None).is_ok());
        assert!(make_backend("replay", &s, &h, None).is_err());
        assert!(make_backend("gpt", &s, &h, None).is_err());
    }

    /// Answers each connection with the next canned status and body.
    fn serve(replies: Vec<(u16, String)>) -> (String, thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/complete", listener.local_addr().unwrap());
        let h = thread::spawn(move || {
            let mut bodies = Vec::new();
            for (status, body) in replies {
                let (mut s, _) = listener.accept().unwrap();
                let mut buf = vec![0u8; 65536];
                let mut got = Vec::new();
                loop {
                    let n = s.read(&mut buf).unwrap();
                    got.extend_from_slice(&buf[..n]);
                    let text = String::from_utf8_lossy(&got).to_string();
                    if let Some(end) = text.find("\r\n\r\n") {
                        let len = text
                            .lines()
                            .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse::<usize>().unwrap()))
                            .unwrap_or(0);
                        if got.len() >= end + 4 + len {
                            bodies.push(text[end + 4..].to_string());
                            break;
                        }
                    }
                    if n == 0 {
                        break;
                    }
                }
                let resp = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                s.write_all(resp.as_bytes()).unwrap();
            }
            bodies
        });
        (url, h)
    }

    fn http(url: String) -> HttpBackend {
        HttpBackend::new(HttpConfig {
            url,
            api_key_env: None,
            backoff_ms: 10,
            timeout_s: 5,
            ..HttpConfig::default()
        })
    }

    #[test]
    fn http_retries_then_succeeds() {
        let ok = r#"{"texts":["```\nprint(1)\n```\n### Instruction\nmore"]}"#.to_string();
        let (url, h) = serve(vec![(500, "{}".into()), (503, "{}".into()), (200, ok)]);
        let role = ModelRole {
            samples_per_call: 1,
            ..ModelRole::generation("http")
        };
        let r = http(url).complete(&role, &bundle("prompt"), 9).unwrap();
        assert_eq!(r.texts, ["```\nprint(1)\n```"]);
        let bodies = h.join().unwrap();
        assert_eq!(bodies.len(), 3);
        let req: serde_json::Value = serde_json::from_str(&bodies[2]).unwrap();
        assert_eq!(req["n"], 1);
        assert_eq!(req["seed"], 9);
        assert_eq!(req["prompt"], "prompt");
    }

    #[test]
    fn http_gives_up_after_three_attempts() {
        let (url, h) = serve(vec![(500, "{}".into()), (500, "{}".into()), (500, "{}".into())]);
        let e = http(url).complete(&ModelRole::analysis("http"), &bundle("p"), 0).unwrap_err();
        assert!(matches!(e, ModelError::BackendUnavailable(_)));
        assert_eq!(h.join().unwrap().len(), 3);
    }
}
