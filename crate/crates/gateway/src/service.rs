//! The transport-independent gateway: episode table, dispatch, persistence.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Instant;

use gravlab_core::env::{create_session, Protocol};
use gravlab_core::eval::{derive_thresholds, RunRecord};
use gravlab_core::library::ScenarioLibrary;
use gravlab_core::tasks::{build_catalog, Catalog, TaskManifest};
use log::{info, warn};

use crate::config::Config;
use crate::episode::{Episode, TranscriptLine};
use crate::protocol::{ProtocolKind, Reply, Request};
use crate::GatewayError;

const KNOWN_KINDS: [&str; 4] = ["start_task", "observe", "full_table", "submit_answer"];

struct Slot {
    episode: Episode,
    opened: Instant,
    last_seen: Instant,
}

/// Append-only results directory: `runs.jsonl` plus one transcript file per
/// episode under `transcripts/`.
#[derive(Debug)]
pub struct ResultSink {
    dir: PathBuf,
    lock: Mutex<()>,
}

impl ResultSink {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into(), lock: Mutex::new(()) }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn transcript_path(&self, token: &str) -> PathBuf {
        self.dir.join("transcripts").join(format!("{token}.jsonl"))
    }

    fn persist(&self, record: &RunRecord, transcript: &str, token: &str) -> std::io::Result<()> {
        let _g = self.lock.lock().unwrap_or_else(|p| p.into_inner());
        let path = self.transcript_path(token);
        std::fs::create_dir_all(path.parent().expect("transcript dir"))?;
        let tmp = path.with_extension("jsonl.tmp");
        std::fs::write(&tmp, transcript)?;
        std::fs::rename(&tmp, &path)?;
        let mut line = serde_json::to_vec(record).map_err(std::io::Error::other)?;
        line.push(b'\n');
        let mut f = OpenOptions::new().create(true).append(true).open(self.dir.join("runs.jsonl"))?;
        f.write_all(&line)
    }
}

pub struct Gateway {
    library: Arc<ScenarioLibrary>,
    catalog: Arc<Catalog>,
    config: Config,
    episodes: Mutex<HashMap<String, Arc<Mutex<Slot>>>>,
    finished: Mutex<HashMap<String, RunRecord>>,
    next_token: AtomicU64,
    sink: Option<ResultSink>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

/// Library, and catalog with thresholds, as described by `config`.
/// Thresholds missing from the manifest are derived from baseline gaps.
pub fn load_catalog(config: &Config) -> Result<(ScenarioLibrary, Catalog), GatewayError> {
    let library = match &config.scenario_dir {
        Some(d) => ScenarioLibrary::load_dir(d)?,
        None => ScenarioLibrary::builtin(),
    };
    let manifest = match &config.catalog_manifest {
        Some(p) => TaskManifest::load(p)?,
        None => TaskManifest::default(),
    };
    let tasks = manifest.task_list()?;
    let mut catalog = build_catalog(&library, &tasks)?;
    let missing = tasks.iter().any(|t| !manifest.thresholds.contains_key(&t.id));
    if missing {
        info!("deriving thresholds from uniform-baseline gaps");
        let derived = derive_thresholds(&library, &catalog)
            .into_iter()
            .filter(|r| !manifest.thresholds.contains_key(&r.task))
            .map(|r| (r.task, r.threshold_pct))
            .collect();
        catalog.apply_thresholds(&derived);
    }
    Ok((library, catalog))
}

impl Gateway {
    /// A gateway persisting into `config.results_dir`.
    pub fn new(library: Arc<ScenarioLibrary>, catalog: Arc<Catalog>, config: Config) -> Self {
        let sink = Some(ResultSink::new(config.results_dir.clone()));
        Self {
            library,
            catalog,
            config,
            episodes: Mutex::new(HashMap::new()),
            finished: Mutex::new(HashMap::new()),
            next_token: AtomicU64::new(1),
            sink,
        }
    }

    /// Same as [`Gateway::new`] but keeps results in memory only.
    pub fn in_memory(library: Arc<ScenarioLibrary>, catalog: Arc<Catalog>, config: Config) -> Self {
        Self { sink: None, ..Self::new(library, catalog, config) }
    }

    pub fn from_config(config: Config) -> Result<Self, GatewayError> {
        let (library, catalog) = load_catalog(&config)?;
        Ok(Self::new(Arc::new(library), Arc::new(catalog), config))
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn library(&self) -> &ScenarioLibrary {
        &self.library
    }

    pub fn sink(&self) -> Option<&ResultSink> {
        self.sink.as_ref()
    }

    /// Decodes, handles and encodes one frame body.
    pub fn handle_bytes(&self, body: &[u8]) -> Vec<u8> {
        let reply = match serde_json::from_slice::<serde_json::Value>(body) {
            Err(e) => Reply::error(None, "malformed", format!("not JSON: {e}")),
            Ok(v) => {
                let token = v.get("token").and_then(|t| t.as_str()).map(str::to_string);
                match v.get("kind").and_then(|k| k.as_str()) {
                    None => Reply::error(token.as_deref(), "malformed", "missing `kind`"),
                    Some(k) if !KNOWN_KINDS.contains(&k) => {
                        Reply::error(token.as_deref(), "unknown_kind", format!("unknown message kind `{k}`"))
                    }
                    Some(_) => match serde_json::from_value::<Request>(v) {
                        Ok(req) => self.handle(req),
                        Err(e) => Reply::error(token.as_deref(), "malformed", e.to_string()),
                    },
                }
            }
        };
        serde_json::to_vec(&reply).expect("replies serialise")
    }

    pub fn handle(&self, request: Request) -> Reply {
        let Some(token) = request.token().map(str::to_string) else {
            return self.start(&request, None);
        };
        let slot = lock(&self.episodes).get(&token).cloned();
        let Some(slot) = slot else {
            return if lock(&self.finished).contains_key(&token) {
                Reply::error(Some(&token), "episode_closed", "the episode has already ended")
            } else {
                Reply::error(Some(&token), "unknown_session", format!("no episode `{token}`"))
            };
        };
        let mut s = lock(&slot);
        if s.episode.is_closed() {
            return Reply::error(Some(&token), "episode_closed", "the episode has already ended");
        }
        s.last_seen = Instant::now();
        let reply = s.episode.handle(&request);
        if s.episode.is_closed() {
            self.finish(&token, &s);
        }
        reply
    }

    /// Opens an episode; `token` forces a specific token (replay).
    fn start(&self, request: &Request, token: Option<String>) -> Reply {
        let Request::StartTask { instance, protocol, budget, .. } = request else {
            return Reply::error(None, "protocol", "expected start_task");
        };
        let Some(inst) = self.catalog.get(instance) else {
            return Reply::error(None, "not_found", format!("no task instance `{instance}`"));
        };
        let proto = match protocol {
            ProtocolKind::FullObs => Protocol::FullObs,
            ProtocolKind::BudgetObs => Protocol::budget(budget.unwrap_or(self.config.budget)),
        };
        if proto.limit() == Some(0) {
            return Reply::error(None, "protocol", "budget must be positive");
        }
        let session = match create_session(&self.library, &inst.scenario_id, proto) {
            Ok(s) => s,
            Err(e) => return Reply::error(None, e.code(), e.to_string()),
        };
        let token = token.unwrap_or_else(|| format!("ep-{:06}", self.next_token.fetch_add(1, Ordering::SeqCst)));
        let (episode, reply) =
            Episode::open(token.clone(), inst.clone(), session, request, self.config.disclose_threshold);
        let now = Instant::now();
        lock(&self.episodes).insert(token, Arc::new(Mutex::new(Slot { episode, opened: now, last_seen: now })));
        reply
    }

    fn finish(&self, token: &str, slot: &Slot) {
        let transcript = slot.episode.transcript();
        let path = self.sink.as_ref().map(|s| s.transcript_path(token).display().to_string());
        let record = slot.episode.run_record(slot.opened.elapsed().as_secs_f64(), path);
        if let Some(sink) = &self.sink {
            if let Err(e) = sink.persist(&record, &transcript, token) {
                warn!("could not persist {token}: {e}");
            }
        }
        lock(&self.episodes).remove(token);
        lock(&self.finished).insert(token.to_string(), record);
    }

    /// Closes an open episode as incorrect with `flag`. Returns its record,
    /// or the existing record when it had already finished.
    pub fn abort(&self, token: &str, flag: &str) -> Option<RunRecord> {
        let slot = lock(&self.episodes).get(token).cloned();
        if let Some(slot) = slot {
            let mut s = lock(&slot);
            if !s.episode.is_closed() {
                s.episode.abort(flag);
                self.finish(token, &s);
            }
        }
        self.record(token)
    }

    /// Record of a finished episode.
    pub fn record(&self, token: &str) -> Option<RunRecord> {
        lock(&self.finished).get(token).cloned()
    }

    /// Transcript of an open episode.
    pub fn transcript(&self, token: &str) -> Option<String> {
        let slot = lock(&self.episodes).get(token).cloned()?;
        let s = lock(&slot);
        Some(s.episode.transcript())
    }

    pub fn open_episodes(&self) -> usize {
        lock(&self.episodes).len()
    }

    /// Closes episodes idle for longer than the configured timeout.
    pub fn expire_idle(&self) -> usize {
        let timeout = self.config.idle_timeout();
        let stale: Vec<String> = lock(&self.episodes)
            .iter()
            .filter(|(_, s)| lock(s).last_seen.elapsed() > timeout)
            .map(|(t, _)| t.clone())
            .collect();
        for t in &stale {
            info!("expiring idle episode {t}");
            self.abort(t, "expired");
        }
        stale.len()
    }

    /// Re-issues the requests of a recorded transcript against a fresh
    /// in-memory episode and returns the indices of lines whose
    /// re-serialised form differs from the recording.
    pub fn replay(&self, transcript: &str) -> Result<Vec<usize>, GatewayError> {
        let raw: Vec<&str> = transcript.lines().filter(|l| !l.trim().is_empty()).collect();
        let parsed: Vec<TranscriptLine> =
            raw.iter().map(|l| serde_json::from_str(l)).collect::<Result<_, _>>().map_err(GatewayError::Json)?;
        let first = parsed.first().ok_or_else(|| GatewayError::Replay("empty transcript".into()))?;
        let token = match &first.reply {
            Reply::StartTask(s) => s.token.clone(),
            _ => return Err(GatewayError::Replay("transcript does not begin with a started task".into())),
        };
        let scratch = Gateway::in_memory(self.library.clone(), self.catalog.clone(), self.config.clone());
        let mut mismatches = Vec::new();
        for (i, line) in parsed.iter().enumerate() {
            let reply = match line.request {
                Request::StartTask { .. } if i == 0 => scratch.start(&line.request, Some(token.clone())),
                _ => scratch.handle(line.request.clone()),
            };
            let again = serde_json::to_string(&TranscriptLine { seq: line.seq, request: line.request.clone(), reply })
                .map_err(GatewayError::Json)?;
            if again != raw[i] {
                mismatches.push(i);
            }
        }
        Ok(mismatches)
    }
}
