//! Offline backends: a rule-based model stand-in, a scripted queue, and recorded transcripts.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{equal_distance_index, BackendError, GenerationRequest, TemplateId, TextBackend};
use crate::interpreter::{InterpreterVersion, DEFAULT_SERIES};
use crate::source::{extract_imports, SourceFile, StdlibIndex};

/// Rule-based stand-in for a language model.
///
/// With `exploration == 0` every reply is a pure function of the prompt: imports come from the
/// static scanner, versions follow [`equal_distance_index`]. With `exploration > 0`, each
/// decision deviates with probability `exploration * temperature`, driven by a ChaCha stream
/// seeded from the request seed and the prompt text, so equal seeds give equal transcripts.
#[derive(Debug, Clone)]
pub struct SimulatedModel {
    default_series: InterpreterVersion,
    exploration: f64,
    bare_versions: BTreeMap<String, String>,
}

impl Default for SimulatedModel {
    fn default() -> Self {
        Self::deterministic()
    }
}

fn py2_markers() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r#"(?m)^\s*print\s+["'\w]|except\s+\w+\s*,\s*\w+\s*:|\bxrange\(|\.has_key\(|\bunicode\("#)
            .expect("py2 regex")
    })
}

fn quoted_name() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"['"]([A-Za-z_][\w.\-]*)['"]"#).expect("quoted regex"))
}

fn pinned_req() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"([A-Za-z0-9_.\-]+)==([^\s'\x22,)\]]+)").expect("pin regex"))
}

impl SimulatedModel {
    pub fn deterministic() -> Self {
        SimulatedModel {
            default_series: DEFAULT_SERIES,
            exploration: 0.0,
            bare_versions: BTreeMap::new(),
        }
    }

    pub fn stochastic(exploration: f64) -> Self {
        SimulatedModel {
            exploration: exploration.clamp(0.0, 1.0),
            ..Self::deterministic()
        }
    }

    pub fn with_default_series(mut self, series: InterpreterVersion) -> Self {
        self.default_series = series;
        self
    }

    /// Version answered for `module` by the catalog-free prompt.
    pub fn with_bare_version(mut self, module: impl Into<String>, version: impl Into<String>) -> Self {
        self.bare_versions.insert(module.into(), version.into());
        self
    }

    fn rng(&self, request: &GenerationRequest) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(request.seed.unwrap_or(0).to_le_bytes());
        h.update(request.prompt.text.as_bytes());
        h.update(request.prompt.attempt.to_le_bytes());
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(seed)
    }

    fn deviate(&self, rng: &mut ChaCha8Rng, temperature: f64) -> bool {
        let p = (self.exploration * temperature).clamp(0.0, 1.0);
        p > 0.0 && rng.gen::<f64>() < p
    }

    fn infer(&self, request: &GenerationRequest, rng: &mut ChaCha8Rng) -> String {
        let raw = request.prompt.bindings.get("raw_file").map(String::as_str).unwrap_or("");
        let mut series = if py2_markers().is_match(raw) {
            InterpreterVersion::PY27
        } else {
            self.default_series
        };
        if series != InterpreterVersion::PY27 && self.deviate(rng, request.temperature) {
            let py3 = InterpreterVersion::supported_py3();
            let pos = py3.iter().position(|v| *v == series).unwrap_or(0);
            let shifted = if rng.gen_bool(0.5) { pos.saturating_sub(1) } else { (pos + 1).min(py3.len() - 1) };
            series = py3[shifted];
        }
        let stdlib = StdlibIndex::bundled();
        let mut modules: Vec<String> = extract_imports(&SourceFile::from_text("prompt.py", raw))
            .into_iter()
            .map(|m| m.top_level_name)
            .filter(|n| !stdlib.is_stdlib(n, series).unwrap_or(false))
            .collect();
        if !modules.is_empty() && self.deviate(rng, request.temperature) {
            let drop = rng.gen_range(0..modules.len());
            modules.remove(drop);
        }
        let entries: Vec<serde_json::Value> = modules
            .iter()
            .map(|m| serde_json::json!({"module": m, "version": ""}))
            .collect();
        serde_json::json!({"python_modules": entries, "python_version": series.series()}).to_string()
    }

    fn pick_rag(&self, request: &GenerationRequest, rng: &mut ChaCha8Rng) -> String {
        let b = &request.prompt.bindings;
        let module = b.get("module_name").cloned().unwrap_or_default();
        let split = |key: &str| -> Vec<String> {
            b.get(key)
                .map(|s| s.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect())
                .unwrap_or_default()
        };
        let catalog = split("module_versions");
        let previous = split("previous_versions");
        let remaining: Vec<&String> = catalog.iter().filter(|v| !previous.contains(v)).collect();
        let version = if remaining.is_empty() {
            catalog.last().cloned().unwrap_or_default()
        } else if self.deviate(rng, request.temperature) {
            remaining[rng.gen_range(0..remaining.len())].clone()
        } else {
            remaining[equal_distance_index(remaining.len(), previous.len())].clone()
        };
        serde_json::json!({"module": module, "version": version}).to_string()
    }

    fn pick_bare(&self, request: &GenerationRequest) -> String {
        let module = request.prompt.bindings.get("module_name").cloned().unwrap_or_default();
        let version = self.bare_versions.get(&module).cloned().unwrap_or_else(|| "1.0".to_string());
        serde_json::json!({"module": module, "version": version}).to_string()
    }

    fn triage(&self, template: TemplateId, msg: &str) -> String {
        let first_quoted = || quoted_name().captures(msg).map(|c| c[1].to_string());
        let top = |s: String| s.split('.').next().unwrap_or("").to_string();
        let payload = match template {
            TemplateId::ExtractImportError => {
                let module = Regex::new(r"from '?([A-Za-z_][\w.]*)'?")
                    .ok()
                    .and_then(|re| re.captures_iter(msg).last().map(|c| c[1].to_string()))
                    .or_else(first_quoted)
                    .map(top);
                serde_json::json!({"module": module.unwrap_or_default()})
            }
            TemplateId::TriageModuleNotFound => {
                serde_json::json!({"module": first_quoted().map(top).unwrap_or_default()})
            }
            TemplateId::TriageVersionNotFound | TemplateId::TriageInvalidVersion => {
                let (module, version) = pinned_req()
                    .captures(msg)
                    .map(|c| (c[1].to_string(), c[2].to_string()))
                    .unwrap_or_default();
                serde_json::json!({"module": module, "requested_version": version})
            }
            TemplateId::TriageDependencyConflict => {
                let names: Vec<String> = pinned_req().captures_iter(msg).map(|c| c[1].to_string()).collect();
                serde_json::json!({"conflicting_modules": names.join(",")})
            }
            TemplateId::TriageAttributeError => {
                let quoted: Vec<String> =
                    quoted_name().captures_iter(msg).map(|c| c[1].to_string()).collect();
                serde_json::json!({
                    "module": quoted.first().cloned().map(top).unwrap_or_default(),
                    "attribute": quoted.get(1).cloned().unwrap_or_default(),
                })
            }
            TemplateId::TriageNonZeroCode => {
                let code = Regex::new(r"code:?\s*(\d+)")
                    .ok()
                    .and_then(|re| re.captures(msg).map(|c| c[1].to_string()));
                serde_json::json!({"exit_code": code.unwrap_or_else(|| "1".into())})
            }
            TemplateId::TriageSyntaxError => {
                let line = Regex::new(r"line (\d+)")
                    .ok()
                    .and_then(|re| re.captures(msg).map(|c| c[1].to_string()));
                serde_json::json!({"line_number": line.unwrap_or_default()})
            }
            _ => serde_json::json!({}),
        };
        payload.to_string()
    }
}

impl TextBackend for SimulatedModel {
    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        let mut rng = self.rng(request);
        let template = request.prompt.template;
        Ok(match template {
            TemplateId::InferFile => self.infer(request, &mut rng),
            TemplateId::PickVersionRag => self.pick_rag(request, &mut rng),
            TemplateId::PickVersionBare => self.pick_bare(request),
            _ => {
                let msg = request.prompt.bindings.get("error_msg").map(String::as_str).unwrap_or("");
                self.triage(template, msg)
            }
        })
    }
}

/// Replies served from per-prompt queues, in order. Keyed by prompt id so concurrent callers of
/// different prompts do not steal each other's replies.
#[derive(Default)]
pub struct ScriptedBackend {
    queues: Mutex<HashMap<TemplateId, VecDeque<String>>>,
    calls: AtomicUsize,
    fallback: Option<Arc<dyn TextBackend>>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn script<I, S>(self, template: TemplateId, replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.queues
            .lock()
            .expect("script lock")
            .entry(template)
            .or_default()
            .extend(replies.into_iter().map(Into::into));
        self
    }

    /// Backend consulted once a queue runs dry.
    pub fn or_else(mut self, fallback: Arc<dyn TextBackend>) -> Self {
        self.fallback = Some(fallback);
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl TextBackend for ScriptedBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let next = self
            .queues
            .lock()
            .expect("script lock")
            .get_mut(&request.prompt.template)
            .and_then(VecDeque::pop_front);
        match (next, &self.fallback) {
            (Some(reply), _) => Ok(reply),
            (None, Some(fallback)) => fallback.generate(request),
            (None, None) => Err(BackendError::NoReply(request.prompt.template.to_string())),
        }
    }
}

/// One recorded exchange. Stored one JSON object per line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub prompt_id: TemplateId,
    pub digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attempt: Option<u32>,
    pub reply: String,
}

/// Replays replies keyed by prompt id and binding digest.
#[derive(Debug, Default)]
pub struct TranscriptBackend {
    entries: HashMap<(TemplateId, String), Vec<TranscriptEntry>>,
}

impl TranscriptBackend {
    pub fn from_entries(entries: impl IntoIterator<Item = TranscriptEntry>) -> Self {
        let mut map: HashMap<(TemplateId, String), Vec<TranscriptEntry>> = HashMap::new();
        for e in entries {
            map.entry((e.prompt_id, e.digest.clone())).or_default().push(e);
        }
        TranscriptBackend { entries: map }
    }

    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let file = fs::File::open(path)?;
        let mut entries = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: TranscriptEntry = serde_json::from_str(&line)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
            entries.push(entry);
        }
        Ok(Self::from_entries(entries))
    }
}

impl TextBackend for TranscriptBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        let key = (request.prompt.template, request.prompt.binding_digest());
        let candidates = self
            .entries
            .get(&key)
            .ok_or_else(|| BackendError::NoReply(format!("{} {}", key.0, key.1)))?;
        candidates
            .iter()
            .find(|e| e.attempt == Some(request.prompt.attempt))
            .or_else(|| candidates.iter().find(|e| e.attempt.is_none()))
            .or_else(|| candidates.last())
            .map(|e| e.reply.clone())
            .ok_or_else(|| BackendError::NoReply(key.0.to_string()))
    }
}

/// Forwards to an inner backend and keeps every exchange for later replay.
pub struct RecordingBackend {
    inner: Arc<dyn TextBackend>,
    log: Mutex<Vec<TranscriptEntry>>,
}

impl RecordingBackend {
    pub fn new(inner: Arc<dyn TextBackend>) -> Self {
        RecordingBackend {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.log.lock().expect("recording lock").clone()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut out = fs::File::create(path)?;
        for e in self.entries() {
            writeln!(out, "{}", serde_json::to_string(&e).map_err(std::io::Error::other)?)?;
        }
        Ok(())
    }
}

impl TextBackend for RecordingBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        let reply = self.inner.generate(request)?;
        self.log.lock().expect("recording lock").push(TranscriptEntry {
            prompt_id: request.prompt.template,
            digest: request.prompt.binding_digest(),
            attempt: Some(request.prompt.attempt),
            reply: reply.clone(),
        });
        Ok(reply)
    }
}
