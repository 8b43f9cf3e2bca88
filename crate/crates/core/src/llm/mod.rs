//! Prompt rendering, backend calls and reply validation.
//!
//! Every operation renders one standalone prompt, sends it to a [`TextBackend`], and parses the
//! reply against the prompt's [`Schema`]. Malformed replies are re-prompted up to
//! `retry_budget` times, so a backend sees at most `1 + retry_budget` calls per operation.

mod backend;
mod stub;
mod templates;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use backend::{HttpBackend, DEFAULT_BACKEND_URL};
pub use stub::{RecordingBackend, ScriptedBackend, SimulatedModel, TranscriptBackend, TranscriptEntry};
pub use templates::{render, PromptTemplate, Schema, TemplateId};

use crate::candidate::ModuleRequirement;
use crate::interpreter::{InterpreterVersion, DEFAULT_SERIES};
use crate::source::SourceFile;
use crate::triage::ErrorClass;
use crate::version::Version;

/// Re-prompts allowed after a malformed or constraint-violating reply.
pub const DEFAULT_RETRY_BUDGET: u32 = 2;
pub const DEFAULT_TEMPERATURE: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    #[error("backend returned an error: {0}")]
    Failed(String),
    #[error("no scripted reply for {0}")]
    NoReply(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error("missing binding for placeholder {0:?}")]
    MissingPlaceholder(String),
    #[error("binding {0:?} has no placeholder in the template")]
    UnexpectedBinding(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("reply for {prompt} did not match its schema after {attempts} attempts: {reason}")]
    MalformedReply {
        prompt: TemplateId,
        attempts: u32,
        reason: String,
        raw_text: String,
    },
    #[error("every candidate version of {module} has already been tried")]
    VersionsExhausted { module: String },
}

/// Model settings shared by every call of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub model_name: String,
    pub temperature: f64,
    pub seed: Option<u64>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            model_name: "gemma2".to_string(),
            temperature: DEFAULT_TEMPERATURE,
            seed: None,
        }
    }
}

/// One rendered prompt, with the bindings it was rendered from.
#[derive(Debug, Clone, PartialEq)]
pub struct Prompt {
    pub template: TemplateId,
    pub bindings: BTreeMap<String, String>,
    pub text: String,
    /// 0 for the first send, incremented on every re-prompt.
    pub attempt: u32,
}

impl Prompt {
    /// Hex SHA-256 over the bindings, in key order, as `key=value\0` records.
    pub fn binding_digest(&self) -> String {
        binding_digest(&self.bindings)
    }
}

pub fn binding_digest(bindings: &BTreeMap<String, String>) -> String {
    let mut hasher = Sha256::new();
    for (k, v) in bindings {
        hasher.update(k.as_bytes());
        hasher.update(b"=");
        hasher.update(v.as_bytes());
        hasher.update([0u8]);
    }
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub model_name: String,
    pub temperature: f64,
    pub seed: Option<u64>,
    pub prompt: Prompt,
}

impl GenerationRequest {
    pub fn rendered_prompt(&self) -> &str {
        &self.prompt.text
    }
}

/// Text in, text out.
pub trait TextBackend: Send + Sync {
    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError>;
}

impl<T: TextBackend + ?Sized> TextBackend for Arc<T> {
    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        (**self).generate(request)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredReply {
    pub schema_id: TemplateId,
    pub payload: Value,
    pub raw_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferredModule {
    pub module: String,
    #[serde(default)]
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferredEnvironment {
    pub python_modules: Vec<InferredModule>,
    pub python_version: String,
}

/// Locate and parse the first JSON object in free text (code fences and chatter tolerated).
pub fn extract_json_object(text: &str) -> Option<Value> {
    for (idx, _) in text.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&text[idx..]).into_iter::<Value>();
        if let Some(Ok(value @ Value::Object(_))) = stream.next() {
            return Some(value);
        }
    }
    None
}

fn scalar_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.trim().to_string()),
        Value::Number(n) => Some(n.to_string()),
        Value::Array(items) => {
            let parts: Option<Vec<String>> = items.iter().map(scalar_text).collect();
            parts.map(|p| p.join(","))
        }
        _ => None,
    }
}

impl Schema {
    /// Check `payload` and return its normalised form.
    pub fn validate(&self, payload: &Value) -> Result<Value, String> {
        let obj = payload.as_object().ok_or("reply is not a JSON object")?;
        match self {
            Schema::InferFile => {
                let modules = obj
                    .get("python_modules")
                    .and_then(Value::as_array)
                    .ok_or("python_modules must be an array")?;
                let mut out = Vec::new();
                for m in modules {
                    let (module, version) = match m {
                        Value::String(s) => (s.trim().to_string(), String::new()),
                        Value::Object(o) => (
                            o.get("module").and_then(scalar_text).ok_or("module entry lacks a name")?,
                            o.get("version").and_then(scalar_text).unwrap_or_default(),
                        ),
                        _ => return Err("module entry is neither object nor string".into()),
                    };
                    if module.is_empty() {
                        return Err("empty module name".into());
                    }
                    out.push(serde_json::json!({"module": module, "version": version}));
                }
                let python_version = obj
                    .get("python_version")
                    .and_then(scalar_text)
                    .ok_or("python_version missing")?;
                if !python_version_shape(&python_version) {
                    return Err(format!("python_version {python_version:?} is not major[.minor]"));
                }
                Ok(serde_json::json!({"python_modules": out, "python_version": python_version}))
            }
            Schema::Fields(fields) => {
                let mut out = serde_json::Map::new();
                for f in *fields {
                    let v = obj
                        .get(*f)
                        .and_then(scalar_text)
                        .filter(|s| !s.is_empty())
                        .ok_or_else(|| format!("field {f:?} missing or empty"))?;
                    out.insert(f.to_string(), Value::String(v));
                }
                Ok(Value::Object(out))
            }
        }
    }
}

fn python_version_shape(s: &str) -> bool {
    let s = s.trim().trim_start_matches(|c: char| c.is_ascii_alphabetic() || c == ' ');
    let mut parts = s.split('.');
    let ok = |p: Option<&str>| p.is_some_and(|p| !p.is_empty() && p.chars().all(|c| c.is_ascii_digit()));
    let major = parts.next();
    if !ok(major) {
        return false;
    }
    parts.all(|p| ok(Some(p)))
}

/// Index into a list of `remaining` versions for the `tried`-th equally spaced pick.
///
/// Walks the base-2 radical-inverse sequence 1/2, 1/4, 3/4, 1/8, 3/8, ... so that successive
/// picks bisect the gaps left by earlier ones.
pub fn equal_distance_index(remaining: usize, tried: usize) -> usize {
    if remaining == 0 {
        return 0;
    }
    let mut i = tried as u64 + 1;
    let mut num: u128 = 0;
    let mut den: u128 = 1;
    while i > 0 {
        num = num * 2 + (i & 1) as u128;
        den *= 2;
        i >>= 1;
    }
    ((remaining as u128 * num / den) as usize).min(remaining - 1)
}

fn clean_version_reply(raw: &str) -> String {
    let s = raw.trim().trim_matches(|c| c == '"' || c == '\'' || c == '`');
    let s = match s.rsplit_once("==") {
        Some((_, v)) => v,
        None => s,
    };
    s.trim().trim_start_matches('v').trim().to_string()
}

fn match_catalog<'a>(reply: &str, candidates: &[&'a str]) -> Option<&'a str> {
    if let Some(hit) = candidates.iter().find(|c| **c == reply) {
        return Some(hit);
    }
    let parsed = Version::parse(reply).ok()?;
    candidates
        .iter()
        .find(|c| Version::parse(c).map(|v| v == parsed).unwrap_or(false))
        .copied()
}

pub struct Gateway {
    backend: Arc<dyn TextBackend>,
    retry_budget: u32,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway").field("retry_budget", &self.retry_budget).finish()
    }
}

impl Gateway {
    pub fn new(backend: Arc<dyn TextBackend>) -> Self {
        Gateway {
            backend,
            retry_budget: DEFAULT_RETRY_BUDGET,
        }
    }

    pub fn with_retry_budget(mut self, budget: u32) -> Self {
        self.retry_budget = budget;
        self
    }

    pub fn retry_budget(&self) -> u32 {
        self.retry_budget
    }

    fn request(&self, cfg: &GenerationConfig, prompt: Prompt) -> GenerationRequest {
        GenerationRequest {
            model_name: cfg.model_name.clone(),
            temperature: cfg.temperature,
            seed: cfg.seed,
            prompt,
        }
    }

    /// Send `template` and re-prompt until `accept` returns `Ok`.
    ///
    /// `accept` sees the schema-validated payload; an `Err(note)` from it is a constraint
    /// violation and `note` is appended to the next prompt.
    fn converse<T>(
        &self,
        template: TemplateId,
        mut bindings: BTreeMap<String, String>,
        cfg: &GenerationConfig,
        mut accept: impl FnMut(&StructuredReply) -> Result<T, String>,
    ) -> Result<Result<T, ConverseFailure>, GatewayError> {
        let schema = template.schema();
        bindings.insert("format_instructions".into(), schema.format_instructions());
        let base = template.template().render(&bindings)?;
        let mut note: Option<String> = None;
        let mut last_raw = String::new();
        let mut last_reason = String::new();
        let mut violated = false;
        for attempt in 0..=self.retry_budget {
            let text = match &note {
                Some(n) => format!("{base}\n{n}"),
                None => base.clone(),
            };
            let prompt = Prompt {
                template,
                bindings: bindings.clone(),
                text,
                attempt,
            };
            let raw = self.backend.generate(&self.request(cfg, prompt))?;
            let validated = extract_json_object(&raw)
                .ok_or_else(|| "no JSON object in reply".to_string())
                .and_then(|v| schema.validate(&v));
            match validated {
                Ok(payload) => {
                    let reply = StructuredReply {
                        schema_id: template,
                        payload,
                        raw_text: raw.clone(),
                    };
                    match accept(&reply) {
                        Ok(v) => return Ok(Ok(v)),
                        Err(reason) => {
                            violated = true;
                            note = Some(format!("Your previous answer was rejected: {reason}"));
                            last_reason = reason;
                        }
                    }
                }
                Err(reason) => {
                    note = Some(format!(
                        "Your previous answer could not be parsed ({reason}). Reply with JSON only, using the format {}",
                        schema.format_instructions()
                    ));
                    last_reason = reason;
                }
            }
            last_raw = raw;
        }
        Ok(Err(ConverseFailure {
            violated,
            error: GatewayError::MalformedReply {
                prompt: template,
                attempts: self.retry_budget + 1,
                reason: last_reason,
                raw_text: last_raw,
            },
        }))
    }

    /// Ask for the modules and interpreter a file needs. Versions in the reply are advisory.
    pub fn infer_environment(
        &self,
        file: &SourceFile,
        cfg: &GenerationConfig,
    ) -> Result<InferredEnvironment, GatewayError> {
        if file.content().trim().is_empty() {
            return Ok(InferredEnvironment {
                python_modules: Vec::new(),
                python_version: DEFAULT_SERIES.series(),
            });
        }
        let bindings = BTreeMap::from([("raw_file".to_string(), file.content().to_string())]);
        self.converse(TemplateId::InferFile, bindings, cfg, |reply| {
            serde_json::from_value::<InferredEnvironment>(reply.payload.clone()).map_err(|e| e.to_string())
        })?
        .map_err(|f| f.error)
    }

    /// Choose a version for `module`.
    ///
    /// With a catalog (comma-separated, oldest first) the reply must name a catalog member not
    /// in `previous`; violations are re-prompted, and once the budget is spent the
    /// equally-spaced pick is taken directly. Without a catalog the reply is taken as given,
    /// apart from rejecting members of `previous`.
    pub fn pick_version(
        &self,
        module: &ModuleRequirement,
        catalog_text: Option<&str>,
        previous: &[String],
        interpreter: InterpreterVersion,
        cfg: &GenerationConfig,
    ) -> Result<String, GatewayError> {
        let exhausted = || GatewayError::VersionsExhausted {
            module: module.install_name.clone(),
        };
        match catalog_text {
            Some(catalog_text) => {
                let catalog: Vec<&str> =
                    catalog_text.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
                let remaining: Vec<&str> = catalog
                    .iter()
                    .copied()
                    .filter(|v| !previous.iter().any(|p| p == v))
                    .collect();
                if remaining.is_empty() {
                    return Err(exhausted());
                }
                let bindings = BTreeMap::from([
                    ("module_name".to_string(), module.install_name.clone()),
                    ("module_versions".to_string(), catalog.join(",")),
                    ("previous_versions".to_string(), previous.join(",")),
                ]);
                let outcome = self.converse(TemplateId::PickVersionRag, bindings, cfg, |reply| {
                    let v = clean_version_reply(reply.payload["version"].as_str().unwrap_or(""));
                    if previous.contains(&v) {
                        return Err(format!("version {v} was already tried"));
                    }
                    match match_catalog(&v, &remaining) {
                        Some(hit) => Ok(hit.to_string()),
                        None => Err(format!("version {v} is not in the given list")),
                    }
                })?;
                match outcome {
                    Ok(v) => Ok(v),
                    Err(f) if f.violated => {
                        Ok(remaining[equal_distance_index(remaining.len(), previous.len())].to_string())
                    }
                    Err(f) => Err(f.error),
                }
            }
            None => {
                let bindings = BTreeMap::from([
                    ("module_name".to_string(), module.install_name.clone()),
                    ("python_version".to_string(), interpreter.series()),
                ]);
                let outcome = self.converse(TemplateId::PickVersionBare, bindings, cfg, |reply| {
                    let v = clean_version_reply(reply.payload["version"].as_str().unwrap_or(""));
                    if v.is_empty() {
                        Err("empty version".to_string())
                    } else if previous.contains(&v) {
                        Err(format!("version {v} was already tried; suggest a different one"))
                    } else {
                        Ok(v)
                    }
                })?;
                match outcome {
                    Ok(v) => Ok(v),
                    Err(f) if f.violated => Err(exhausted()),
                    Err(f) => Err(f.error),
                }
            }
        }
    }

    /// Pull the fields an error class needs out of a log excerpt.
    pub fn extract_error_payload(
        &self,
        class: ErrorClass,
        log_excerpt: &str,
        cfg: &GenerationConfig,
    ) -> Result<BTreeMap<String, String>, GatewayError> {
        let template = TemplateId::for_class(class);
        if log_excerpt.trim().is_empty() {
            return Err(GatewayError::MalformedReply {
                prompt: template,
                attempts: 0,
                reason: "empty log excerpt".into(),
                raw_text: String::new(),
            });
        }
        let bindings = BTreeMap::from([("error_msg".to_string(), log_excerpt.to_string())]);
        self.converse(template, bindings, cfg, |reply| {
            Ok(reply
                .payload
                .as_object()
                .map(|o| {
                    o.iter()
                        .map(|(k, v)| (k.clone(), v.as_str().unwrap_or_default().to_string()))
                        .collect()
                })
                .unwrap_or_default())
        })?
        .map_err(|f| f.error)
    }
}

struct ConverseFailure {
    violated: bool,
    error: GatewayError,
}
