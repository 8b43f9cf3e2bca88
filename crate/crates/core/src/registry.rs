//! Package release metadata: fetch, cache, filter for an interpreter, format for prompting.
//!
//! Sources speak the package-index JSON shape (`GET <base>/pypi/<name>/json`): a `releases`
//! object mapping each version string to its uploaded files, where each file may carry
//! `upload_time_iso_8601` (or `upload_time`), `requires_python` and `yanked`.
//!
//! The on-disk cache holds one file per package, `<cache_dir>/<sha256(normalized name)>.json`,
//! containing the serialized [`VersionCatalog`]. Entries older than the TTL are refetched.
//! Writes go to a temporary file in the same directory and are renamed into place.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Duration;

use chrono::{DateTime, NaiveDateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::interpreter::InterpreterWindow;
use crate::version::{compare_version_strings, SpecifierSet};

pub const DEFAULT_REGISTRY_URL: &str = "https://pypi.org";
pub const DEFAULT_CACHE_TTL: Duration = Duration::from_secs(24 * 60 * 60);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("package {0:?} is not on the registry")]
    UnknownPackage(String),
    #[error("registry unavailable: {0}")]
    RegistryUnavailable(String),
    #[error("{0:?} is not a valid package name")]
    InvalidName(String),
    #[error("malformed metadata for {name}: {reason}")]
    Malformed { name: String, reason: String },
    #[error("catalog for {0} is empty")]
    EmptyCatalog(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReleaseRecord {
    pub version: String,
    pub released_at: Option<DateTime<Utc>>,
    pub requires_interpreter: Option<String>,
    pub yanked: bool,
}

impl ReleaseRecord {
    pub fn new(version: impl Into<String>) -> Self {
        ReleaseRecord {
            version: version.into(),
            released_at: None,
            requires_interpreter: None,
            yanked: false,
        }
    }

    pub fn released(mut self, at: DateTime<Utc>) -> Self {
        self.released_at = Some(at);
        self
    }

    pub fn requires(mut self, constraint: impl Into<String>) -> Self {
        self.requires_interpreter = Some(constraint.into());
        self
    }

    pub fn yanked(mut self, yanked: bool) -> Self {
        self.yanked = yanked;
        self
    }

    /// Absent, empty and unparseable constraints all count as satisfied.
    pub fn supports(&self, window: &InterpreterWindow) -> bool {
        match self.requires_interpreter.as_deref().map(str::trim) {
            None | Some("") => true,
            Some(c) => SpecifierSet::parse(c)
                .map(|set| set.contains(&window.final_patch))
                .unwrap_or(true),
        }
    }

    pub fn in_window(&self, window: &InterpreterWindow) -> bool {
        self.released_at.is_none_or(|t| window.contains(t))
    }
}

/// Release history of one package, oldest first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionCatalog {
    pub install_name: String,
    pub releases: Vec<ReleaseRecord>,
    pub fetched_at: DateTime<Utc>,
}

/// Oldest first: by release time when every record has one, otherwise by version order.
/// Duplicate version strings keep their first occurrence.
pub fn order_releases(releases: Vec<ReleaseRecord>) -> Vec<ReleaseRecord> {
    let mut seen = HashSet::new();
    let mut releases: Vec<ReleaseRecord> =
        releases.into_iter().filter(|r| seen.insert(r.version.clone())).collect();
    if releases.iter().all(|r| r.released_at.is_some()) {
        releases.sort_by(|a, b| {
            a.released_at
                .cmp(&b.released_at)
                .then_with(|| compare_version_strings(&a.version, &b.version))
        });
    } else {
        releases.sort_by(|a, b| compare_version_strings(&a.version, &b.version));
    }
    releases
}

impl VersionCatalog {
    pub fn new(install_name: impl Into<String>, releases: Vec<ReleaseRecord>, fetched_at: DateTime<Utc>) -> Self {
        VersionCatalog {
            install_name: install_name.into(),
            releases: order_releases(releases),
            fetched_at,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.releases.is_empty()
    }

    pub fn len(&self) -> usize {
        self.releases.len()
    }

    pub fn versions(&self) -> Vec<&str> {
        self.releases.iter().map(|r| r.version.as_str()).collect()
    }

    pub fn contains(&self, version: &str) -> bool {
        self.releases.iter().any(|r| r.version == version)
    }

    /// Latest non-yanked release, or the latest release when all are yanked.
    pub fn latest(&self) -> Option<&ReleaseRecord> {
        self.releases
            .iter()
            .rev()
            .find(|r| !r.yanked)
            .or_else(|| self.releases.last())
    }

    /// Releases inside the interpreter's window (or undated), supporting it, not yanked.
    /// Falls back to the latest release alone when nothing survives.
    pub fn filter_for_interpreter(&self, window: &InterpreterWindow) -> VersionCatalog {
        let kept: Vec<ReleaseRecord> = self
            .releases
            .iter()
            .filter(|r| r.in_window(window) && r.supports(window) && !r.yanked)
            .cloned()
            .collect();
        let releases = if kept.is_empty() {
            self.latest().cloned().into_iter().collect()
        } else {
            kept
        };
        VersionCatalog {
            install_name: self.install_name.clone(),
            releases,
            fetched_at: self.fetched_at,
        }
    }

    /// `1.0,1.1,2.0`: oldest first, no spaces.
    pub fn to_prompt_text(&self) -> Result<String, RegistryError> {
        if self.releases.is_empty() {
            return Err(RegistryError::EmptyCatalog(self.install_name.clone()));
        }
        Ok(self.versions().join(","))
    }
}

fn name_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^([a-z0-9]|[a-z0-9][a-z0-9._-]*[a-z0-9])$").expect("name regex"))
}

pub fn is_valid_package_name(name: &str) -> bool {
    name_regex().is_match(name)
}

/// Lowercase, with runs of `-`, `_`, `.` collapsed to `-`.
pub fn normalize_name(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    let mut pending_sep = false;
    for c in name.trim().chars() {
        if matches!(c, '-' | '_' | '.') {
            pending_sep = true;
        } else {
            if pending_sep && !out.is_empty() {
                out.push('-');
            }
            pending_sep = false;
            out.push(c.to_ascii_lowercase());
        }
    }
    out
}

fn parse_time(v: &Value) -> Option<DateTime<Utc>> {
    let s = v.as_str()?;
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .ok()
        .or_else(|| {
            NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f")
                .ok()
                .map(|t| t.and_utc())
        })
}

/// Release records from a package-index JSON document.
pub fn parse_project_document(name: &str, body: &str) -> Result<Vec<ReleaseRecord>, RegistryError> {
    let malformed = |reason: String| RegistryError::Malformed {
        name: name.to_string(),
        reason,
    };
    let doc: Value = serde_json::from_str(body).map_err(|e| malformed(e.to_string()))?;
    let releases = doc
        .get("releases")
        .and_then(Value::as_object)
        .ok_or_else(|| malformed("missing `releases` object".into()))?;
    let mut out = Vec::with_capacity(releases.len());
    for (version, files) in releases {
        let files = files.as_array().cloned().unwrap_or_default();
        let released_at = files
            .iter()
            .filter_map(|f| {
                f.get("upload_time_iso_8601")
                    .and_then(parse_time)
                    .or_else(|| f.get("upload_time").and_then(parse_time))
            })
            .min();
        let requires_interpreter = files
            .iter()
            .filter_map(|f| f.get("requires_python").and_then(Value::as_str))
            .map(str::trim)
            .find(|s| !s.is_empty())
            .map(str::to_string);
        let yanked = !files.is_empty()
            && files
                .iter()
                .all(|f| f.get("yanked").and_then(Value::as_bool).unwrap_or(false));
        out.push(ReleaseRecord {
            version: version.clone(),
            released_at,
            requires_interpreter,
            yanked,
        });
    }
    Ok(out)
}

/// Where raw package documents come from.
pub trait RegistrySource: Send + Sync {
    fn fetch_document(&self, name: &str) -> Result<String, RegistryError>;
}

#[derive(Debug, Clone)]
pub struct HttpRegistry {
    base_url: String,
    client: reqwest::blocking::Client,
}

impl HttpRegistry {
    pub fn new(base_url: impl Into<String>) -> Result<Self, RegistryError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .user_agent(concat!("envrepair/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| RegistryError::RegistryUnavailable(e.to_string()))?;
        Ok(HttpRegistry {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            client,
        })
    }
}

impl RegistrySource for HttpRegistry {
    fn fetch_document(&self, name: &str) -> Result<String, RegistryError> {
        let url = format!("{}/pypi/{}/json", self.base_url, name);
        let resp = self
            .client
            .get(&url)
            .send()
            .map_err(|e| RegistryError::RegistryUnavailable(e.to_string()))?;
        match resp.status().as_u16() {
            200 => resp
                .text()
                .map_err(|e| RegistryError::RegistryUnavailable(e.to_string())),
            404 => Err(RegistryError::UnknownPackage(name.to_string())),
            code => Err(RegistryError::RegistryUnavailable(format!("HTTP {code} for {url}"))),
        }
    }
}

/// A directory of `<normalized name>.json` documents in the registry's shape.
#[derive(Debug, Clone)]
pub struct FixtureRegistry {
    dir: PathBuf,
}

impl FixtureRegistry {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FixtureRegistry { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

impl RegistrySource for FixtureRegistry {
    fn fetch_document(&self, name: &str) -> Result<String, RegistryError> {
        let path = self.dir.join(format!("{}.json", normalize_name(name)));
        match fs::read_to_string(&path) {
            Ok(body) => Ok(body),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                Err(RegistryError::UnknownPackage(name.to_string()))
            }
            Err(e) => Err(RegistryError::RegistryUnavailable(format!("{}: {e}", path.display()))),
        }
    }
}

/// In-memory documents, for tests and generated worlds.
#[derive(Debug, Clone, Default)]
pub struct MemoryRegistry {
    docs: HashMap<String, String>,
}

impl MemoryRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, document: impl Into<String>) {
        self.docs.insert(normalize_name(name), document.into());
    }

    /// Store a document built from release records.
    pub fn insert_releases(&mut self, name: &str, releases: &[ReleaseRecord]) {
        self.insert(name, project_document(releases).to_string());
    }
}

impl RegistrySource for MemoryRegistry {
    fn fetch_document(&self, name: &str) -> Result<String, RegistryError> {
        self.docs
            .get(&normalize_name(name))
            .cloned()
            .ok_or_else(|| RegistryError::UnknownPackage(name.to_string()))
    }
}

/// Registry-shaped JSON for a list of releases (one file per release).
pub fn project_document(releases: &[ReleaseRecord]) -> Value {
    let mut map = serde_json::Map::new();
    for r in releases {
        let mut file = serde_json::Map::new();
        if let Some(t) = r.released_at {
            file.insert("upload_time_iso_8601".into(), Value::String(t.to_rfc3339()));
        }
        file.insert(
            "requires_python".into(),
            r.requires_interpreter.clone().map(Value::String).unwrap_or(Value::Null),
        );
        file.insert("yanked".into(), Value::Bool(r.yanked));
        map.insert(r.version.clone(), Value::Array(vec![Value::Object(file)]));
    }
    serde_json::json!({ "info": {}, "releases": map })
}

#[derive(Debug, Clone)]
pub struct DiskCache {
    dir: PathBuf,
    ttl: Duration,
}

impl DiskCache {
    pub fn new(dir: impl Into<PathBuf>, ttl: Duration) -> Self {
        DiskCache { dir: dir.into(), ttl }
    }

    pub fn entry_path(&self, name: &str) -> PathBuf {
        let digest = Sha256::digest(normalize_name(name).as_bytes());
        self.dir.join(format!("{}.json", hex::encode(digest)))
    }

    fn is_fresh(&self, catalog: &VersionCatalog, now: DateTime<Utc>) -> bool {
        let age = now.signed_duration_since(catalog.fetched_at);
        age >= chrono::Duration::zero() && age.to_std().map(|a| a < self.ttl).unwrap_or(false)
    }

    pub fn get(&self, name: &str, now: DateTime<Utc>) -> Option<VersionCatalog> {
        let body = fs::read_to_string(self.entry_path(name)).ok()?;
        let catalog: VersionCatalog = serde_json::from_str(&body).ok()?;
        self.is_fresh(&catalog, now).then_some(catalog)
    }

    pub fn put(&self, name: &str, catalog: &VersionCatalog) -> std::io::Result<()> {
        fs::create_dir_all(&self.dir)?;
        let target = self.entry_path(name);
        let tmp = self.dir.join(format!(
            ".{}.{}.tmp",
            target.file_stem().and_then(|s| s.to_str()).unwrap_or("entry"),
            uuid::Uuid::new_v4().simple()
        ));
        fs::write(&tmp, serde_json::to_vec(catalog).map_err(std::io::Error::other)?)?;
        fs::rename(&tmp, &target)
    }
}

type Slot = Arc<OnceLock<Result<VersionCatalog, RegistryError>>>;

/// Catalog lookups with an optional disk cache and per-package single flight.
pub struct Retriever {
    source: Arc<dyn RegistrySource>,
    cache: Option<DiskCache>,
    inflight: Mutex<HashMap<String, Slot>>,
    requests: AtomicUsize,
    ttl: Duration,
}

impl std::fmt::Debug for Retriever {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Retriever")
            .field("cache", &self.cache)
            .field("requests", &self.requests.load(Ordering::SeqCst))
            .finish()
    }
}

impl Retriever {
    pub fn new(source: Arc<dyn RegistrySource>) -> Self {
        Retriever {
            source,
            cache: None,
            inflight: Mutex::new(HashMap::new()),
            requests: AtomicUsize::new(0),
            ttl: DEFAULT_CACHE_TTL,
        }
    }

    pub fn with_disk_cache(mut self, cache: DiskCache) -> Self {
        self.ttl = cache.ttl;
        self.cache = Some(cache);
        self
    }

    /// Number of documents requested from the source so far.
    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn fetch_catalog(&self, install_name: &str) -> Result<VersionCatalog, RegistryError> {
        if !is_valid_package_name(install_name) {
            return Err(RegistryError::InvalidName(install_name.to_string()));
        }
        let key = normalize_name(install_name);
        loop {
            let slot = {
                let mut map = self.inflight.lock().expect("inflight lock");
                map.entry(key.clone()).or_default().clone()
            };
            let result = slot.get_or_init(|| self.load(install_name)).clone();
            let stale = match &result {
                Ok(c) => !self.fresh(c),
                Err(_) => true,
            };
            if stale {
                // failures and expired entries are not memoised
                let mut map = self.inflight.lock().expect("inflight lock");
                if map.get(&key).is_some_and(|s| Arc::ptr_eq(s, &slot)) {
                    map.remove(&key);
                }
                if result.is_ok() {
                    continue;
                }
            }
            return result;
        }
    }

    fn fresh(&self, catalog: &VersionCatalog) -> bool {
        let age = Utc::now().signed_duration_since(catalog.fetched_at);
        age.to_std().map(|a| a < self.ttl).unwrap_or(true)
    }

    fn load(&self, install_name: &str) -> Result<VersionCatalog, RegistryError> {
        let now = Utc::now();
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(install_name, now)) {
            return Ok(hit);
        }
        self.requests.fetch_add(1, Ordering::SeqCst);
        let body = self.source.fetch_document(install_name)?;
        let releases = parse_project_document(install_name, &body)?;
        let catalog = VersionCatalog::new(install_name, releases, now);
        if let Some(cache) = &self.cache {
            if let Err(e) = cache.put(install_name, &catalog) {
                tracing::warn!("cache write for {install_name} failed: {e}");
            }
        }
        Ok(catalog)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interpreter::InterpreterVersion;
    use chrono::TimeZone;

    fn at(y: i32, m: u32, d: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(y, m, d, 0, 0, 0).unwrap()
    }

    fn py(s: &str) -> InterpreterWindow {
        InterpreterVersion::parse(s).unwrap().window()
    }

    #[test]
    fn three_release_window_fixture() {
        // window for 3.6 is 2016-12-23 .. 2021-12-23; only the 2018 release lies inside
        let catalog = VersionCatalog::new(
            "pkg",
            vec![
                ReleaseRecord::new("1.0").released(at(2015, 5, 1)),
                ReleaseRecord::new("2.0").released(at(2018, 5, 1)),
                ReleaseRecord::new("3.0").released(at(2023, 5, 1)),
            ],
            Utc::now(),
        );
        assert_eq!(catalog.filter_for_interpreter(&py("3.6")).versions(), ["2.0"]);
    }

    #[test]
    fn fallback_to_latest() {
        let catalog = VersionCatalog::new(
            "pkg",
            vec![
                ReleaseRecord::new("1.0").released(at(2001, 1, 1)),
                ReleaseRecord::new("1.1").released(at(2002, 1, 1)),
                ReleaseRecord::new("1.2").released(at(2003, 1, 1)).yanked(true),
            ],
            Utc::now(),
        );
        assert_eq!(catalog.filter_for_interpreter(&py("3.6")).versions(), ["1.1"]);
    }

    #[test]
    fn requires_python_excludes() {
        let catalog = VersionCatalog::new(
            "pkg",
            vec![
                ReleaseRecord::new("1.0").released(at(2019, 1, 1)).requires(">=3.7"),
                ReleaseRecord::new("0.9").released(at(2018, 1, 1)).requires(">=3.5"),
                ReleaseRecord::new("0.8").released(at(2017, 6, 1)).requires("not a spec"),
            ],
            Utc::now(),
        );
        assert_eq!(catalog.filter_for_interpreter(&py("3.6")).versions(), ["0.8", "0.9"]);
        // 0.8 and 0.9 predate the 3.7 window
        assert_eq!(catalog.filter_for_interpreter(&py("3.7")).versions(), ["1.0"]);
    }

    #[test]
    fn ordering_by_date_or_version() {
        let dated = VersionCatalog::new(
            "p",
            vec![
                ReleaseRecord::new("2.0").released(at(2018, 1, 1)),
                ReleaseRecord::new("1.11.29").released(at(2019, 1, 1)),
                ReleaseRecord::new("1.0").released(at(2016, 1, 1)),
            ],
            Utc::now(),
        );
        assert_eq!(dated.versions(), ["1.0", "2.0", "1.11.29"]);
        let undated = VersionCatalog::new(
            "p",
            vec![
                ReleaseRecord::new("1.10"),
                ReleaseRecord::new("1.9").released(at(2016, 1, 1)),
                ReleaseRecord::new("1.10rc1"),
                ReleaseRecord::new("1.9"),
            ],
            Utc::now(),
        );
        assert_eq!(undated.versions(), ["1.9", "1.10rc1", "1.10"]);
    }

    #[test]
    fn prompt_text() {
        let c = VersionCatalog::new(
            "p",
            ["1.0", "1.1", "2.0"].iter().map(|v| ReleaseRecord::new(*v)).collect(),
            Utc::now(),
        );
        assert_eq!(c.to_prompt_text().unwrap(), "1.0,1.1,2.0");
        let single = VersionCatalog::new("p", vec![ReleaseRecord::new("2.4.4")], Utc::now());
        assert_eq!(single.to_prompt_text().unwrap(), "2.4.4");
        let empty = VersionCatalog::new("p", vec![], Utc::now());
        assert!(matches!(empty.to_prompt_text(), Err(RegistryError::EmptyCatalog(_))));
    }

    #[test]
    fn hundred_release_prompt_has_99_commas() {
        let c = VersionCatalog::new(
            "p",
            (0..100).map(|i| ReleaseRecord::new(format!("0.{i}"))).collect(),
            Utc::now(),
        );
        let text = c.to_prompt_text().unwrap();
        assert_eq!(text.matches(',').count(), 99);
        assert!(!text.contains(' '));
    }

    #[test]
    fn document_parsing() {
        let body = r#"{"info": {"name": "x"}, "releases": {
            "1.0": [{"upload_time_iso_8601": "2017-01-02T03:04:05.000000Z", "requires_python": ">=2.7", "yanked": false},
                    {"upload_time_iso_8601": "2017-01-01T00:00:00Z", "requires_python": null, "yanked": false}],
            "1.1": [{"upload_time": "2018-01-01T00:00:00", "yanked": true}],
            "0.1": []
        }}"#;
        let mut recs = parse_project_document("x", body).unwrap();
        recs.sort_by(|a, b| a.version.cmp(&b.version));
        assert_eq!(recs[0].version, "0.1");
        assert!(recs[0].released_at.is_none() && !recs[0].yanked);
        assert_eq!(recs[1].released_at, Some(at(2017, 1, 1)));
        assert_eq!(recs[1].requires_interpreter.as_deref(), Some(">=2.7"));
        assert!(recs[2].yanked);
        assert!(parse_project_document("x", "{}").is_err());
    }

    #[test]
    fn names() {
        assert_eq!(normalize_name("Scikit_Learn"), "scikit-learn");
        assert_eq!(normalize_name("zope.interface"), "zope-interface");
        assert!(is_valid_package_name("scikit-learn"));
        assert!(!is_valid_package_name("bad name"));
        assert!(!is_valid_package_name("-x"));
    }

    #[test]
    fn memory_cache_single_request() {
        let mut reg = MemoryRegistry::new();
        reg.insert_releases("requests", &[ReleaseRecord::new("2.18.4").released(at(2017, 8, 15))]);
        let r = Retriever::new(Arc::new(reg));
        let a = r.fetch_catalog("requests").unwrap();
        let b = r.fetch_catalog("requests").unwrap();
        assert_eq!(a, b);
        assert_eq!(r.request_count(), 1);
        assert!(matches!(r.fetch_catalog("nope"), Err(RegistryError::UnknownPackage(_))));
        assert!(matches!(r.fetch_catalog("bad name"), Err(RegistryError::InvalidName(_))));
    }

    #[test]
    fn disk_cache_survives_new_retriever() {
        let dir = tempfile::tempdir().unwrap();
        let mut reg = MemoryRegistry::new();
        reg.insert_releases("six", &[ReleaseRecord::new("1.16.0").released(at(2021, 5, 5))]);
        let reg = Arc::new(reg);
        let first = Retriever::new(reg.clone()).with_disk_cache(DiskCache::new(dir.path(), DEFAULT_CACHE_TTL));
        let a = first.fetch_catalog("six").unwrap();
        let second = Retriever::new(reg).with_disk_cache(DiskCache::new(dir.path(), DEFAULT_CACHE_TTL));
        let b = second.fetch_catalog("six").unwrap();
        assert_eq!(a, b);
        assert_eq!(second.request_count(), 0);
        let leftovers: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .flatten()
            .filter(|e| e.file_name().to_string_lossy().ends_with(".tmp"))
            .collect();
        assert!(leftovers.is_empty());
    }

    #[test]
    fn expired_disk_entries_are_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::new(dir.path(), Duration::from_secs(60));
        let old = VersionCatalog::new("p", vec![ReleaseRecord::new("1")], Utc::now() - chrono::Duration::hours(2));
        cache.put("p", &old).unwrap();
        assert!(cache.get("p", Utc::now()).is_none());
        let fresh = VersionCatalog::new("p", vec![ReleaseRecord::new("1")], Utc::now());
        cache.put("p", &fresh).unwrap();
        assert_eq!(cache.get("p", Utc::now()), Some(fresh));
    }
}
