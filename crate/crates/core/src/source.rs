//! Static import extraction for single Python source files.
//!
//! The scan is lexical: comments and string literals are blanked first, then each statement is
//! matched against the `import` / `from ... import` forms. Nothing in this module executes the
//! input or touches the network.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candidate::ModuleRequirement;
use crate::interpreter::InterpreterVersion;

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no standard-library list for interpreter series {0}")]
    UnsupportedInterpreter(String),
    #[error("name mapping line {line}: {reason}")]
    BadMapping { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceFile {
    path: PathBuf,
    content: String,
    line_count: usize,
}

impl SourceFile {
    pub fn read(path: impl AsRef<Path>) -> Result<Self, SourceError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| SourceError::Unreadable {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::from_text(path, String::from_utf8_lossy(&bytes).into_owned()))
    }

    pub fn from_text(path: impl Into<PathBuf>, content: impl Into<String>) -> Self {
        let content = content.into();
        let line_count = content.lines().count();
        SourceFile {
            path: path.into(),
            content,
            line_count,
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn content(&self) -> &str {
        &self.content
    }

    pub fn line_count(&self) -> usize {
        self.line_count
    }

    /// Bare file name, `snippet.py` when the path has none.
    pub fn file_name(&self) -> String {
        self.path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "snippet.py".to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportMention {
    pub raw_statement: String,
    pub top_level_name: String,
    pub line_number: usize,
}

impl ImportMention {
    /// A mention with no source position, for names that did not come from a scan.
    pub fn named(name: impl Into<String>) -> Self {
        let name = name.into();
        ImportMention {
            raw_statement: format!("import {name}"),
            top_level_name: name,
            line_number: 0,
        }
    }
}

/// Replace string literals with `""` and drop comments, keeping line breaks in place.
fn blank_strings_and_comments(src: &str) -> String {
    #[derive(Clone, Copy)]
    enum State {
        Code,
        Short(char),
        Long(char),
    }
    let chars: Vec<char> = src.chars().collect();
    let mut out = String::with_capacity(src.len());
    let mut state = State::Code;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match state {
            State::Code => match c {
                '#' => {
                    while i < chars.len() && chars[i] != '\n' {
                        i += 1;
                    }
                    continue;
                }
                '\'' | '"' => {
                    if chars.get(i + 1) == Some(&c) && chars.get(i + 2) == Some(&c) {
                        state = State::Long(c);
                        i += 3;
                    } else {
                        state = State::Short(c);
                        i += 1;
                    }
                    out.push_str("\"\"");
                    continue;
                }
                _ => out.push(c),
            },
            State::Short(q) => match c {
                '\\' => i += 1,
                '\n' => {
                    // unterminated literal; resume scanning on the next line
                    out.push('\n');
                    state = State::Code;
                }
                _ if c == q => state = State::Code,
                _ => {}
            },
            State::Long(q) => match c {
                '\\' => {
                    if chars.get(i + 1) == Some(&'\n') {
                        out.push('\n');
                    }
                    i += 1;
                }
                '\n' => out.push('\n'),
                _ if c == q && chars.get(i + 1) == Some(&q) && chars.get(i + 2) == Some(&q) => {
                    state = State::Code;
                    i += 2;
                }
                _ => {}
            },
        }
        i += 1;
    }
    out
}

fn import_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^import\s+(.+)$").expect("import regex"))
}

fn from_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^from\s+(\S+)\s+import\b").expect("from regex"))
}

fn identifier_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[A-Za-z_][A-Za-z0-9_]*$").expect("identifier regex"))
}

fn top_level(dotted: &str) -> Option<String> {
    let first = dotted.trim().split('.').next()?.trim();
    identifier_re()
        .is_match(first)
        .then(|| first.to_string())
}

/// Every top-level module named by an import statement, first occurrence first.
///
/// Recognises `import a.b.c`, `import a as x`, `import a, b`, `from a.b import c` and
/// statements joined by `;`. Indented imports count; relative imports and dynamic imports do
/// not.
pub fn extract_imports(file: &SourceFile) -> Vec<ImportMention> {
    let code = blank_strings_and_comments(file.content());
    let mut seen = HashSet::new();
    let mut mentions = Vec::new();
    for (idx, line) in code.lines().enumerate() {
        for stmt in line.split(';') {
            let stmt = stmt.trim();
            let names: Vec<String> = if let Some(c) = from_re().captures(stmt) {
                let module = &c[1];
                if module.starts_with('.') {
                    continue;
                }
                top_level(module).into_iter().collect()
            } else if let Some(c) = import_re().captures(stmt) {
                c[1].trim_end_matches('\\')
                    .split(',')
                    .filter_map(|part| {
                        let part = part.trim().trim_matches(|ch| ch == '(' || ch == ')');
                        let module = part.split_whitespace().next()?;
                        top_level(module)
                    })
                    .collect()
            } else {
                continue;
            };
            for name in names {
                if seen.insert(name.clone()) {
                    mentions.push(ImportMention {
                        raw_statement: stmt.to_string(),
                        top_level_name: name,
                        line_number: idx + 1,
                    });
                }
            }
        }
    }
    mentions
}

const BUNDLED_STDLIB: [(&str, &str); 10] = [
    ("2.7", include_str!("../data/stdlib/2.7.txt")),
    ("3.4", include_str!("../data/stdlib/3.4.txt")),
    ("3.5", include_str!("../data/stdlib/3.5.txt")),
    ("3.6", include_str!("../data/stdlib/3.6.txt")),
    ("3.7", include_str!("../data/stdlib/3.7.txt")),
    ("3.8", include_str!("../data/stdlib/3.8.txt")),
    ("3.9", include_str!("../data/stdlib/3.9.txt")),
    ("3.10", include_str!("../data/stdlib/3.10.txt")),
    ("3.11", include_str!("../data/stdlib/3.11.txt")),
    ("3.12", include_str!("../data/stdlib/3.12.txt")),
];

/// Standard-library top-level names per interpreter series.
#[derive(Debug, Clone, Default)]
pub struct StdlibIndex {
    by_series: HashMap<String, HashSet<String>>,
}

impl StdlibIndex {
    pub fn bundled() -> &'static StdlibIndex {
        static INDEX: OnceLock<StdlibIndex> = OnceLock::new();
        INDEX.get_or_init(|| {
            let mut index = StdlibIndex::default();
            for (series, text) in BUNDLED_STDLIB {
                index.insert_list(series, text);
            }
            index
        })
    }

    /// Load `<series>.txt` files (newline-separated names) from a directory.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, SourceError> {
        let dir = dir.as_ref();
        let mut index = StdlibIndex::default();
        let entries = fs::read_dir(dir).map_err(|source| SourceError::Unreadable {
            path: dir.to_path_buf(),
            source,
        })?;
        for entry in entries.flatten() {
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let Some(series) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            let text = fs::read_to_string(&path).map_err(|source| SourceError::Unreadable {
                path: path.clone(),
                source,
            })?;
            index.insert_list(series, &text);
        }
        Ok(index)
    }

    pub fn insert_list(&mut self, series: &str, text: &str) {
        let names = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect();
        self.by_series.insert(series.to_string(), names);
    }

    pub fn names(&self, series: &str) -> Result<&HashSet<String>, SourceError> {
        self.by_series
            .get(series)
            .ok_or_else(|| SourceError::UnsupportedInterpreter(series.to_string()))
    }

    pub fn is_stdlib(&self, name: &str, interpreter: InterpreterVersion) -> Result<bool, SourceError> {
        Ok(self.names(&interpreter.series())?.contains(name))
    }

    pub fn filter_stdlib(
        &self,
        mentions: &[ImportMention],
        interpreter: InterpreterVersion,
    ) -> Result<Vec<ImportMention>, SourceError> {
        let names = self.names(&interpreter.series())?;
        Ok(mentions
            .iter()
            .filter(|m| !names.contains(&m.top_level_name))
            .cloned()
            .collect())
    }
}

/// Drop mentions that name standard-library modules of `interpreter`, using the bundled lists.
pub fn filter_stdlib(
    mentions: &[ImportMention],
    interpreter: InterpreterVersion,
) -> Result<Vec<ImportMention>, SourceError> {
    StdlibIndex::bundled().filter_stdlib(mentions, interpreter)
}

const BUNDLED_MAPPING: &str = include_str!("../data/name_mapping.txt");

/// Import name to install name lookup. Unmapped names map to themselves.
///
/// Text format: one `import_name = install_name` per line, `#` starts a comment.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NameMapping {
    entries: BTreeMap<String, String>,
}

impl NameMapping {
    pub fn bundled() -> NameMapping {
        NameMapping::parse(BUNDLED_MAPPING).expect("bundled mapping parses")
    }

    pub fn parse(text: &str) -> Result<NameMapping, SourceError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |reason: &str| SourceError::BadMapping {
                line: idx + 1,
                reason: reason.to_string(),
            };
            let (k, v) = line.split_once('=').ok_or_else(|| bad("expected `import = install`"))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || v.is_empty() {
                return Err(bad("empty name"));
            }
            entries.insert(k.to_string(), v.to_string());
        }
        Ok(NameMapping { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<NameMapping, SourceError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| SourceError::Unreadable {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Entries of `other` override entries of `self`.
    pub fn extended_with(mut self, other: &NameMapping) -> NameMapping {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
        self
    }

    pub fn insert(&mut self, import_name: impl Into<String>, install_name: impl Into<String>) {
        self.entries.insert(import_name.into(), install_name.into());
    }

    pub fn lookup<'a>(&'a self, import_name: &'a str) -> &'a str {
        self.entries
            .get(import_name)
            .map(String::as_str)
            .unwrap_or(import_name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn to_requirements(mentions: &[ImportMention], mapping: &NameMapping) -> Vec<ModuleRequirement> {
    mentions
        .iter()
        .map(|m| ModuleRequirement::new(&m.top_level_name, mapping.lookup(&m.top_level_name)))
        .collect()
}
