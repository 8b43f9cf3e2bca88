//! Failure log classification.
//!
//! Each of the eight error classes has a set of line signatures. A log is scanned for every
//! class, the highest-precedence class that matched becomes the primary class, and its payload
//! is pulled out with patterns. When patterns leave a required field empty, the model gateway
//! can be asked to fill it from a short excerpt around the signature.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::llm::{Gateway, GenerationConfig};
use crate::validator::{BuildOutcome, OutcomeStatus};

/// Lines of context kept on each side of a signature line.
pub const EXCERPT_CONTEXT: usize = 5;
pub const MAX_EXCERPT_LINES: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorClass {
    VersionNotFound,
    DependencyConflict,
    ImportError,
    ModuleNotFound,
    AttributeError,
    InvalidVersion,
    NonZeroCode,
    SyntaxError,
}

impl ErrorClass {
    pub const ALL: [ErrorClass; 8] = [
        ErrorClass::VersionNotFound,
        ErrorClass::DependencyConflict,
        ErrorClass::ImportError,
        ErrorClass::ModuleNotFound,
        ErrorClass::AttributeError,
        ErrorClass::InvalidVersion,
        ErrorClass::NonZeroCode,
        ErrorClass::SyntaxError,
    ];

    /// Highest first.
    pub const PRECEDENCE: [ErrorClass; 8] = [
        ErrorClass::SyntaxError,
        ErrorClass::VersionNotFound,
        ErrorClass::InvalidVersion,
        ErrorClass::DependencyConflict,
        ErrorClass::ModuleNotFound,
        ErrorClass::ImportError,
        ErrorClass::AttributeError,
        ErrorClass::NonZeroCode,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorClass::VersionNotFound => "VersionNotFound",
            ErrorClass::DependencyConflict => "DependencyConflict",
            ErrorClass::ImportError => "ImportError",
            ErrorClass::ModuleNotFound => "ModuleNotFound",
            ErrorClass::AttributeError => "AttributeError",
            ErrorClass::InvalidVersion => "InvalidVersion",
            ErrorClass::NonZeroCode => "NonZeroCode",
            ErrorClass::SyntaxError => "SyntaxError",
        }
    }

    /// Classes that make a run count as broken under the strict success rule.
    pub fn is_critical(&self) -> bool {
        matches!(
            self,
            ErrorClass::ImportError | ErrorClass::ModuleNotFound | ErrorClass::AttributeError | ErrorClass::SyntaxError
        )
    }

    pub fn required_fields(&self) -> &'static [&'static str] {
        match self {
            ErrorClass::ImportError | ErrorClass::ModuleNotFound => &["module"],
            ErrorClass::VersionNotFound | ErrorClass::InvalidVersion => &["module", "requested_version"],
            ErrorClass::DependencyConflict => &["conflicting_modules"],
            ErrorClass::AttributeError => &["module", "attribute"],
            ErrorClass::NonZeroCode => &["exit_code"],
            ErrorClass::SyntaxError => &[],
        }
    }
}

impl fmt::Display for ErrorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ErrorClass {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ErrorClass::ALL
            .iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .copied()
            .ok_or_else(|| format!("unknown error class {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriageReport {
    pub primary_class: ErrorClass,
    pub payload: BTreeMap<String, String>,
    pub matched_excerpt: String,
    pub used_llm_extraction: bool,
    /// Every class whose signature appeared, in precedence order.
    pub detected: Vec<ErrorClass>,
}

impl TriageReport {
    pub fn is_complete(&self) -> bool {
        payload_complete(self.primary_class, &self.payload)
    }

    pub fn summary(&self) -> String {
        let fields: Vec<String> = self.payload.iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("{} {}", self.primary_class, fields.join(" ")).trim_end().to_string()
    }
}

pub fn payload_complete(class: ErrorClass, payload: &BTreeMap<String, String>) -> bool {
    let filled = |k: &str| payload.get(k).is_some_and(|v| !v.trim().is_empty());
    let fields_ok = class.required_fields().iter().all(|f| filled(f));
    if class == ErrorClass::DependencyConflict {
        let names = payload
            .get("conflicting_modules")
            .map(|s| s.split(',').filter(|n| !n.trim().is_empty()).count())
            .unwrap_or(0);
        return names >= 2 || (names >= 1 && filled("constraint"));
    }
    fields_ok
}

macro_rules! re {
    ($name:ident, $pat:expr) => {
        fn $name() -> &'static Regex {
            static RE: OnceLock<Regex> = OnceLock::new();
            RE.get_or_init(|| Regex::new($pat).expect(stringify!($name)))
        }
    };
}

re!(syntax_sig, r"^\s*(?:SyntaxError|IndentationError|TabError):");
re!(file_line, r#"File "[^"]*", line (\d+)"#);
re!(version_nf_sig, r"(?:Could not find a version that satisfies the requirement|No matching distribution found for)\s+([^\s(]+)");
re!(invalid_req_sig, r#"Invalid requirement:\s*['"]?([^'"\s]+)"#);
re!(invalid_version_sig, r#"InvalidVersion: Invalid version: ['"]([^'"]*)['"]"#);
re!(invalid_spec_sig, r"Expected end or semicolon \(after version specifier\)|is not a valid version specifier");
re!(conflict_sig, r"conflicting dependencies|ResolutionImpossible|has requirement .+ but you'll have|requires .+, but you have \S+ \S+ which is incompatible");
re!(pinned_name, r"([A-Za-z0-9][A-Za-z0-9_.\-]*)==");
re!(has_requirement, r"^\s*(?:ERROR: )?([A-Za-z0-9][A-Za-z0-9_.\-]*) \S+ has requirement ([A-Za-z0-9][A-Za-z0-9_.\-]*)");
re!(requires_but, r"^\s*([A-Za-z0-9][A-Za-z0-9_.\-]*) \S+ requires ([A-Za-z0-9][A-Za-z0-9_.\-]*)");
re!(depends_on, r"^\s*([A-Za-z0-9][A-Za-z0-9_.\-]*) \S+ depends on ([A-Za-z0-9][A-Za-z0-9_.\-]*)");
re!(user_requested, r"The user requested ([A-Za-z0-9][A-Za-z0-9_.\-]*)");
re!(constraint_line, r"depends on \S+|has requirement \S+|requires \S+,");
re!(no_module_sig, r#"No module named ['"]?([A-Za-z_][\w.]*)['"]?"#);
re!(import_error_sig, r"^\s*ImportError:");
re!(cannot_import_from, r#"cannot import name ['"]?(\w+)['"]? from ['"]?([A-Za-z_][\w.]*)['"]?"#);
re!(dll_load, r"DLL load failed while importing (\w+)");
re!(source_from_import, r"^\s*from\s+([A-Za-z_][\w.]*)\s+import\b");
re!(source_import, r"^\s*import\s+([A-Za-z_][\w.]*)");
re!(attr_sig, r"^\s*AttributeError:");
re!(module_no_attr, r#"module ['"]([A-Za-z_][\w.]*)['"] has no attribute ['"](\w+)['"]"#);
re!(object_no_attr, r#"(?:object|type object ['"]\w+['"]) has no attribute ['"](\w+)['"]"#);
re!(site_packages_frame, r#"(?:site|dist)-packages/([A-Za-z_]\w*)"#);
re!(nonzero_sig, r"returned a non-zero code: (\d+)|(?:exit code|exit status|exited with code):? (-?[1-9]\d*)");
re!(pip_arg, r#""([A-Za-z0-9][A-Za-z0-9_.\-]*)==([^"]+)"\]|Collecting ([A-Za-z0-9][A-Za-z0-9_.\-]*)==(\S+)"#);

fn top(name: &str) -> String {
    name.split('.').next().unwrap_or(name).to_string()
}

fn split_requirement(req: &str) -> (String, String) {
    let req = req.trim().trim_matches(|c| c == '\'' || c == '"');
    for op in ["===", "==", "~=", ">=", "<=", "!=", ">", "<"] {
        if let Some((name, ver)) = req.split_once(op) {
            return (name.trim().to_string(), ver.trim().trim_end_matches([',', ')', '\'']).to_string());
        }
    }
    (req.to_string(), String::new())
}

/// Most recent pip install argument at or before `upto`, optionally for one module.
fn last_pip_arg(lines: &[&str], upto: usize, module: Option<&str>) -> Option<(String, String)> {
    lines[..=upto.min(lines.len().saturating_sub(1))].iter().rev().find_map(|line| {
        pip_arg().captures_iter(line).last().and_then(|c| {
            let (name, ver) = match (c.get(1), c.get(2), c.get(3), c.get(4)) {
                (Some(n), Some(v), _, _) | (_, _, Some(n), Some(v)) => (n.as_str(), v.as_str()),
                _ => return None,
            };
            match module {
                Some(m) if !name.eq_ignore_ascii_case(m) => None,
                _ => Some((name.to_string(), ver.to_string())),
            }
        })
    })
}

/// Nearest import statement at or above `idx` within a short traceback window.
fn preceding_import(lines: &[&str], idx: usize, window: usize) -> Option<String> {
    let lo = idx.saturating_sub(window);
    lines[lo..=idx].iter().rev().find_map(|l| {
        source_from_import()
            .captures(l)
            .or_else(|| source_import().captures(l))
            .map(|c| top(&c[1]))
    })
}

struct Detection {
    line: usize,
    payload: BTreeMap<String, String>,
}

fn payload<const N: usize>(pairs: [(&str, String); N]) -> BTreeMap<String, String> {
    pairs
        .into_iter()
        .filter(|(_, v)| !v.is_empty())
        .map(|(k, v)| (k.to_string(), v))
        .collect()
}

fn detect(class: ErrorClass, lines: &[&str]) -> Option<Detection> {
    match class {
        ErrorClass::SyntaxError => {
            let idx = lines.iter().position(|l| syntax_sig().is_match(l))?;
            let lo = idx.saturating_sub(EXCERPT_CONTEXT);
            let line_number = lines[lo..idx]
                .iter()
                .rev()
                .find_map(|l| file_line().captures(l).map(|c| c[1].to_string()))
                .unwrap_or_default();
            Some(Detection {
                line: idx,
                payload: payload([("line_number", line_number)]),
            })
        }
        ErrorClass::VersionNotFound => {
            let (idx, caps) = lines
                .iter()
                .enumerate()
                .find_map(|(i, l)| version_nf_sig().captures(l).map(|c| (i, c)))?;
            let (module, mut version) = split_requirement(&caps[1]);
            if version.is_empty() {
                if let Some((_, v)) = last_pip_arg(lines, idx, Some(&module)) {
                    version = v;
                }
            }
            Some(Detection {
                line: idx,
                payload: payload([("module", module), ("requested_version", version)]),
            })
        }
        ErrorClass::InvalidVersion => {
            let idx = lines.iter().position(|l| {
                invalid_req_sig().is_match(l) || invalid_version_sig().is_match(l) || invalid_spec_sig().is_match(l)
            })?;
            let line = lines[idx];
            let (module, version) = if let Some(c) = invalid_req_sig().captures(line) {
                split_requirement(&c[1])
            } else if let Some(c) = invalid_version_sig().captures(line) {
                let module = last_pip_arg(lines, idx, None).map(|(m, _)| m).unwrap_or_default();
                (module, c[1].to_string())
            } else {
                last_pip_arg(lines, idx, None).unwrap_or_default()
            };
            Some(Detection {
                line: idx,
                payload: payload([("module", module), ("requested_version", version)]),
            })
        }
        ErrorClass::DependencyConflict => {
            let idx = lines.iter().position(|l| conflict_sig().is_match(l))?;
            let mut names: Vec<String> = Vec::new();
            let mut push = |n: &str| {
                if !names.iter().any(|x| x.eq_ignore_ascii_case(n)) {
                    names.push(n.to_string());
                }
            };
            let mut constraint = String::new();
            let hi = (idx + 12).min(lines.len());
            for line in &lines[idx..hi] {
                if let Some(c) = has_requirement().captures(line) {
                    push(&c[1]);
                    push(&c[2]);
                } else if let Some(c) = requires_but().captures(line) {
                    push(&c[1]);
                    push(&c[2]);
                } else if let Some(c) = depends_on().captures(line) {
                    push(&c[1]);
                    push(&c[2]);
                } else if let Some(c) = user_requested().captures(line) {
                    push(&c[1]);
                } else if line.contains("Cannot install") {
                    for c in pinned_name().captures_iter(line) {
                        push(&c[1]);
                    }
                }
                if constraint.is_empty() {
                    if let Some(m) = constraint_line().find(line) {
                        constraint = line.trim().to_string();
                        let _ = m;
                    }
                }
            }
            Some(Detection {
                line: idx,
                payload: payload([("conflicting_modules", names.join(",")), ("constraint", constraint)]),
            })
        }
        ErrorClass::ModuleNotFound => {
            let (idx, caps) = lines
                .iter()
                .enumerate()
                .find_map(|(i, l)| no_module_sig().captures(l).map(|c| (i, c)))?;
            Some(Detection {
                line: idx,
                payload: payload([("module", top(&caps[1]))]),
            })
        }
        ErrorClass::ImportError => {
            let idx = lines
                .iter()
                .position(|l| import_error_sig().is_match(l) && !no_module_sig().is_match(l))?;
            let line = lines[idx];
            let mut name = String::new();
            let module = if let Some(c) = cannot_import_from().captures(line) {
                name = c[1].to_string();
                top(&c[2])
            } else if let Some(c) = dll_load().captures(line) {
                top(&c[1])
            } else {
                if let Some(c) = Regex::new(r#"cannot import name ['"]?(\w+)"#).ok().and_then(|re| re.captures(line)) {
                    name = c[1].to_string();
                }
                preceding_import(lines, idx, 4).unwrap_or_default()
            };
            Some(Detection {
                line: idx,
                payload: payload([("module", module), ("name", name)]),
            })
        }
        ErrorClass::AttributeError => {
            let idx = lines.iter().position(|l| attr_sig().is_match(l))?;
            let line = lines[idx];
            let (module, attribute) = if let Some(c) = module_no_attr().captures(line) {
                (top(&c[1]), c[2].to_string())
            } else {
                let attribute = object_no_attr()
                    .captures(line)
                    .map(|c| c[1].to_string())
                    .unwrap_or_default();
                let lo = idx.saturating_sub(30);
                let frame = lines[lo..idx]
                    .iter()
                    .rev()
                    .find_map(|l| site_packages_frame().captures(l).map(|c| c[1].to_string()));
                // no library frame: take `name.<attribute>` from the failing source line
                let module = frame
                    .or_else(|| {
                        if attribute.is_empty() {
                            return None;
                        }
                        let re = Regex::new(&format!(r"([A-Za-z_]\w*)\.{}\b", regex::escape(&attribute))).ok()?;
                        lines[idx.saturating_sub(3)..idx]
                            .iter()
                            .rev()
                            .find_map(|l| re.captures(l).map(|c| c[1].to_string()))
                    })
                    .unwrap_or_default();
                (module, attribute)
            };
            Some(Detection {
                line: idx,
                payload: payload([("module", module), ("attribute", attribute)]),
            })
        }
        ErrorClass::NonZeroCode => {
            let found = lines
                .iter()
                .enumerate()
                .find_map(|(i, l)| nonzero_sig().captures(l).map(|c| (i, c)));
            match found {
                Some((idx, c)) => {
                    let code = c.get(1).or(c.get(2)).map(|m| m.as_str().to_string()).unwrap_or_default();
                    Some(Detection {
                        line: idx,
                        payload: payload([("exit_code", code)]),
                    })
                }
                None => None,
            }
        }
    }
}

fn window(lines: &[&str], center: usize) -> String {
    if lines.is_empty() {
        return String::new();
    }
    let lo = center.saturating_sub(EXCERPT_CONTEXT);
    let hi = (center + EXCERPT_CONTEXT + 1).min(lines.len());
    lines[lo..hi].join("\n")
}

/// Classify a failed outcome with patterns only.
pub fn classify(outcome: &BuildOutcome) -> TriageReport {
    let lines: Vec<&str> = outcome.log.lines().collect();
    let mut detected = Vec::new();
    let mut primary: Option<(ErrorClass, Detection)> = None;
    for class in ErrorClass::PRECEDENCE {
        if let Some(d) = detect(class, &lines) {
            detected.push(class);
            if primary.is_none() {
                primary = Some((class, d));
            }
        }
    }
    // a failure with no recognisable message still lands in NonZeroCode
    let (class, detection) = primary.unwrap_or_else(|| {
        let code = match (outcome.status, outcome.exit_code) {
            (OutcomeStatus::Timeout, _) => "timeout".to_string(),
            (_, Some(c)) => c.to_string(),
            (_, None) => "1".to_string(),
        };
        (
            ErrorClass::NonZeroCode,
            Detection {
                line: 0,
                payload: payload([("exit_code", code)]),
            },
        )
    });
    if detected.is_empty() {
        detected.push(ErrorClass::NonZeroCode);
    }
    let payload = detection.payload;
    TriageReport {
        primary_class: class,
        payload,
        matched_excerpt: window(&lines, detection.line),
        used_llm_extraction: false,
        detected,
    }
}

/// Classify, then ask the gateway for any required payload field the patterns missed.
/// Gateway failures leave the partial payload in place.
pub fn classify_with_fallback(outcome: &BuildOutcome, gateway: &Gateway, cfg: &GenerationConfig) -> TriageReport {
    let mut report = classify(outcome);
    if report.is_complete() {
        return report;
    }
    let excerpt = excerpt_for_prompt(outcome, report.primary_class);
    match gateway.extract_error_payload(report.primary_class, &excerpt, cfg) {
        Ok(extra) => {
            for (k, v) in extra {
                let v = if k == "module" { top(v.trim()) } else { v.trim().to_string() };
                if !v.is_empty() && report.payload.get(&k).is_none_or(|cur| cur.trim().is_empty()) {
                    report.payload.insert(k, v);
                }
            }
            report.used_llm_extraction = true;
        }
        Err(e) => tracing::debug!("payload extraction for {} failed: {e}", report.primary_class),
    }
    report
}

/// The log slice around the first signature of `class`, at most 11 lines. Logs with no such
/// signature yield their last 11 lines.
pub fn excerpt_for_prompt(outcome: &BuildOutcome, class: ErrorClass) -> String {
    let lines: Vec<&str> = outcome.log.lines().collect();
    let width = 2 * EXCERPT_CONTEXT + 1;
    if lines.len() <= width {
        return lines.join("\n");
    }
    match detect(class, &lines) {
        Some(d) => window(&lines, d.line),
        None => lines[lines.len() - width..].join("\n"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::validator::OutcomePhase;

    fn failed(log: &str) -> BuildOutcome {
        BuildOutcome {
            phase: OutcomePhase::Run,
            status: OutcomeStatus::Failure,
            exit_code: Some(1),
            log: log.to_string(),
            duration_seconds: 0.0,
            candidate_key: "3.6|".into(),
        }
    }

    #[test]
    fn version_not_found() {
        let r = classify(&failed(
            "ERROR: Could not find a version that satisfies the requirement tensorflow==9.9.9 (from versions: 1.0)",
        ));
        assert_eq!(r.primary_class, ErrorClass::VersionNotFound);
        assert_eq!(r.payload["module"], "tensorflow");
        assert_eq!(r.payload["requested_version"], "9.9.9");
    }

    #[test]
    fn import_error_from_form() {
        let r = classify(&failed("Traceback (most recent call last):\nImportError: cannot import name 'X' from 'bs4'"));
        assert_eq!(r.primary_class, ErrorClass::ImportError);
        assert_eq!(r.payload["module"], "bs4");
    }

    #[test]
    fn empty_failed_log_is_nonzero() {
        let mut o = failed("");
        o.exit_code = Some(137);
        let r = classify(&o);
        assert_eq!(r.primary_class, ErrorClass::NonZeroCode);
        assert_eq!(r.payload["exit_code"], "137");
    }

    #[test]
    fn module_not_found_beats_import_error() {
        let r = classify(&failed("ImportError: No module named requests"));
        assert_eq!(r.primary_class, ErrorClass::ModuleNotFound);
        assert_eq!(r.payload["module"], "requests");
    }

    #[test]
    fn syntax_error_dominates() {
        let log = "  File \"/app/snippet.py\", line 3\n    print 'x'\n            ^\nSyntaxError: invalid syntax\nModuleNotFoundError: No module named 'x'";
        let r = classify(&failed(log));
        assert_eq!(r.primary_class, ErrorClass::SyntaxError);
        assert_eq!(r.payload["line_number"], "3");
        assert_eq!(r.detected, [ErrorClass::SyntaxError, ErrorClass::ModuleNotFound]);
    }

    #[test]
    fn excerpt_windows() {
        let mut lines: Vec<String> = (0..2000).map(|i| format!("noise line {i}")).collect();
        lines[1234] = "ImportError: cannot import name 'a' from 'b'".into();
        let o = failed(&lines.join("\n"));
        let ex = excerpt_for_prompt(&o, ErrorClass::ImportError);
        assert!(ex.lines().count() <= 11);
        assert!(ex.contains("cannot import name 'a'"));

        let short = failed("a\nb\nc");
        assert_eq!(excerpt_for_prompt(&short, ErrorClass::ImportError), "a\nb\nc");

        lines[1500] = "ImportError: cannot import name 'z' from 'y'".into();
        let ex = excerpt_for_prompt(&failed(&lines.join("\n")), ErrorClass::ImportError);
        assert!(ex.contains("noise line 1233") && !ex.contains("'z'"));
    }
}
