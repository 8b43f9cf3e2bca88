use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::GatewayError;
use crate::triage::ErrorClass;

/// Identifier of every prompt the pipeline sends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    InferFile,
    PickVersionRag,
    PickVersionBare,
    ExtractImportError,
    TriageVersionNotFound,
    TriageDependencyConflict,
    TriageModuleNotFound,
    TriageAttributeError,
    TriageInvalidVersion,
    TriageNonZeroCode,
    TriageSyntaxError,
}

impl TemplateId {
    pub const ALL: [TemplateId; 11] = [
        TemplateId::InferFile,
        TemplateId::PickVersionRag,
        TemplateId::PickVersionBare,
        TemplateId::ExtractImportError,
        TemplateId::TriageVersionNotFound,
        TemplateId::TriageDependencyConflict,
        TemplateId::TriageModuleNotFound,
        TemplateId::TriageAttributeError,
        TemplateId::TriageInvalidVersion,
        TemplateId::TriageNonZeroCode,
        TemplateId::TriageSyntaxError,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TemplateId::InferFile => "infer_file",
            TemplateId::PickVersionRag => "pick_version_rag",
            TemplateId::PickVersionBare => "pick_version_bare",
            TemplateId::ExtractImportError => "extract_import_error",
            TemplateId::TriageVersionNotFound => "triage_version_not_found",
            TemplateId::TriageDependencyConflict => "triage_dependency_conflict",
            TemplateId::TriageModuleNotFound => "triage_module_not_found",
            TemplateId::TriageAttributeError => "triage_attribute_error",
            TemplateId::TriageInvalidVersion => "triage_invalid_version",
            TemplateId::TriageNonZeroCode => "triage_non_zero_code",
            TemplateId::TriageSyntaxError => "triage_syntax_error",
        }
    }

    /// The focused extraction prompt for one error class.
    pub fn for_class(class: ErrorClass) -> TemplateId {
        match class {
            ErrorClass::ImportError => TemplateId::ExtractImportError,
            ErrorClass::VersionNotFound => TemplateId::TriageVersionNotFound,
            ErrorClass::DependencyConflict => TemplateId::TriageDependencyConflict,
            ErrorClass::ModuleNotFound => TemplateId::TriageModuleNotFound,
            ErrorClass::AttributeError => TemplateId::TriageAttributeError,
            ErrorClass::InvalidVersion => TemplateId::TriageInvalidVersion,
            ErrorClass::NonZeroCode => TemplateId::TriageNonZeroCode,
            ErrorClass::SyntaxError => TemplateId::TriageSyntaxError,
        }
    }

    pub fn schema(&self) -> Schema {
        match self {
            TemplateId::InferFile => Schema::InferFile,
            TemplateId::PickVersionRag | TemplateId::PickVersionBare => {
                Schema::Fields(&["module", "version"])
            }
            TemplateId::ExtractImportError | TemplateId::TriageModuleNotFound => {
                Schema::Fields(&["module"])
            }
            TemplateId::TriageVersionNotFound | TemplateId::TriageInvalidVersion => {
                Schema::Fields(&["module", "requested_version"])
            }
            TemplateId::TriageDependencyConflict => Schema::Fields(&["conflicting_modules"]),
            TemplateId::TriageAttributeError => Schema::Fields(&["module", "attribute"]),
            TemplateId::TriageNonZeroCode => Schema::Fields(&["exit_code"]),
            TemplateId::TriageSyntaxError => Schema::Fields(&["line_number"]),
        }
    }

    fn body(&self) -> &'static str {
        match self {
            TemplateId::InferFile => {
                "Given a python file:\n{raw_file}\nReturn a list of Python modules and python version required to run. Output JSON based on the schema {format_instructions}"
            }
            TemplateId::PickVersionRag => {
                "Given a comma-separated list of 'Module versions' for the '{module_name}' module, from oldest to newest:\n{module_versions}\nPerform equally distanced sampling to return a version from the given versions, excluding previously used versions ({previous_versions}). Return the information with the format {format_instructions}"
            }
            TemplateId::PickVersionBare => {
                "Infer a possible working version of the '{module_name}' module for Python {python_version}.\nReturn the information with the format {format_instructions}"
            }
            TemplateId::ExtractImportError => {
                "Given the following ImportError:\n{error_msg}\nIdentify the module causing the error.\nThe module is usually mentioned in a statement like 'from x import y'.\nReturn just the module name using the format {format_instructions}"
            }
            TemplateId::TriageModuleNotFound => {
                "Given the following ModuleNotFoundError:\n{error_msg}\nIdentify the module that could not be found.\nThe module is usually mentioned in a statement like 'No module named x'.\nReturn just the module name using the format {format_instructions}"
            }
            TemplateId::TriageVersionNotFound => {
                "Given the following package installation error:\n{error_msg}\nIdentify the module whose requested version could not be found, and the version that was requested.\nReturn the information using the format {format_instructions}"
            }
            TemplateId::TriageInvalidVersion => {
                "Given the following package installation error:\n{error_msg}\nIdentify the module whose version specification is invalid, and the invalid version.\nReturn the information using the format {format_instructions}"
            }
            TemplateId::TriageDependencyConflict => {
                "Given the following dependency conflict:\n{error_msg}\nIdentify the modules involved in the conflict, in the order they are mentioned.\nReturn them as a comma-separated list using the format {format_instructions}"
            }
            TemplateId::TriageAttributeError => {
                "Given the following AttributeError:\n{error_msg}\nIdentify the module that is missing the attribute, and the attribute name.\nReturn the information using the format {format_instructions}"
            }
            TemplateId::TriageNonZeroCode => {
                "Given the following failed command output:\n{error_msg}\nIdentify the exit code returned by the command.\nReturn just the exit code using the format {format_instructions}"
            }
            TemplateId::TriageSyntaxError => {
                "Given the following SyntaxError:\n{error_msg}\nIdentify the line number where the syntax error occurs.\nReturn just the line number using the format {format_instructions}"
            }
        }
    }

    pub fn template(&self) -> PromptTemplate {
        PromptTemplate::new(*self, self.body())
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateId::ALL
            .iter()
            .find(|t| t.as_str() == s)
            .copied()
            .ok_or_else(|| format!("unknown prompt id {s:?}"))
    }
}

/// Expected reply shape for a prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    /// `{"python_modules": [{"module", "version"}], "python_version"}`
    InferFile,
    /// A flat object with the named fields, each a non-empty scalar.
    Fields(&'static [&'static str]),
}

impl Schema {
    /// The schema block substituted for `{format_instructions}`.
    pub fn format_instructions(&self) -> String {
        match self {
            Schema::InferFile => r#"{ "python_modules": [{"module": "<String>", "version": "<String>"}], "python_version": "<String>" }"#.to_string(),
            Schema::Fields(fields) => {
                let body: Vec<String> = fields.iter().map(|f| format!("\"{f}\": \"<String>\"")).collect();
                format!("{{ {} }}", body.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Placeholder(String),
}

/// A prompt body with `{name}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    id: TemplateId,
    segments: Vec<Segment>,
    placeholders: BTreeSet<String>,
}

fn is_placeholder_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !s.starts_with(|c: char| c.is_ascii_digit())
}

impl PromptTemplate {
    pub fn new(id: TemplateId, body: &str) -> Self {
        let mut segments = Vec::new();
        let mut placeholders = BTreeSet::new();
        let mut text = String::new();
        let mut rest = body;
        while let Some(open) = rest.find('{') {
            let after = &rest[open + 1..];
            match after.find('}') {
                Some(close) if is_placeholder_name(&after[..close]) => {
                    text.push_str(&rest[..open]);
                    if !text.is_empty() {
                        segments.push(Segment::Text(std::mem::take(&mut text)));
                    }
                    let name = after[..close].to_string();
                    placeholders.insert(name.clone());
                    segments.push(Segment::Placeholder(name));
                    rest = &after[close + 1..];
                }
                _ => {
                    text.push_str(&rest[..=open]);
                    rest = after;
                }
            }
        }
        text.push_str(rest);
        if !text.is_empty() {
            segments.push(Segment::Text(text));
        }
        PromptTemplate {
            id,
            segments,
            placeholders,
        }
    }

    pub fn id(&self) -> TemplateId {
        self.id
    }

    pub fn placeholders(&self) -> &BTreeSet<String> {
        &self.placeholders
    }

    /// Substitute every placeholder verbatim. Binding text is never re-scanned.
    pub fn render(&self, bindings: &BTreeMap<String, String>) -> Result<String, GatewayError> {
        if let Some(missing) = self.placeholders.iter().find(|p| !bindings.contains_key(*p)) {
            return Err(GatewayError::MissingPlaceholder(missing.clone()));
        }
        if let Some(extra) = bindings.keys().find(|k| !self.placeholders.contains(*k)) {
            return Err(GatewayError::UnexpectedBinding(extra.clone()));
        }
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Text(t) => out.push_str(t),
                Segment::Placeholder(p) => out.push_str(&bindings[p]),
            }
        }
        Ok(out)
    }
}

pub fn render(
    template: &PromptTemplate,
    bindings: &BTreeMap<String, String>,
) -> Result<String, GatewayError> {
    template.render(bindings)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bind(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn infer_file_prompt() {
        let t = TemplateId::InferFile.template();
        let out = t
            .render(&bind(&[("raw_file", "import requests"), ("format_instructions", "{}")]))
            .unwrap();
        assert!(out.contains("Given a python file:\nimport requests\nReturn a list of Python modules"));
    }

    #[test]
    fn missing_and_extra_bindings() {
        let t = TemplateId::InferFile.template();
        let err = t.render(&bind(&[("raw_file", "x")])).unwrap_err();
        assert!(matches!(err, GatewayError::MissingPlaceholder(p) if p == "format_instructions"));
        let err = t
            .render(&bind(&[("raw_file", "x"), ("format_instructions", ""), ("bogus", "")]))
            .unwrap_err();
        assert!(matches!(err, GatewayError::UnexpectedBinding(p) if p == "bogus"));
    }

    #[test]
    fn rag_prompt_mentions_exclusions() {
        let t = TemplateId::PickVersionRag.template();
        let out = t
            .render(&bind(&[
                ("module_name", "m"),
                ("module_versions", "1.0,1.1,2.0"),
                ("previous_versions", "1.1"),
                ("format_instructions", "{}"),
            ]))
            .unwrap();
        assert!(out.contains("excluding previously used versions (1.1)"));
        assert!(out.contains("from oldest to newest:\n1.0,1.1,2.0\n"));
    }

    #[test]
    fn binding_text_is_not_rescanned() {
        let t = TemplateId::InferFile.template();
        let out = t
            .render(&bind(&[("raw_file", "d = {format_instructions}"), ("format_instructions", "S")]))
            .unwrap();
        assert!(out.contains("d = {format_instructions}"));
        assert!(!out.contains("{raw_file}"));
    }

    #[test]
    fn placeholder_sets_match_bodies() {
        for id in TemplateId::ALL {
            let t = id.template();
            assert!(t.placeholders().contains("format_instructions"), "{id}");
            let bindings: BTreeMap<_, _> =
                t.placeholders().iter().map(|p| (p.clone(), String::new())).collect();
            let out = t.render(&bindings).unwrap();
            for p in t.placeholders() {
                assert!(!out.contains(&format!("{{{p}}}")), "{id}: {p}");
            }
            assert_eq!(id.as_str().parse::<TemplateId>().unwrap(), id);
        }
    }

    #[test]
    fn literal_braces_survive() {
        let t = PromptTemplate::new(TemplateId::InferFile, "a {x} {not a name} {}");
        assert_eq!(t.placeholders().len(), 1);
        assert_eq!(t.render(&bind(&[("x", "1")])).unwrap(), "a 1 {not a name} {}");
    }
}
