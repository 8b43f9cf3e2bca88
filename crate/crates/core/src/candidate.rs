//! Environment candidates: interpreter series plus a fully pinned module set.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interpreter::InterpreterVersion;
use crate::llm::{Gateway, GatewayError, GenerationConfig};
use crate::registry::{RegistryError, Retriever};
use crate::repair::AttemptHistory;
use crate::source::NameMapping;
use crate::triage::{ErrorClass, TriageReport};

/// Largest accepted `range` for interpreter expansion.
pub const MAX_RANGE: u32 = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CandidateError {
    #[error("no untried version left for {0}")]
    CandidateSpaceExhausted(String),
    #[error("interpreter {0} cannot parse the program")]
    InterpreterIncompatible(InterpreterVersion),
    #[error("range {0} exceeds the maximum of {MAX_RANGE}")]
    RangeTooLarge(u32),
    #[error("{0} is not pinned")]
    Unpinned(String),
    #[error("{0} is pinned twice")]
    DuplicatePin(String),
    #[error("catalog retrieval needs a registry")]
    NoRegistry,
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Gateway(GatewayError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModuleRequirement {
    pub import_name: String,
    pub install_name: String,
    pub version: Option<String>,
}

impl ModuleRequirement {
    pub fn new(import_name: impl Into<String>, install_name: impl Into<String>) -> Self {
        ModuleRequirement {
            import_name: import_name.into(),
            install_name: install_name.into(),
            version: None,
        }
    }

    pub fn pinned(mut self, version: impl Into<String>) -> Self {
        self.version = Some(version.into());
        self
    }

    pub fn pin_text(&self) -> String {
        format!("{}=={}", self.install_name, self.version.as_deref().unwrap_or(""))
    }
}

/// One testable hypothesis. Pins are kept sorted by install name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvironmentCandidate {
    interpreter: InterpreterVersion,
    pins: Vec<ModuleRequirement>,
    canonical_key: String,
}

impl EnvironmentCandidate {
    pub fn new(
        interpreter: InterpreterVersion,
        mut pins: Vec<ModuleRequirement>,
    ) -> Result<Self, CandidateError> {
        if let Some(p) = pins.iter().find(|p| p.version.as_deref().is_none_or(str::is_empty)) {
            return Err(CandidateError::Unpinned(p.install_name.clone()));
        }
        pins.sort_by(|a, b| a.install_name.cmp(&b.install_name));
        if let Some(w) = pins.windows(2).find(|w| w[0].install_name == w[1].install_name) {
            return Err(CandidateError::DuplicatePin(w[0].install_name.clone()));
        }
        let canonical_key = canonical_key(interpreter, &pins);
        Ok(EnvironmentCandidate {
            interpreter,
            pins,
            canonical_key,
        })
    }

    pub fn interpreter(&self) -> InterpreterVersion {
        self.interpreter
    }

    pub fn pins(&self) -> &[ModuleRequirement] {
        &self.pins
    }

    pub fn canonical_key(&self) -> &str {
        &self.canonical_key
    }

    pub fn pin_for(&self, install_name: &str) -> Option<&ModuleRequirement> {
        self.pins.iter().find(|p| p.install_name == install_name)
    }

    fn with_pin(&self, req: ModuleRequirement) -> Result<Self, CandidateError> {
        let mut pins: Vec<ModuleRequirement> =
            self.pins.iter().filter(|p| p.install_name != req.install_name).cloned().collect();
        pins.push(req);
        Self::new(self.interpreter, pins)
    }
}

impl fmt::Display for EnvironmentCandidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical_key)
    }
}

/// `<series>|<name>==<version>;...` over pins sorted by install name.
pub fn canonical_key(interpreter: InterpreterVersion, sorted_pins: &[ModuleRequirement]) -> String {
    let pins: Vec<String> = sorted_pins.iter().map(ModuleRequirement::pin_text).collect();
    format!("{}|{}", interpreter.series(), pins.join(";"))
}

/// The series to validate in parallel around a predicted one.
///
/// For a 3.x prediction: the 3.x series within `range` steps, plus 2.7. For a 2.7 prediction:
/// 2.7 followed by the oldest `range` 3.x series.
pub fn expand_interpreters(
    predicted: InterpreterVersion,
    range: u32,
) -> Result<Vec<InterpreterVersion>, CandidateError> {
    if range > MAX_RANGE {
        return Err(CandidateError::RangeTooLarge(range));
    }
    let py3 = InterpreterVersion::supported_py3();
    let range = range as usize;
    let mut out = vec![InterpreterVersion::PY27];
    if predicted == InterpreterVersion::PY27 {
        out.extend(py3.iter().take(range));
    } else {
        let pos = py3
            .iter()
            .position(|v| *v == predicted)
            .expect("supported non-2.7 series is in the 3.x list");
        let lo = pos.saturating_sub(range);
        let hi = (pos + range).min(py3.len() - 1);
        out.extend_from_slice(&py3[lo..=hi]);
    }
    Ok(out)
}

/// A candidate plus what the builder did to produce it.
#[derive(Debug, Clone, PartialEq)]
pub struct Built {
    pub candidate: EnvironmentCandidate,
    pub notes: Vec<String>,
}

/// The single change `vary_after_failure` applies.
#[derive(Debug, Clone, PartialEq, Eq)]
enum Edit {
    Add(ModuleRequirement),
    Repin { install_name: String, also_exclude: Vec<String> },
}

pub struct CandidateBuilder<'a> {
    gateway: &'a Gateway,
    retriever: Option<&'a Retriever>,
    mapping: &'a NameMapping,
    generation: &'a GenerationConfig,
}

impl<'a> CandidateBuilder<'a> {
    pub fn new(
        gateway: &'a Gateway,
        retriever: Option<&'a Retriever>,
        mapping: &'a NameMapping,
        generation: &'a GenerationConfig,
    ) -> Self {
        CandidateBuilder {
            gateway,
            retriever,
            mapping,
            generation,
        }
    }

    fn choose(
        &self,
        req: &ModuleRequirement,
        interpreter: InterpreterVersion,
        history: &AttemptHistory,
        extra_excluded: &[String],
        rag: bool,
    ) -> Result<String, CandidateError> {
        let mut previous: Vec<String> = history.tried_versions(&req.install_name, interpreter).to_vec();
        for v in extra_excluded {
            if !previous.contains(v) {
                previous.push(v.clone());
            }
        }
        let result = if rag {
            let retriever = self.retriever.ok_or(CandidateError::NoRegistry)?;
            let catalog = retriever
                .fetch_catalog(&req.install_name)?
                .filter_for_interpreter(&interpreter.window());
            let text = catalog.to_prompt_text()?;
            let previous: Vec<String> = previous.into_iter().filter(|v| catalog.contains(v)).collect();
            self.gateway
                .pick_version(req, Some(&text), &previous, interpreter, self.generation)
        } else {
            self.gateway.pick_version(req, None, &previous, interpreter, self.generation)
        };
        result.map_err(|e| match e {
            GatewayError::VersionsExhausted { module } => CandidateError::CandidateSpaceExhausted(module),
            other => CandidateError::Gateway(other),
        })
    }

    /// Pin every unpinned requirement. Requirements unknown to the registry are dropped and
    /// noted. If the result repeats a tried key, the last pins are re-chosen until it does not.
    pub fn pin_versions(
        &self,
        reqs: &[ModuleRequirement],
        interpreter: InterpreterVersion,
        history: &AttemptHistory,
        rag: bool,
    ) -> Result<Built, CandidateError> {
        let mut notes = Vec::new();
        let mut pinned: Vec<ModuleRequirement> = Vec::new();
        for req in reqs {
            if pinned.iter().any(|p| p.install_name == req.install_name) {
                continue;
            }
            if req.version.as_deref().is_some_and(|v| !v.is_empty()) {
                pinned.push(req.clone());
                continue;
            }
            match self.choose(req, interpreter, history, &[], rag) {
                Ok(v) => pinned.push(req.clone().pinned(v)),
                Err(CandidateError::Registry(RegistryError::UnknownPackage(name)))
                | Err(CandidateError::Registry(RegistryError::InvalidName(name))) => {
                    notes.push(format!("dropped {name}: not on the registry"));
                }
                Err(e) => return Err(e),
            }
        }
        let candidate = EnvironmentCandidate::new(interpreter, pinned.clone())?;
        if !history.contains(candidate.canonical_key()) {
            return Ok(Built { candidate, notes });
        }
        // repeated key: vary the most recently pinned module first
        for idx in (0..pinned.len()).rev() {
            let mut excluded = Vec::new();
            loop {
                excluded.push(pinned[idx].version.clone().unwrap_or_default());
                let v = match self.choose(&pinned[idx], interpreter, history, &excluded, rag) {
                    Ok(v) => v,
                    Err(CandidateError::CandidateSpaceExhausted(_)) => break,
                    Err(e) => return Err(e),
                };
                let mut trial = pinned.clone();
                trial[idx].version = Some(v.clone());
                let candidate = EnvironmentCandidate::new(interpreter, trial)?;
                if !history.contains(candidate.canonical_key()) {
                    notes.push(format!("re-chose {} to avoid a tried key", pinned[idx].install_name));
                    return Ok(Built { candidate, notes });
                }
                excluded.push(v);
            }
        }
        Err(CandidateError::CandidateSpaceExhausted(candidate.canonical_key().to_string()))
    }

    /// Apply one edit to a failed candidate, chosen by the failure's class.
    pub fn vary_after_failure(
        &self,
        prev: &EnvironmentCandidate,
        triage: &TriageReport,
        history: &AttemptHistory,
        rag: bool,
    ) -> Result<Built, CandidateError> {
        let interpreter = prev.interpreter();
        if triage.primary_class == ErrorClass::SyntaxError {
            return Err(CandidateError::InterpreterIncompatible(interpreter));
        }
        let mut attempted = Vec::new();
        if let Some(edit) = self.primary_edit(prev, triage) {
            match self.apply(prev, &edit, history, rag) {
                Ok(built) => return Ok(built),
                Err(CandidateError::CandidateSpaceExhausted(m)) => attempted.push(m),
                Err(CandidateError::Registry(RegistryError::UnknownPackage(m))) => attempted.push(m),
                Err(e) => return Err(e),
            }
            let (Edit::Repin { install_name, .. } | Edit::Add(ModuleRequirement { install_name, .. })) = &edit;
            attempted.push(install_name.clone());
        }
        // fall back to re-pinning whichever module has been varied least
        let mut order: Vec<&ModuleRequirement> = prev
            .pins()
            .iter()
            .filter(|p| !attempted.contains(&p.install_name))
            .collect();
        order.sort_by_key(|p| history.tried_versions(&p.install_name, interpreter).len());
        for pin in order {
            let edit = Edit::Repin {
                install_name: pin.install_name.clone(),
                also_exclude: Vec::new(),
            };
            match self.apply(prev, &edit, history, rag) {
                Ok(built) => return Ok(built),
                Err(CandidateError::CandidateSpaceExhausted(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(CandidateError::CandidateSpaceExhausted(prev.canonical_key().to_string()))
    }

    fn module_target(&self, prev: &EnvironmentCandidate, named: &str) -> Edit {
        let top = named.trim().split('.').next().unwrap_or("").to_string();
        if let Some(pin) = prev.pins().iter().find(|p| p.import_name == top || p.install_name == top) {
            return Edit::Repin {
                install_name: pin.install_name.clone(),
                also_exclude: Vec::new(),
            };
        }
        let install = self.mapping.lookup(&top).to_string();
        match prev.pin_for(&install) {
            Some(pin) => Edit::Repin {
                install_name: pin.install_name.clone(),
                also_exclude: Vec::new(),
            },
            None => Edit::Add(ModuleRequirement::new(top, install)),
        }
    }

    fn primary_edit(&self, prev: &EnvironmentCandidate, triage: &TriageReport) -> Option<Edit> {
        let field = |k: &str| triage.payload.get(k).map(String::as_str).filter(|s| !s.is_empty());
        match triage.primary_class {
            ErrorClass::ModuleNotFound | ErrorClass::ImportError | ErrorClass::AttributeError => {
                field("module").map(|m| self.module_target(prev, m))
            }
            ErrorClass::VersionNotFound | ErrorClass::InvalidVersion => {
                let module = field("module")?;
                let pin = prev.pins().iter().find(|p| {
                    p.install_name.eq_ignore_ascii_case(module) || p.import_name == module
                })?;
                Some(Edit::Repin {
                    install_name: pin.install_name.clone(),
                    also_exclude: field("requested_version").map(String::from).into_iter().collect(),
                })
            }
            ErrorClass::DependencyConflict => {
                let names: Vec<&str> = field("conflicting_modules")?
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .collect();
                let in_candidate = names.iter().find(|n| {
                    prev.pins().iter().any(|p| p.install_name.eq_ignore_ascii_case(n))
                });
                match in_candidate {
                    Some(n) => {
                        let pin = prev
                            .pins()
                            .iter()
                            .find(|p| p.install_name.eq_ignore_ascii_case(n))
                            .expect("matched above");
                        Some(Edit::Repin {
                            install_name: pin.install_name.clone(),
                            also_exclude: Vec::new(),
                        })
                    }
                    None => names.first().map(|n| Edit::Add(ModuleRequirement::new(*n, *n))),
                }
            }
            ErrorClass::NonZeroCode | ErrorClass::SyntaxError => None,
        }
    }

    fn apply(
        &self,
        prev: &EnvironmentCandidate,
        edit: &Edit,
        history: &AttemptHistory,
        rag: bool,
    ) -> Result<Built, CandidateError> {
        let interpreter = prev.interpreter();
        let (req, mut excluded, note) = match edit {
            Edit::Add(req) => (req.clone(), Vec::new(), format!("add {}", req.install_name)),
            Edit::Repin {
                install_name,
                also_exclude,
            } => {
                let pin = prev
                    .pin_for(install_name)
                    .ok_or_else(|| CandidateError::Unpinned(install_name.clone()))?;
                let mut excluded = also_exclude.clone();
                excluded.extend(pin.version.clone());
                let req = ModuleRequirement {
                    version: None,
                    ..pin.clone()
                };
                (req, excluded, format!("repin {}", pin.pin_text()))
            }
        };
        loop {
            let v = self.choose(&req, interpreter, history, &excluded, rag)?;
            let candidate = prev.with_pin(req.clone().pinned(v.clone()))?;
            if !history.contains(candidate.canonical_key()) {
                return Ok(Built {
                    candidate,
                    notes: vec![format!("{note} -> {}=={v}", req.install_name)],
                });
            }
            excluded.push(v);
        }
    }
}
