//! World-document validator.
//!
//! A [`World`] lists, per package, which versions exist and on which interpreter series they
//! install, and per program which imports it needs and which candidate keys actually run.
//! Validation walks the same steps a container build would and writes installer/interpreter
//! style logs, so the triage patterns see the same text either way.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, OnceLock};

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{
    emit_or_failure, settle_run_status, BuildOutcome, OutcomePhase, OutcomeStatus, Slots, ValidationError,
    ValidationLimits, ValidatorBackend, ValidatorKind,
};
use crate::candidate::{EnvironmentCandidate, ModuleRequirement};
use crate::dockerfile::BuildRecipe;
use crate::interpreter::InterpreterVersion;
use crate::registry::{normalize_name, MemoryRegistry, ReleaseRecord};
use crate::source::SourceFile;
use crate::triage::ErrorClass;
use crate::version::{compare_version_strings, SpecifierSet, Version};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct World {
    /// Install name → version text → release facts.
    #[serde(default)]
    pub packages: BTreeMap<String, PackageSpec>,
    /// Snippet file name → program facts; `"*"` matches any file.
    #[serde(default)]
    pub programs: BTreeMap<String, ProgramSpec>,
    /// Error class name → log template overriding the built-in one.
    #[serde(default)]
    pub templates: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PackageSpec {
    pub versions: BTreeMap<String, VersionSpec>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VersionSpec {
    /// Series this version installs on; when absent, `requires_python` decides.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub python: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requires_python: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub released: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub yanked: bool,
    /// Dependency constraints such as `numpy<1.17`, checked against the other pins.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub requires: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProgramSpec {
    /// Series whose parser accepts the program; all when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interpreters: Option<Vec<String>>,
    /// Imports executed at run time, in order, including ones the source hides.
    #[serde(default)]
    pub imports: Vec<ImportSpec>,
    /// Candidate keys that run cleanly.
    #[serde(default)]
    pub runnable: Vec<String>,
    /// Install name → which versions behave.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub modules: BTreeMap<String, ModuleBehaviour>,
    /// Candidate keys whose run never finishes.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hangs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub syntax: Option<SyntaxSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ImportSpec {
    Same(String),
    Mapped { name: String, package: String },
}

impl ImportSpec {
    pub fn import_name(&self) -> &str {
        match self {
            ImportSpec::Same(n) => n,
            ImportSpec::Mapped { name, .. } => name,
        }
    }

    pub fn package(&self) -> &str {
        match self {
            ImportSpec::Same(n) => n,
            ImportSpec::Mapped { package, .. } => package,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleBehaviour {
    pub good: Vec<String>,
    /// `AttributeError`, `ImportError` or `NonZeroCode`.
    #[serde(default = "default_behaviour_error")]
    pub error: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

fn default_behaviour_error() -> String {
    "AttributeError".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntaxSpec {
    pub line: u32,
    pub text: String,
    pub message: String,
}

impl Default for SyntaxSpec {
    fn default() -> Self {
        SyntaxSpec {
            line: 1,
            text: "print 'hello'".into(),
            message: "invalid syntax".into(),
        }
    }
}

impl World {
    pub fn load(path: impl AsRef<Path>) -> Result<World, ValidationError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ValidationError::World(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| ValidationError::World(format!("{}: {e}", path.display())))
    }

    pub fn program(&self, file_name: &str) -> Option<&ProgramSpec> {
        self.programs.get(file_name).or_else(|| self.programs.get("*"))
    }

    fn package(&self, name: &str) -> Option<&PackageSpec> {
        let norm = normalize_name(name);
        self.packages.iter().find(|(k, _)| normalize_name(k) == norm).map(|(_, v)| v)
    }

    /// Registry documents describing the same packages, for retrieval.
    pub fn registry(&self) -> MemoryRegistry {
        let mut reg = MemoryRegistry::new();
        for (name, pkg) in &self.packages {
            let releases: Vec<ReleaseRecord> = pkg
                .versions
                .iter()
                .map(|(v, spec)| {
                    let mut r = ReleaseRecord::new(v.clone()).yanked(spec.yanked);
                    if let Some(t) = spec.released {
                        r = r.released(t);
                    }
                    if let Some(c) = &spec.requires_python {
                        r = r.requires(c.clone());
                    }
                    r
                })
                .collect();
            reg.insert_releases(name, &releases);
        }
        reg
    }

    fn template(&self, class: ErrorClass) -> String {
        self.templates
            .get(class.as_str())
            .cloned()
            .unwrap_or_else(|| default_template(class).to_string())
    }
}

impl VersionSpec {
    fn installs_on(&self, interpreter: InterpreterVersion) -> bool {
        match &self.python {
            Some(list) => list.iter().any(|s| s.trim() == interpreter.series()),
            None => ReleaseRecord {
                version: String::new(),
                released_at: None,
                requires_interpreter: self.requires_python.clone(),
                yanked: false,
            }
            .supports(&interpreter.window()),
        }
    }
}

fn default_template(class: ErrorClass) -> &'static str {
    match class {
        ErrorClass::VersionNotFound => {
            "ERROR: Could not find a version that satisfies the requirement {module}=={version} (from versions: {versions})\n\
             ERROR: No matching distribution found for {module}=={version}"
        }
        ErrorClass::InvalidVersion => "ERROR: Invalid requirement: '{module}=={version}'",
        ErrorClass::DependencyConflict => {
            "ERROR: Cannot install {first} and {second} because these package versions have conflicting dependencies.\n\
             \n\
             The conflict is caused by:\n    The user requested {requested}\n    {constraint}\n\
             \n\
             To fix this you could try to:\n\
             1. loosen the range of package versions you've specified\n\
             2. remove package versions to allow pip attempt to solve the dependency conflict\n\
             \n\
             ERROR: ResolutionImpossible: for help visit https://pip.pypa.io/en/latest/topics/dependency-resolution/#dealing-with-dependency-conflicts"
        }
        ErrorClass::ModuleNotFound => {
            "Traceback (most recent call last):\n  File \"/app/{snippet}\", line {line}, in <module>\n    import {import}\n{no_module}"
        }
        ErrorClass::ImportError => {
            "Traceback (most recent call last):\n  File \"/app/{snippet}\", line {line}, in <module>\n    from {import} import {detail}\n\
             ImportError: cannot import name '{detail}' from '{import}' (/usr/local/lib/python{series}/site-packages/{import}/__init__.py)"
        }
        ErrorClass::AttributeError => {
            "Traceback (most recent call last):\n  File \"/app/{snippet}\", line {line}, in <module>\n    {import}.{detail}()\n\
             AttributeError: module '{import}' has no attribute '{detail}'"
        }
        ErrorClass::NonZeroCode => {
            "Traceback (most recent call last):\n  File \"/app/{snippet}\", line {line}, in <module>\n    main()\nRuntimeError: {detail}"
        }
        ErrorClass::SyntaxError => "  File \"/app/{snippet}\", line {line}\n    {text}\n    ^\nSyntaxError: {message}",
    }
}

fn fill(template: &str, vars: &[(&str, String)]) -> String {
    let mut out = template.to_string();
    for (k, v) in vars {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out
}

fn requirement_parts(req: &str) -> Option<(String, String)> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"^\s*([A-Za-z0-9][A-Za-z0-9_.\-]*)\s*(.*)$").expect("requirement regex"));
    re.captures(req).map(|c| (c[1].to_string(), c[2].trim().to_string()))
}

/// Validator answering from a [`World`]. Fully deterministic.
#[derive(Debug)]
pub struct SimulatedValidator {
    world: World,
    limits: ValidationLimits,
    slots: Slots,
    validations: AtomicUsize,
    validated: Mutex<Vec<String>>,
}

impl SimulatedValidator {
    pub fn new(world: World) -> Self {
        let limits = ValidationLimits::default();
        let slots = Slots::new(limits.concurrency);
        SimulatedValidator {
            world,
            limits,
            slots,
            validations: AtomicUsize::new(0),
            validated: Mutex::new(Vec::new()),
        }
    }

    pub fn with_limits(mut self, limits: ValidationLimits) -> Self {
        self.slots = Slots::new(limits.concurrency);
        self.limits = limits;
        self
    }

    pub fn with_concurrency(self, cap: usize) -> Self {
        let limits = ValidationLimits {
            concurrency: cap.max(1),
            ..self.limits.clone()
        };
        self.with_limits(limits)
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn validation_count(&self) -> usize {
        self.validations.load(Ordering::SeqCst)
    }

    /// Every candidate key validated so far, in completion order.
    pub fn validated_keys(&self) -> Vec<String> {
        self.validated.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn installable(&self, name: &str, interpreter: InterpreterVersion) -> Vec<String> {
        let mut versions: Vec<String> = self
            .world
            .package(name)
            .map(|p| {
                p.versions
                    .iter()
                    .filter(|(_, s)| s.installs_on(interpreter))
                    .map(|(v, _)| v.clone())
                    .collect()
            })
            .unwrap_or_default();
        versions.sort_by(|a, b| compare_version_strings(a, b));
        versions
    }

    fn version_spec(&self, pin: &ModuleRequirement) -> Option<&VersionSpec> {
        self.world.package(&pin.install_name)?.versions.get(pin.version.as_deref()?)
    }

    /// First constraint between `pin` and an earlier pin that the pair violates.
    fn conflict(&self, earlier: &[ModuleRequirement], pin: &ModuleRequirement) -> Option<(String, String, String)> {
        let violates = |owner: &ModuleRequirement, other: &ModuleRequirement| -> Option<String> {
            let spec = self.version_spec(owner)?;
            spec.requires.iter().find_map(|req| {
                let (dep, constraint) = requirement_parts(req)?;
                if normalize_name(&dep) != normalize_name(&other.install_name) {
                    return None;
                }
                let set = SpecifierSet::parse(&constraint).ok()?;
                let version = Version::parse(other.version.as_deref()?).ok()?;
                (!set.contains(&version)).then(|| {
                    format!("{} {} depends on {}{}", owner.install_name, owner.version.as_deref().unwrap_or(""), dep, constraint)
                })
            })
        };
        earlier.iter().find_map(|prev| {
            violates(prev, pin)
                .or_else(|| violates(pin, prev))
                .map(|constraint| (prev.pin_text(), pin.pin_text(), constraint))
        })
    }

    fn build(&self, c: &EnvironmentCandidate, log: &mut String) -> Option<(ErrorClass, Vec<(&'static str, String)>)> {
        let interpreter = c.interpreter();
        let steps = c.pins().len() + 5;
        log.push_str(&format!("Step 1/{steps} : FROM python:{}\n ---> 5f2a1c3b9d7e\n", interpreter.series()));
        log.push_str(&format!("Step 2/{steps} : WORKDIR /app\n ---> Running in 0a1b2c3d4e5f\n"));
        log.push_str(&format!(
            "Step 3/{steps} : RUN [\"pip\",\"install\",\"--upgrade\",\"pip\"]\nRequirement already satisfied: pip in /usr/local/lib/python{}/site-packages\n",
            interpreter.series()
        ));
        for (k, pin) in c.pins().iter().enumerate() {
            let name = &pin.install_name;
            let version = pin.version.as_deref().unwrap_or("");
            log.push_str(&format!(
                "Step {}/{steps} : RUN [\"pip\",\"install\",\"--trusted-host\",\"pypi.python.org\",\"--default-timeout=100\",\"{name}=={version}\"]\n",
                k + 4
            ));
            let vars = |versions: String| {
                vec![("module", name.clone()), ("version", version.to_string()), ("versions", versions)]
            };
            if Version::parse(version).is_err() {
                return Some((ErrorClass::InvalidVersion, vars(String::new())));
            }
            let installable = self.installable(name, interpreter);
            if !installable.iter().any(|v| v == version) {
                let listed = if installable.is_empty() { "none".to_string() } else { installable.join(", ") };
                return Some((ErrorClass::VersionNotFound, vars(listed)));
            }
            log.push_str(&format!("Collecting {name}=={version}\n  Downloading {name}-{version}.tar.gz\n"));
            if let Some((first, second, constraint)) = self.conflict(&c.pins()[..k], pin) {
                return Some((
                    ErrorClass::DependencyConflict,
                    vec![
                        ("first", first),
                        ("second", second.clone()),
                        ("requested", second),
                        ("constraint", constraint),
                    ],
                ));
            }
            log.push_str(&format!("Successfully installed {name}-{version}\n"));
        }
        None
    }

    fn run(
        &self,
        program: &ProgramSpec,
        c: &EnvironmentCandidate,
    ) -> Option<(ErrorClass, Vec<(&'static str, String)>)> {
        let interpreter = c.interpreter();
        if let Some(list) = &program.interpreters {
            if !list.iter().any(|s| s.trim() == interpreter.series()) {
                let syntax = program.syntax.clone().unwrap_or_default();
                return Some((
                    ErrorClass::SyntaxError,
                    vec![("line", syntax.line.to_string()), ("text", syntax.text), ("message", syntax.message)],
                ));
            }
        }
        for (idx, import) in program.imports.iter().enumerate() {
            let line = (idx + 1).to_string();
            let Some(pin) = c.pin_for_normalized(import.package()) else {
                let name = import.import_name().to_string();
                let no_module = if interpreter.major() == 2 {
                    format!("ImportError: No module named {name}")
                } else {
                    format!("ModuleNotFoundError: No module named '{name}'")
                };
                return Some((
                    ErrorClass::ModuleNotFound,
                    vec![("line", line), ("import", name), ("no_module", no_module)],
                ));
            };
            let behaviour = program
                .modules
                .iter()
                .find(|(k, _)| normalize_name(k) == normalize_name(&pin.install_name))
                .map(|(_, b)| b);
            if let Some(b) = behaviour {
                if !b.good.iter().any(|g| Some(g.as_str()) == pin.version.as_deref()) {
                    let class = b.error.parse().unwrap_or(ErrorClass::AttributeError);
                    let detail = b.detail.clone().unwrap_or_else(|| match class {
                        ErrorClass::ImportError => "Model".into(),
                        ErrorClass::NonZeroCode => format!("{} {} is not supported", pin.install_name, pin.version.as_deref().unwrap_or("")),
                        _ => "load".into(),
                    });
                    return Some((class, vec![("line", line), ("import", import.import_name().to_string()), ("detail", detail)]));
                }
            }
        }
        if !program.runnable.iter().any(|k| same_key(k, c.canonical_key())) {
            return Some((
                ErrorClass::NonZeroCode,
                vec![
                    ("line", (program.imports.len() + 1).to_string()),
                    ("detail", "the program did not produce its expected result".into()),
                ],
            ));
        }
        None
    }
}

/// Keys written in a world may spell package names in any case or separator style.
fn same_key(a: &str, b: &str) -> bool {
    fn norm(key: &str) -> String {
        let (series, pins) = key.split_once('|').unwrap_or((key, ""));
        let mut pins: Vec<String> = pins
            .split(';')
            .filter(|p| !p.is_empty())
            .map(|p| match p.split_once("==") {
                Some((n, v)) => format!("{}=={}", normalize_name(n), v.trim()),
                None => normalize_name(p),
            })
            .collect();
        pins.sort();
        format!("{}|{}", series.trim(), pins.join(";"))
    }
    a == b || norm(a) == norm(b)
}

impl EnvironmentCandidate {
    fn pin_for_normalized(&self, name: &str) -> Option<&ModuleRequirement> {
        let norm = normalize_name(name);
        self.pins().iter().find(|p| normalize_name(&p.install_name) == norm)
    }
}

impl ValidatorBackend for SimulatedValidator {
    fn kind(&self) -> ValidatorKind {
        ValidatorKind::Simulated
    }

    fn limits(&self) -> &ValidationLimits {
        &self.limits
    }

    fn validate(&self, recipe: &BuildRecipe, snippet: &SourceFile) -> Result<BuildOutcome, ValidationError> {
        let _slot = self.slots.acquire();
        let c = &recipe.candidate;
        let key = c.canonical_key().to_string();
        self.validations.fetch_add(1, Ordering::SeqCst);
        self.validated.lock().unwrap_or_else(|e| e.into_inner()).push(key.clone());

        let file_name = snippet.file_name();
        let program = self
            .world
            .program(&file_name)
            .ok_or_else(|| ValidationError::World(format!("no program entry for {file_name}")))?;
        if let Err(outcome) = emit_or_failure(recipe) {
            return Ok(outcome);
        }
        let build_seconds = 2.0 + 3.0 * c.pins().len() as f64;
        let series = c.interpreter().series();
        let common = |vars: &mut Vec<(&'static str, String)>| {
            vars.push(("snippet", recipe.snippet_filename.clone()));
            vars.push(("series", series.clone()));
        };

        let mut log = String::new();
        if let Some((class, mut vars)) = self.build(c, &mut log) {
            common(&mut vars);
            log.push_str(&fill(&self.world.template(class), &vars));
            let failing = log
                .lines()
                .rev()
                .find(|l| l.starts_with("Step "))
                .and_then(|l| l.split(" : RUN ").nth(1))
                .map(|cmd| cmd.to_string())
                .unwrap_or_default();
            log.push_str(&format!("\nThe command '{failing}' returned a non-zero code: 1\n"));
            return Ok(BuildOutcome {
                phase: OutcomePhase::Build,
                status: OutcomeStatus::Failure,
                exit_code: Some(1),
                log,
                duration_seconds: build_seconds,
                candidate_key: key,
            });
        }
        let steps = c.pins().len() + 5;
        log.push_str(&format!(
            "Step {}/{steps} : COPY {} /app\nStep {steps}/{steps} : CMD [\"python\", \"/app/{}\"]\nSuccessfully built 9c8b7a6f5e4d\nSuccessfully tagged {}:latest\n",
            steps - 1,
            recipe.snippet_filename,
            recipe.snippet_filename,
            recipe.container_tag
        ));

        if program.hangs.iter().any(|k| same_key(k, &key)) {
            let limit = self.limits.run_timeout.as_secs_f64();
            log.push_str(&format!("[envrepair] run exceeded the {limit:.0} s limit and was stopped\n"));
            return Ok(BuildOutcome {
                phase: OutcomePhase::Run,
                status: OutcomeStatus::Timeout,
                exit_code: None,
                log,
                duration_seconds: build_seconds + limit,
                candidate_key: key,
            });
        }
        let mut outcome = match self.run(program, c) {
            Some((class, mut vars)) => {
                common(&mut vars);
                log.push_str(&fill(&self.world.template(class), &vars));
                log.push_str("\n[envrepair] container exited with code 1\n");
                BuildOutcome {
                    phase: OutcomePhase::Run,
                    status: OutcomeStatus::Failure,
                    exit_code: Some(1),
                    log,
                    duration_seconds: build_seconds + 0.5,
                    candidate_key: key,
                }
            }
            None => {
                log.push_str("[envrepair] container exited with code 0\n");
                BuildOutcome {
                    phase: OutcomePhase::Run,
                    status: OutcomeStatus::Success,
                    exit_code: Some(0),
                    log,
                    duration_seconds: build_seconds + 0.5,
                    candidate_key: key,
                }
            }
        };
        settle_run_status(&mut outcome);
        Ok(outcome)
    }
}
