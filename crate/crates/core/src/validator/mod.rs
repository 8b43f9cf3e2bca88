//! Building and running candidates.
//!
//! A [`ValidatorBackend`] turns one [`BuildRecipe`] into a [`BuildOutcome`]. Two backends exist:
//! [`ContainerValidator`] drives a container engine through its command line, and
//! [`SimulatedValidator`] answers from a world document so every failure path can be exercised
//! offline. Both produce logs in the same installer/interpreter message formats.

mod container;
mod simulated;

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use container::{ContainerValidator, DEFAULT_ENGINE};
pub use simulated::{
    ImportSpec, ModuleBehaviour, PackageSpec, ProgramSpec, SimulatedValidator, SyntaxSpec, VersionSpec, World,
};

use crate::dockerfile::{emit, BuildRecipe, EmitError};
use crate::source::SourceFile;
use crate::triage;

pub const DEFAULT_BUILD_TIMEOUT: Duration = Duration::from_secs(900);
pub const DEFAULT_RUN_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomePhase {
    Build,
    Run,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeStatus {
    Success,
    Failure,
    Timeout,
    /// Not validated because a lower-indexed sibling already succeeded.
    Cancelled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildOutcome {
    pub phase: OutcomePhase,
    pub status: OutcomeStatus,
    pub exit_code: Option<i32>,
    pub log: String,
    pub duration_seconds: f64,
    pub candidate_key: String,
}

impl BuildOutcome {
    pub fn is_success(&self) -> bool {
        self.status == OutcomeStatus::Success
    }

    fn cancelled(key: &str) -> Self {
        BuildOutcome {
            phase: OutcomePhase::Build,
            status: OutcomeStatus::Cancelled,
            exit_code: None,
            log: "cancelled: a sibling candidate already succeeded".into(),
            duration_seconds: 0.0,
            candidate_key: key.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValidatorKind {
    Container,
    Simulated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationLimits {
    pub build_timeout: Duration,
    pub run_timeout: Duration,
    /// Validations in flight at once, across every caller sharing the backend.
    pub concurrency: usize,
}

impl Default for ValidationLimits {
    fn default() -> Self {
        ValidationLimits {
            build_timeout: DEFAULT_BUILD_TIMEOUT,
            run_timeout: DEFAULT_RUN_TIMEOUT,
            concurrency: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(4),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("container engine unavailable: {0}")]
    EngineUnavailable(String),
    #[error("container tag {0} used by two recipes")]
    DuplicateTag(String),
    #[error("world document: {0}")]
    World(String),
}

pub trait ValidatorBackend: Send + Sync {
    fn kind(&self) -> ValidatorKind;
    fn limits(&self) -> &ValidationLimits;
    /// Build the recipe, run it, and clean up. Candidate failures are outcomes, not errors.
    fn validate(&self, recipe: &BuildRecipe, snippet: &SourceFile) -> Result<BuildOutcome, ValidationError>;
}

/// Counting semaphore shared by every caller of one backend.
#[derive(Debug)]
pub(crate) struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

pub(crate) struct SlotGuard<'a>(&'a Slots);

impl Slots {
    pub(crate) fn new(n: usize) -> Self {
        Slots {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    pub(crate) fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// Emit the build file, or the build-phase failure an installer would report for a recipe
/// whose tokens cannot be interpolated.
pub(crate) fn emit_or_failure(recipe: &BuildRecipe) -> Result<String, BuildOutcome> {
    match emit(recipe) {
        Ok(text) => Ok(text),
        Err(e) => {
            let log = match &e {
                EmitError::UnsafeToken { field, value } if *field != "snippet filename" => {
                    let pin = recipe
                        .candidate
                        .pins()
                        .iter()
                        .find(|p| p.install_name == *value || p.version.as_deref() == Some(value.as_str()))
                        .map(|p| p.pin_text())
                        .unwrap_or_else(|| value.clone());
                    format!("ERROR: Invalid requirement: '{pin}'\nThe command returned a non-zero code: 1\n")
                }
                other => format!("error: {other}\nThe command returned a non-zero code: 1\n"),
            };
            Err(BuildOutcome {
                phase: OutcomePhase::Build,
                status: OutcomeStatus::Failure,
                exit_code: Some(1),
                log,
                duration_seconds: 0.0,
                candidate_key: recipe.candidate.canonical_key().to_string(),
            })
        }
    }
}

/// A run that exited 0 still fails if its output shows one of the critical error classes.
pub(crate) fn settle_run_status(outcome: &mut BuildOutcome) {
    if outcome.status == OutcomeStatus::Success {
        let report = triage::classify(outcome);
        if report.detected.iter().any(|c| c.is_critical()) {
            outcome.status = OutcomeStatus::Failure;
        }
    }
}

/// Validate `recipes` on a bounded pool and return outcomes in recipe order.
///
/// With `early_cancel`, once recipe `i` succeeds any recipe after `i` that has not started is
/// reported as cancelled, so the lowest-indexed success is always the same regardless of
/// scheduling. An unavailable engine aborts the whole batch.
pub fn validate_parallel(
    backend: &dyn ValidatorBackend,
    recipes: &[BuildRecipe],
    snippet: &SourceFile,
    early_cancel: bool,
) -> Result<Vec<BuildOutcome>, ValidationError> {
    for (i, r) in recipes.iter().enumerate() {
        if recipes[..i].iter().any(|o| o.container_tag == r.container_tag) {
            return Err(ValidationError::DuplicateTag(r.container_tag.clone()));
        }
    }
    if recipes.is_empty() {
        return Ok(Vec::new());
    }
    let workers = backend.limits().concurrency.clamp(1, recipes.len());
    let next = AtomicUsize::new(0);
    let first_success = AtomicUsize::new(usize::MAX);
    let abort = AtomicBool::new(false);
    let results: Mutex<Vec<Option<Result<BuildOutcome, ValidationError>>>> =
        Mutex::new((0..recipes.len()).map(|_| None).collect());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if abort.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= recipes.len() {
                    break;
                }
                let recipe = &recipes[i];
                let result = if early_cancel && first_success.load(Ordering::SeqCst) < i {
                    Ok(BuildOutcome::cancelled(recipe.candidate.canonical_key()))
                } else {
                    backend.validate(recipe, snippet)
                };
                match &result {
                    Ok(o) if o.is_success() => {
                        first_success.fetch_min(i, Ordering::SeqCst);
                    }
                    Err(_) => abort.store(true, Ordering::SeqCst),
                    _ => {}
                }
                results.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(result);
            });
        }
    });

    let results = results.into_inner().unwrap_or_else(|e| e.into_inner());
    let mut out = Vec::with_capacity(recipes.len());
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Some(Ok(o)) => out.push(o),
            Some(Err(e)) => return Err(e),
            // only reachable after an abort, whose error is reported above or below
            None => {
                return Err(ValidationError::EngineUnavailable(format!(
                    "batch aborted before recipe {i} ran"
                )))
            }
        }
    }
    Ok(out)
}
