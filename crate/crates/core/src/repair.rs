//! The infer → pin → validate → triage → vary loop.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candidate::{
    expand_interpreters, CandidateBuilder, CandidateError, EnvironmentCandidate, ModuleRequirement, MAX_RANGE,
};
use crate::dockerfile::BuildRecipe;
use crate::interpreter::InterpreterVersion;
use crate::llm::{Gateway, GatewayError, GenerationConfig, InferredEnvironment};
use crate::registry::{normalize_name, RegistryError, Retriever};
use crate::source::{extract_imports, to_requirements, NameMapping, SourceFile, StdlibIndex};
use crate::triage::{self, ErrorClass, TriageReport};
use crate::validator::{validate_parallel, BuildOutcome, OutcomePhase, OutcomeStatus, ValidationError, ValidatorBackend};

/// Everything already validated within one repair call.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttemptHistory {
    tried_candidates: BTreeSet<String>,
    /// `(install name, series)` → versions in the order they were first tried.
    tried_versions: BTreeMap<(String, String), Vec<String>>,
    iteration: u32,
}

impl AttemptHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, canonical_key: &str) -> bool {
        self.tried_candidates.contains(canonical_key)
    }

    pub fn tried_versions(&self, install_name: &str, interpreter: InterpreterVersion) -> &[String] {
        self.tried_versions
            .get(&(install_name.to_string(), interpreter.series()))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn tried_candidates(&self) -> &BTreeSet<String> {
        &self.tried_candidates
    }

    pub fn iteration(&self) -> u32 {
        self.iteration
    }

    /// Returns false when the key was already present.
    pub fn record(&mut self, candidate: &EnvironmentCandidate) -> bool {
        let series = candidate.interpreter().series();
        for pin in candidate.pins() {
            let versions = self
                .tried_versions
                .entry((pin.install_name.clone(), series.clone()))
                .or_default();
            if let Some(v) = &pin.version {
                if !versions.contains(v) {
                    versions.push(v.clone());
                }
            }
        }
        self.tried_candidates.insert(candidate.canonical_key().to_string())
    }

    fn complete_cycle(&mut self) {
        self.iteration += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub loop_budget: u32,
    pub range: u32,
    pub rag: bool,
    pub generation: GenerationConfig,
    /// Stop validating siblings once one candidate of a cycle succeeds.
    pub early_cancel: bool,
    /// Prefix for container tags; distinct concurrent runs need distinct ids.
    pub run_id: String,
    /// Directory that receives `<stem>.trace.json`.
    pub trace_dir: Option<PathBuf>,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            loop_budget: 10,
            range: 1,
            rag: true,
            generation: GenerationConfig::default(),
            early_cancel: true,
            run_id: "run".into(),
            trace_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("loop budget must be at least 1")]
    ZeroBudget,
    #[error("range {0} exceeds the maximum of {MAX_RANGE}")]
    RangeTooLarge(u32),
}

impl LoopConfig {
    pub fn check(&self) -> Result<(), ConfigError> {
        if self.loop_budget == 0 {
            return Err(ConfigError::ZeroBudget);
        }
        if self.range > MAX_RANGE {
            return Err(ConfigError::RangeTooLarge(self.range));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RepairStatus {
    Fixed,
    Unfixed,
    Aborted,
}

/// One validated candidate within a cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub interpreter: String,
    pub candidate_key: String,
    pub phase: OutcomePhase,
    pub status: OutcomeStatus,
    pub duration_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class: Option<ErrorClass>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub triage: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub iteration: u32,
    pub entries: Vec<TraceEntry>,
    /// Branches that ended during this cycle, with the reason.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ended_branches: Vec<String>,
}

impl CycleRecord {
    pub fn candidate_keys(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.candidate_key.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairResult {
    pub file: String,
    pub status: RepairStatus,
    pub winning_candidate: Option<EnvironmentCandidate>,
    pub iterations_used: u32,
    pub wall_time_seconds: f64,
    pub predicted_interpreter: Option<String>,
    pub requirements: Vec<ModuleRequirement>,
    pub per_iteration_trace: Vec<CycleRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abort_reason: Option<String>,
    /// Some run finished with no critical error class, exit code aside.
    pub lenient_fixed: bool,
}

impl RepairResult {
    pub fn is_fixed(&self) -> bool {
        self.status == RepairStatus::Fixed
    }

    /// Every validated key in validation order.
    pub fn validated_keys(&self) -> Vec<&str> {
        self.per_iteration_trace
            .iter()
            .flat_map(|c| c.entries.iter())
            .filter(|e| e.status != OutcomeStatus::Cancelled)
            .map(|e| e.candidate_key.as_str())
            .collect()
    }

    pub fn summary(&self) -> String {
        match (&self.status, &self.winning_candidate) {
            (RepairStatus::Fixed, Some(c)) => {
                format!("{}: fixed in {} cycle(s) with {}", self.file, self.iterations_used, c)
            }
            (RepairStatus::Aborted, _) => format!(
                "{}: aborted after {} cycle(s): {}",
                self.file,
                self.iterations_used,
                self.abort_reason.as_deref().unwrap_or("unknown")
            ),
            _ => format!("{}: not fixed after {} cycle(s)", self.file, self.iterations_used),
        }
    }
}

/// Union of static and inferred requirements, keyed by install name; static entries win.
///
/// Inferred versions are advisory and dropped, dotted names are reduced to their top level,
/// and the interpreter is normalized to a supported series (with a warning if it changed).
pub fn merge_stage_a(
    static_reqs: &[ModuleRequirement],
    inferred: &InferredEnvironment,
    mapping: &NameMapping,
) -> (Vec<ModuleRequirement>, InterpreterVersion, Option<String>) {
    let (interpreter, warning) = InterpreterVersion::normalize(&inferred.python_version);
    let mut out: Vec<ModuleRequirement> = Vec::new();
    let mut seen = BTreeSet::new();
    let inferred_reqs = inferred.python_modules.iter().filter_map(|m| {
        let top = m.module.trim().split('.').next().unwrap_or("").trim();
        (!top.is_empty()).then(|| ModuleRequirement::new(top, mapping.lookup(top)))
    });
    for req in static_reqs.iter().cloned().chain(inferred_reqs) {
        let req = ModuleRequirement { version: None, ..req };
        if seen.insert(normalize_name(&req.install_name)) {
            out.push(req);
        }
    }
    (out, interpreter, warning)
}

/// Requirements that are not part of `interpreter`'s standard library.
fn third_party(reqs: &[ModuleRequirement], interpreter: InterpreterVersion) -> Vec<ModuleRequirement> {
    let stdlib = StdlibIndex::bundled();
    reqs.iter()
        .filter(|r| !stdlib.is_stdlib(&r.import_name, interpreter).unwrap_or(false))
        .cloned()
        .collect()
}

#[derive(Debug)]
enum Branch {
    /// Next candidate not chosen yet; `last` is the most recent failure, if any.
    Pending { last: Option<(EnvironmentCandidate, TriageReport)> },
    Ready(EnvironmentCandidate, Vec<String>),
    Ended,
}

/// Why a candidate could not be produced.
enum Stop {
    Branch(String),
    Retry(String),
    Abort(String),
}

fn classify_candidate_error(e: CandidateError) -> Stop {
    match e {
        CandidateError::InterpreterIncompatible(_) => Stop::Branch("program does not parse".into()),
        CandidateError::CandidateSpaceExhausted(m) => Stop::Branch(format!("no untried candidate left ({m})")),
        CandidateError::Registry(RegistryError::RegistryUnavailable(m)) => Stop::Abort(format!("registry unavailable: {m}")),
        CandidateError::Gateway(GatewayError::Backend(b)) => Stop::Abort(b.to_string()),
        CandidateError::Gateway(e @ GatewayError::MalformedReply { .. }) => Stop::Retry(e.to_string()),
        other => Stop::Retry(other.to_string()),
    }
}

/// Owns the collaborators of the loop; one value serves any number of concurrent repairs.
pub struct Repairer {
    gateway: Arc<Gateway>,
    retriever: Option<Arc<Retriever>>,
    validator: Arc<dyn ValidatorBackend>,
    mapping: NameMapping,
}

impl Repairer {
    pub fn new(gateway: Arc<Gateway>, retriever: Option<Arc<Retriever>>, validator: Arc<dyn ValidatorBackend>) -> Self {
        Repairer {
            gateway,
            retriever,
            validator,
            mapping: NameMapping::bundled(),
        }
    }

    pub fn with_mapping(mut self, mapping: NameMapping) -> Self {
        self.mapping = mapping;
        self
    }

    pub fn validator(&self) -> &Arc<dyn ValidatorBackend> {
        &self.validator
    }

    pub fn gateway(&self) -> &Arc<Gateway> {
        &self.gateway
    }

    pub fn repair(&self, file: &SourceFile, cfg: &LoopConfig) -> RepairResult {
        let start = Instant::now();
        let mut result = RepairResult {
            file: file.file_name(),
            status: RepairStatus::Unfixed,
            winning_candidate: None,
            iterations_used: 0,
            wall_time_seconds: 0.0,
            predicted_interpreter: None,
            requirements: Vec::new(),
            per_iteration_trace: Vec::new(),
            warnings: Vec::new(),
            abort_reason: None,
            lenient_fixed: false,
        };
        if let Err(e) = cfg.check() {
            result.status = RepairStatus::Aborted;
            result.abort_reason = Some(e.to_string());
            return self.finish(result, start, cfg);
        }
        self.run_loop(file, cfg, &mut result);
        self.finish(result, start, cfg)
    }

    fn finish(&self, mut result: RepairResult, start: Instant, cfg: &LoopConfig) -> RepairResult {
        result.wall_time_seconds = start.elapsed().as_secs_f64();
        if let Some(dir) = &cfg.trace_dir {
            let stem = std::path::Path::new(&result.file)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "snippet".into());
            let written = std::fs::create_dir_all(dir).and_then(|_| {
                let text = serde_json::to_string_pretty(&result).map_err(std::io::Error::other)?;
                std::fs::write(dir.join(format!("{stem}.trace.json")), text)
            });
            if let Err(e) = written {
                tracing::warn!("could not write trace for {}: {e}", result.file);
            }
        }
        result
    }

    fn stage_a(&self, file: &SourceFile, cfg: &LoopConfig, result: &mut RepairResult) -> Result<(Vec<ModuleRequirement>, InterpreterVersion), String> {
        let static_reqs = to_requirements(&extract_imports(file), &self.mapping);
        let inferred = match self.gateway.infer_environment(file, &cfg.generation) {
            Ok(env) => env,
            Err(GatewayError::Backend(e)) => return Err(e.to_string()),
            Err(e) => {
                result.warnings.push(format!("inference failed, using static imports: {e}"));
                InferredEnvironment {
                    python_modules: Vec::new(),
                    python_version: String::new(),
                }
            }
        };
        let (merged, interpreter, warning) = if cfg.rag {
            merge_stage_a(&static_reqs, &inferred, &self.mapping)
        } else {
            merge_stage_a(&[], &inferred, &self.mapping)
        };
        result.warnings.extend(warning);
        let mut reqs = merged;
        if third_party(&reqs, interpreter).is_empty() && !third_party(&static_reqs, interpreter).is_empty() {
            result.warnings.push("inference named no third-party modules; using static imports".into());
            reqs = static_reqs;
        }
        Ok((reqs, interpreter))
    }

    fn run_loop(&self, file: &SourceFile, cfg: &LoopConfig, result: &mut RepairResult) {
        let (reqs, predicted) = match self.stage_a(file, cfg, result) {
            Ok(v) => v,
            Err(reason) => {
                result.status = RepairStatus::Aborted;
                result.abort_reason = Some(reason);
                return;
            }
        };
        result.predicted_interpreter = Some(predicted.series());
        result.requirements = reqs.clone();
        let interpreters = match expand_interpreters(predicted, cfg.range) {
            Ok(v) => v,
            Err(e) => {
                result.status = RepairStatus::Aborted;
                result.abort_reason = Some(e.to_string());
                return;
            }
        };
        let builder = CandidateBuilder::new(&self.gateway, self.retriever.as_deref(), &self.mapping, &cfg.generation);
        let mut history = AttemptHistory::new();
        let mut branches: Vec<(InterpreterVersion, Branch)> =
            interpreters.iter().map(|i| (*i, Branch::Pending { last: None })).collect();

        while history.iteration() < cfg.loop_budget {
            let mut record = CycleRecord {
                iteration: history.iteration() + 1,
                entries: Vec::new(),
                ended_branches: Vec::new(),
            };
            // choose this cycle's candidate for every live branch
            for (interp, branch) in branches.iter_mut() {
                let Branch::Pending { last } = branch else { continue };
                let built = match last {
                    None => builder.pin_versions(&third_party(&reqs, *interp), *interp, &history, cfg.rag),
                    Some((prev, report)) => builder.vary_after_failure(prev, report, &history, cfg.rag),
                };
                match built.map_err(classify_candidate_error) {
                    Ok(b) => *branch = Branch::Ready(b.candidate, b.notes),
                    Err(Stop::Branch(reason)) => {
                        record.ended_branches.push(format!("{interp}: {reason}"));
                        *branch = Branch::Ended;
                    }
                    Err(Stop::Retry(reason)) => result.warnings.push(format!("{interp}: {reason}; retrying next cycle")),
                    Err(Stop::Abort(reason)) => {
                        result.per_iteration_trace.push(record);
                        result.status = RepairStatus::Aborted;
                        result.abort_reason = Some(reason);
                        return;
                    }
                }
            }
            if branches.iter().all(|(_, b)| matches!(b, Branch::Ended)) {
                if !record.ended_branches.is_empty() {
                    result.per_iteration_trace.push(record);
                }
                break;
            }

            let mut ready: Vec<(usize, EnvironmentCandidate, Vec<String>)> = Vec::new();
            for (idx, (_, branch)) in branches.iter_mut().enumerate() {
                if let Branch::Ready(c, notes) = branch {
                    ready.push((idx, c.clone(), std::mem::take(notes)));
                }
            }
            let recipes: Vec<BuildRecipe> = ready
                .iter()
                .map(|(_, c, _)| BuildRecipe::new(c.clone(), &cfg.run_id))
                .collect();
            for (_, c, _) in &ready {
                history.record(c);
            }
            let outcomes = match validate_parallel(self.validator.as_ref(), &recipes, file, cfg.early_cancel) {
                Ok(o) => o,
                Err(e) => {
                    result.per_iteration_trace.push(record);
                    result.status = RepairStatus::Aborted;
                    result.abort_reason = Some(match e {
                        ValidationError::EngineUnavailable(m) => format!("container engine unavailable: {m}"),
                        other => other.to_string(),
                    });
                    return;
                }
            };
            history.complete_cycle();
            result.iterations_used = history.iteration();

            let mut winner: Option<EnvironmentCandidate> = None;
            for ((idx, candidate, notes), outcome) in ready.into_iter().zip(outcomes) {
                let mut entry = TraceEntry {
                    interpreter: candidate.interpreter().series(),
                    candidate_key: outcome.candidate_key.clone(),
                    phase: outcome.phase,
                    status: outcome.status,
                    duration_seconds: outcome.duration_seconds,
                    class: None,
                    triage: None,
                    notes,
                };
                if is_lenient_fix(&outcome) {
                    result.lenient_fixed = true;
                }
                match outcome.status {
                    OutcomeStatus::Success => {
                        if winner.is_none() {
                            winner = Some(candidate.clone());
                        }
                        branches[idx].1 = Branch::Ended;
                    }
                    OutcomeStatus::Cancelled => branches[idx].1 = Branch::Ended,
                    OutcomeStatus::Failure | OutcomeStatus::Timeout => {
                        let report = triage::classify_with_fallback(&outcome, &self.gateway, &cfg.generation);
                        entry.class = Some(report.primary_class);
                        entry.triage = Some(report.summary());
                        branches[idx].1 = Branch::Pending {
                            last: Some((candidate, report)),
                        };
                    }
                }
                record.entries.push(entry);
            }
            result.per_iteration_trace.push(record);
            if let Some(w) = winner {
                result.status = RepairStatus::Fixed;
                result.winning_candidate = Some(w);
                return;
            }
        }
        result.status = RepairStatus::Unfixed;
    }
}

fn is_lenient_fix(outcome: &BuildOutcome) -> bool {
    crate::bench::score_outcome(outcome, crate::bench::ScoreMode::Lenient) == crate::bench::Score::Fixed
}
