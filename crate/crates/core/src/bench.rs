//! Corpus runs: repeated repairs over a directory, per-run reports and the cumulative curve.
//!
//! Output layout under the report directory:
//!
//! ```text
//! records.jsonl          one FileRecord per (run, file), with run_index
//! reports.jsonl          one RunReport per run
//! cumulative.json        CumulativeReport
//! summary.txt            human-readable table
//! run-<k>/<stem>.trace.json
//! run-<k>/<stem>.Dockerfile   winning build file, fixed files only
//! ```

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dockerfile::{emit, BuildRecipe};
use crate::repair::{LoopConfig, RepairResult, RepairStatus, Repairer};
use crate::source::SourceFile;
use crate::triage;
use crate::validator::{BuildOutcome, OutcomePhase, OutcomeStatus};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{0} contains no .py files")]
    EmptyCorpus(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("runs must be at least 1")]
    ZeroRuns,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    /// Run phase, exit code 0, no critical error class.
    Strict,
    /// Run phase and no critical error class; a non-zero exit alone is tolerated.
    Lenient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Score {
    Fixed,
    Unfixed,
}

pub fn score_outcome(outcome: &BuildOutcome, mode: ScoreMode) -> Score {
    let ran = outcome.phase == OutcomePhase::Run
        && matches!(outcome.status, OutcomeStatus::Success | OutcomeStatus::Failure);
    let critical = triage::classify(outcome).detected.iter().any(|c| c.is_critical());
    let exit_ok = match mode {
        ScoreMode::Strict => outcome.exit_code == Some(0),
        ScoreMode::Lenient => true,
    };
    if ran && exit_ok && !critical {
        Score::Fixed
    } else {
        Score::Unfixed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub file_id: String,
    pub status: RepairStatus,
    pub iterations: u32,
    pub wall_time_seconds: f64,
    pub winning_key: Option<String>,
    pub lenient_fixed: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub fixed: usize,
    pub unfixed: usize,
    pub aborted: usize,
    pub lenient_fixed: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub mean: Option<f64>,
    pub q1: Option<f64>,
    pub q3: Option<f64>,
    pub iqr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub corpus_id: String,
    pub run_index: u32,
    pub seed: Option<u64>,
    pub per_file: Vec<FileRecord>,
    pub totals: Totals,
    /// Over fixed files only.
    pub timing: TimingStats,
}

/// Quantile with linear interpolation between closest ranks (`q` in `[0, 1]`).
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

pub fn timing_stats(times: &[f64]) -> TimingStats {
    let mut sorted: Vec<f64> = times.iter().copied().filter(|t| t.is_finite()).collect();
    sorted.sort_by(f64::total_cmp);
    if sorted.is_empty() {
        return TimingStats::default();
    }
    let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
    let q1 = quantile(&sorted, 0.25);
    let q3 = quantile(&sorted, 0.75);
    TimingStats {
        mean: Some(mean),
        q1,
        q3,
        iqr: q1.zip(q3).map(|(a, b)| b - a),
    }
}

fn totals_of(records: &[FileRecord]) -> Totals {
    let mut t = Totals::default();
    for r in records {
        match r.status {
            RepairStatus::Fixed => t.fixed += 1,
            RepairStatus::Unfixed => t.unfixed += 1,
            RepairStatus::Aborted => t.aborted += 1,
        }
        if r.lenient_fixed || r.status == RepairStatus::Fixed {
            t.lenient_fixed += 1;
        }
    }
    t
}

impl RunReport {
    pub fn from_records(corpus_id: &str, run_index: u32, seed: Option<u64>, per_file: Vec<FileRecord>) -> Self {
        let totals = totals_of(&per_file);
        let fixed_times: Vec<f64> = per_file
            .iter()
            .filter(|r| r.status == RepairStatus::Fixed)
            .map(|r| r.wall_time_seconds)
            .collect();
        RunReport {
            corpus_id: corpus_id.to_string(),
            run_index,
            seed,
            per_file,
            totals,
            timing: timing_stats(&fixed_times),
        }
    }

    pub fn totals_consistent(&self) -> bool {
        totals_of(&self.per_file) == self.totals
    }

    pub fn fixed_ids(&self) -> BTreeSet<&str> {
        self.per_file
            .iter()
            .filter(|r| r.status == RepairStatus::Fixed)
            .map(|r| r.file_id.as_str())
            .collect()
    }

    /// The report with every wall-clock figure zeroed, for comparing repeated runs.
    pub fn without_timing(&self) -> RunReport {
        let mut r = self.clone();
        r.seed = None;
        r.run_index = 0;
        for f in &mut r.per_file {
            f.wall_time_seconds = 0.0;
        }
        r.timing = TimingStats::default();
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativeReport {
    pub runs: usize,
    /// Entry `k` counts the distinct files fixed in runs `0..=k`.
    pub unique_fixed_by_prefix: Vec<usize>,
}

impl CumulativeReport {
    pub fn from_runs(runs: &[RunReport]) -> Self {
        let mut seen: BTreeSet<String> = BTreeSet::new();
        let mut curve = Vec::with_capacity(runs.len());
        for r in runs {
            seen.extend(r.fixed_ids().into_iter().map(String::from));
            curve.push(seen.len());
        }
        CumulativeReport {
            runs: runs.len(),
            unique_fixed_by_prefix: curve,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub corpus_id: String,
    pub runs: u32,
    pub jobs: usize,
    pub base_seed: u64,
    pub loop_cfg: LoopConfig,
    pub out_dir: Option<PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            corpus_id: "corpus".into(),
            runs: 1,
            jobs: 4,
            base_seed: 0,
            loop_cfg: LoopConfig::default(),
            out_dir: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub runs: Vec<RunReport>,
    pub cumulative: CumulativeReport,
}

/// `.py` files directly inside `dir`, sorted by name.
pub fn corpus_files(dir: &Path) -> Result<Vec<SourceFile>, BenchError> {
    let io = |source| BenchError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "py"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(BenchError::EmptyCorpus(dir.to_path_buf()));
    }
    paths
        .iter()
        .map(|p| {
            SourceFile::read(p).map_err(|e| BenchError::Io {
                path: p.clone(),
                source: std::io::Error::other(e.to_string()),
            })
        })
        .collect()
}

fn stem(file: &SourceFile) -> String {
    file.path()
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| file.file_name())
}

fn record_of(result: &RepairResult) -> FileRecord {
    FileRecord {
        file_id: result.file.clone(),
        status: result.status,
        iterations: result.iterations_used,
        wall_time_seconds: result.wall_time_seconds,
        winning_key: result.winning_candidate.as_ref().map(|c| c.canonical_key().to_string()),
        lenient_fixed: result.lenient_fixed,
    }
}

/// Repair every file once per run. Run `k` uses seed `base_seed + k`; files are spread over
/// `jobs` worker threads and reported in input order.
pub fn run_corpus(repairer: &Repairer, files: &[SourceFile], cfg: &BenchConfig) -> Result<BenchResult, BenchError> {
    if cfg.runs == 0 {
        return Err(BenchError::ZeroRuns);
    }
    let mut runs = Vec::with_capacity(cfg.runs as usize);
    for run in 0..cfg.runs {
        let seed = cfg.base_seed.wrapping_add(run as u64);
        let run_dir = cfg.out_dir.as_ref().map(|d| d.join(format!("run-{run}")));
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<RepairResult>>> = Mutex::new(vec![None; files.len()]);
        let workers = cfg.jobs.clamp(1, files.len().max(1));
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= files.len() {
                        break;
                    }
                    let mut loop_cfg = cfg.loop_cfg.clone();
                    loop_cfg.generation.seed = Some(seed);
                    loop_cfg.run_id = format!("r{run}-f{i}-{}", loop_cfg.run_id);
                    loop_cfg.trace_dir = run_dir.clone();
                    let result = repairer.repair(&files[i], &loop_cfg);
                    slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(result);
                });
            }
        });
        let results: Vec<RepairResult> = slots
            .into_inner()
            .unwrap_or_else(|e| e.into_inner())
            .into_iter()
            .map(|r| r.expect("every file is repaired"))
            .collect();
        if let Some(dir) = &run_dir {
            for (file, result) in files.iter().zip(&results) {
                if let Some(c) = &result.winning_candidate {
                    if let Ok(text) = emit(&BuildRecipe::new(c.clone(), &cfg.loop_cfg.run_id)) {
                        let path = dir.join(format!("{}.Dockerfile", stem(file)));
                        std::fs::write(&path, text).map_err(|source| BenchError::Io { path, source })?;
                    }
                }
            }
        }
        let records = results.iter().map(record_of).collect();
        runs.push(RunReport::from_records(&cfg.corpus_id, run, Some(seed), records));
    }
    let cumulative = CumulativeReport::from_runs(&runs);
    let result = BenchResult { runs, cumulative };
    if let Some(dir) = &cfg.out_dir {
        write_reports(dir, &result)?;
    }
    Ok(result)
}

pub fn summary_table(result: &BenchResult) -> String {
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into());
    let mut out = String::from("run  fixed  unfixed  aborted  lenient  mean_s  iqr_s  cumulative\n");
    for (r, cum) in result.runs.iter().zip(&result.cumulative.unique_fixed_by_prefix) {
        out.push_str(&format!(
            "{:<4} {:>5}  {:>7}  {:>7}  {:>7}  {:>6}  {:>5}  {:>10}\n",
            r.run_index,
            r.totals.fixed,
            r.totals.unfixed,
            r.totals.aborted,
            r.totals.lenient_fixed,
            fmt(r.timing.mean),
            fmt(r.timing.iqr),
            cum
        ));
    }
    out
}

pub fn write_reports(dir: &Path, result: &BenchResult) -> Result<(), BenchError> {
    let io = |path: PathBuf| move |source| BenchError::Io { path, source };
    std::fs::create_dir_all(dir).map_err(io(dir.to_path_buf()))?;
    let mut records = String::new();
    let mut reports = String::new();
    for r in &result.runs {
        for f in &r.per_file {
            let mut v = serde_json::to_value(f).expect("record serializes");
            v["run_index"] = r.run_index.into();
            records.push_str(&v.to_string());
            records.push('\n');
        }
        reports.push_str(&serde_json::to_string(r).expect("report serializes"));
        reports.push('\n');
    }
    let files = [
        ("records.jsonl", records),
        ("reports.jsonl", reports),
        (
            "cumulative.json",
            serde_json::to_string_pretty(&result.cumulative).expect("curve serializes"),
        ),
        ("summary.txt", summary_table(result)),
    ];
    for (name, text) in files {
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).map_err(io(path.clone()))?;
        f.write_all(text.as_bytes()).map_err(io(path))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(phase: OutcomePhase, status: OutcomeStatus, code: i32, log: &str) -> BuildOutcome {
        BuildOutcome {
            phase,
            status,
            exit_code: Some(code),
            log: log.into(),
            duration_seconds: 1.0,
            candidate_key: "3.6|".into(),
        }
    }

    #[test]
    fn scoring_modes() {
        let ok = outcome(OutcomePhase::Run, OutcomeStatus::Success, 0, "done");
        assert_eq!(score_outcome(&ok, ScoreMode::Strict), Score::Fixed);
        let attr = outcome(OutcomePhase::Run, OutcomeStatus::Success, 0, "AttributeError: module 'a' has no attribute 'b'");
        assert_eq!(score_outcome(&attr, ScoreMode::Strict), Score::Unfixed);
        assert_eq!(score_outcome(&attr, ScoreMode::Lenient), Score::Unfixed);
        let nz = outcome(OutcomePhase::Run, OutcomeStatus::Failure, 1, "ValueError: bad input");
        assert_eq!(score_outcome(&nz, ScoreMode::Strict), Score::Unfixed);
        assert_eq!(score_outcome(&nz, ScoreMode::Lenient), Score::Fixed);
        let build = outcome(OutcomePhase::Build, OutcomeStatus::Failure, 1, "x");
        assert_eq!(score_outcome(&build, ScoreMode::Lenient), Score::Unfixed);
    }

    #[test]
    fn quantiles_interpolate() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&s, 0.25), Some(1.75));
        assert_eq!(quantile(&s, 0.75), Some(3.25));
        assert_eq!(quantile(&[5.0], 0.75), Some(5.0));
        let t = timing_stats(&[4.0, 1.0, 3.0, 2.0]);
        assert_eq!(t.mean, Some(2.5));
        assert_eq!(t.iqr, Some(1.5));
    }

    #[test]
    fn cumulative_union() {
        let rec = |id: &str, fixed: bool| FileRecord {
            file_id: id.into(),
            status: if fixed { RepairStatus::Fixed } else { RepairStatus::Unfixed },
            iterations: 1,
            wall_time_seconds: 1.0,
            winning_key: None,
            lenient_fixed: false,
        };
        let runs = vec![
            RunReport::from_records("c", 0, None, vec![rec("a", true), rec("b", false)]),
            RunReport::from_records("c", 1, None, vec![rec("a", false), rec("b", true)]),
            RunReport::from_records("c", 2, None, vec![rec("a", true), rec("b", false)]),
        ];
        assert_eq!(CumulativeReport::from_runs(&runs).unique_fixed_by_prefix, [1, 2, 2]);
        assert!(runs.iter().all(RunReport::totals_consistent));
    }
}
