#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use envrepair::triage::ErrorClass;
use envrepair::validator::{BuildOutcome, OutcomePhase, OutcomeStatus};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub struct LabeledLog {
    pub name: String,
    pub class: ErrorClass,
    pub fields: BTreeMap<String, String>,
    pub outcome: BuildOutcome,
}

/// Reads `triage/*.log`; each file opens with `# expect: <Class> key=value ...`, which is
/// stripped before the log is handed to the classifier.
pub fn triage_corpus() -> Vec<LabeledLog> {
    let mut paths: Vec<_> = std::fs::read_dir(fixtures().join("triage"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "log"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let text = std::fs::read_to_string(&p).unwrap();
            let (header, log) = text.split_once('\n').unwrap();
            let mut words = header.strip_prefix("# expect:").expect("expect header").split_whitespace();
            let class: ErrorClass = words.next().unwrap().parse().unwrap();
            let fields = words
                .map(|w| {
                    let (k, v) = w.split_once('=').unwrap();
                    (k.to_string(), v.to_string())
                })
                .collect();
            let trailer = regex::Regex::new(r"\[envrepair\] container exited with code (\d+)").unwrap();
            let (phase, exit_code) = match trailer.captures(log) {
                Some(c) => (OutcomePhase::Run, c[1].parse().ok()),
                None => (OutcomePhase::Build, Some(1)),
            };
            LabeledLog {
                name: p.file_name().unwrap().to_string_lossy().into_owned(),
                class,
                fields,
                outcome: BuildOutcome {
                    phase,
                    status: OutcomeStatus::Failure,
                    exit_code,
                    log: log.to_string(),
                    duration_seconds: 1.0,
                    candidate_key: "3.6|x==1".into(),
                },
            }
        })
        .collect()
}

pub mod adversary;
pub mod worlds;

pub const CORPUS_SOLVABLE: usize = 12;

/// The 20-file benchmark corpus and its world.
pub fn corpus20() -> (envrepair::World, Vec<envrepair::SourceFile>) {
    let dir = fixtures().join("corpus20");
    let world = envrepair::World::load(dir.join("world.json")).unwrap();
    (world, envrepair::bench::corpus_files(&dir).unwrap())
}
