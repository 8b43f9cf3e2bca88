//! One PASS/FAIL line per acceptance criterion. Tolerances and runtime budgets are pinned below.

mod common;

use std::collections::BTreeSet;
use std::net::{TcpStream, ToSocketAddrs};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{DateTime, NaiveDate, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use envrepair::bench::{run_corpus, BenchConfig};
use envrepair::candidate::expand_interpreters;
use envrepair::dockerfile::{emit, BuildRecipe};
use envrepair::interpreter::InterpreterVersion;
use envrepair::llm::{Gateway, GatewayError, GenerationConfig, HttpBackend, SimulatedModel, DEFAULT_BACKEND_URL};
use envrepair::registry::{ReleaseRecord, VersionCatalog};
use envrepair::repair::{LoopConfig, RepairStatus};
use envrepair::source::extract_imports;
use envrepair::triage::classify;
use envrepair::validator::{ContainerValidator, ValidatorBackend};
use envrepair::{EnvironmentCandidate, ModuleRequirement, NameMapping, Repairer, Retriever, SourceFile};

const CONVERGENCE_SOLVABLE: usize = 100;
const CONVERGENCE_MIN_FIXED: usize = 95;
const CONVERGENCE_UNSAT: usize = 20;
const LOOP_BUDGET: u32 = 10;
const EXPANSION_CASES: usize = 200;
const FILTER_CATALOGS: usize = 500;
const RAG_REPLIES: usize = 1000;
const TRIAGE_MIN_LOGS: usize = 40;
const TRIAGE_MIN_PER_CLASS: usize = 5;
const BENCH_RUNS: u32 = 3;

fn py(s: &str) -> InterpreterVersion {
    InterpreterVersion::parse(s).unwrap()
}

// 1
fn golden_dockerfile() -> Result<String, String> {
    let pins = vec![
        ModuleRequirement::new("keras", "keras").pinned("2.0.9"),
        ModuleRequirement::new("tensorflow", "tensorflow").pinned("2.4.4"),
    ];
    let text = emit(&BuildRecipe::new(EnvironmentCandidate::new(py("3.6"), pins).unwrap(), "accept")).unwrap();
    let golden = std::fs::read(common::fixtures().join("golden/listing.Dockerfile")).unwrap();
    if text.as_bytes() == golden.as_slice() {
        Ok(format!("{} bytes identical", golden.len()))
    } else {
        Err(format!("emitted:\n{text}"))
    }
}

// 2: every supported series within `range` steps in the 3.x list, plus 2.7; a 2.7 prediction
// anchors the band at the oldest 3.x and shrinks it by one step.
fn brute_expansion(predicted: InterpreterVersion, range: u32) -> Vec<InterpreterVersion> {
    let py3: Vec<InterpreterVersion> = InterpreterVersion::supported().iter().copied().filter(|v| v.major() == 3).collect();
    let mut out: Vec<InterpreterVersion> = InterpreterVersion::supported()
        .iter()
        .copied()
        .filter(|v| {
            if v.major() == 2 {
                return true;
            }
            let idx = py3.iter().position(|x| x == v).unwrap() as i64;
            if predicted.major() == 2 {
                idx < range as i64
            } else {
                let p = py3.iter().position(|x| *x == predicted).unwrap() as i64;
                (idx - p).abs() <= range as i64
            }
        })
        .collect();
    out.sort();
    out
}

fn interpreter_expansion() -> Result<String, String> {
    let got = expand_interpreters(py("3.5"), 2).map_err(|e| e.to_string())?;
    let want: Vec<_> = ["2.7", "3.4", "3.5", "3.6", "3.7"].map(py).to_vec();
    if got != want {
        return Err(format!("3.5/2 gave {got:?}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let all = InterpreterVersion::supported();
    for _ in 0..EXPANSION_CASES {
        let p = all[rng.gen_range(0..all.len())];
        let r = rng.gen_range(0..=3);
        let got = expand_interpreters(p, r).map_err(|e| e.to_string())?;
        let want = brute_expansion(p, r);
        if got != want {
            return Err(format!("{p}/{r}: {got:?} != {want:?}"));
        }
    }
    Ok(format!("example + {EXPANSION_CASES} random cases"))
}

// 3
struct Window {
    series: &'static str,
    start: NaiveDate,
    end: NaiveDate,
    patch: [u32; 3],
}

fn windows() -> Vec<Window> {
    let d = |s: &str| NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap();
    [
        ("2.7", "2010-07-03", "2020-01-01", [2, 7, 18]),
        ("3.4", "2014-03-16", "2019-03-18", [3, 4, 10]),
        ("3.5", "2015-09-13", "2020-09-30", [3, 5, 10]),
        ("3.6", "2016-12-23", "2021-12-23", [3, 6, 15]),
        ("3.7", "2018-06-27", "2023-06-27", [3, 7, 17]),
        ("3.8", "2019-10-14", "2024-10-07", [3, 8, 20]),
        ("3.9", "2020-10-05", "2025-10-31", [3, 9, 25]),
        ("3.10", "2021-10-04", "2026-10-31", [3, 10, 19]),
        ("3.11", "2022-10-24", "2027-10-31", [3, 11, 14]),
        ("3.12", "2023-10-02", "2028-10-31", [3, 12, 12]),
    ]
    .into_iter()
    .map(|(series, a, b, patch)| Window { series, start: d(a), end: d(b), patch })
    .collect()
}

/// `requires_python` forms the generator emits, paired with a predicate over `[major, minor, patch]`.
type Predicate = fn([u32; 3]) -> bool;

const CONSTRAINTS: [(&str, Predicate); 9] = [
    (">=3.6", |v| v >= [3, 6, 0]),
    (">=3.7", |v| v >= [3, 7, 0]),
    (">=2.7, !=3.0.*, !=3.1.*, !=3.2.*, !=3.3.*", |v| v >= [2, 7, 0] && !(v[0] == 3 && v[1] <= 3)),
    ("<3", |v| v < [3, 0, 0]),
    (">=3.5,<3.8", |v| ([3, 5, 0]..[3, 8, 0]).contains(&v)),
    ("~=3.8", |v| v >= [3, 8, 0] && v[0] == 3),
    (">3.9", |v| v > [3, 9, 0]),
    ("==3.6.*", |v| v[0] == 3 && v[1] == 6),
    ("python 3 please", |_| true),
];

struct Gen {
    v: [u32; 3],
    day: Option<NaiveDate>,
    constraint: Option<usize>,
    yanked: bool,
}

fn noon(d: NaiveDate) -> DateTime<Utc> {
    d.and_hms_opt(12, 0, 0).unwrap().and_utc()
}

fn brute_filter(gens: &[Gen], w: &Window) -> BTreeSet<String> {
    let text = |g: &Gen| format!("{}.{}.{}", g.v[0], g.v[1], g.v[2]);
    let keep: BTreeSet<String> = gens
        .iter()
        .filter(|g| !g.yanked)
        .filter(|g| g.day.is_none_or(|d| w.start <= d && d <= w.end))
        .filter(|g| g.constraint.is_none_or(|c| (CONSTRAINTS[c].1)(w.patch)))
        .map(text)
        .collect();
    if !keep.is_empty() {
        return keep;
    }
    // latest: by day when every release has one, else by version; non-yanked preferred
    let mut order: Vec<&Gen> = gens.iter().collect();
    if gens.iter().all(|g| g.day.is_some()) {
        order.sort_by_key(|g| (g.day, g.v));
    } else {
        order.sort_by_key(|g| g.v);
    }
    let latest = order.iter().rev().find(|g| !g.yanked).or(order.last()).unwrap();
    BTreeSet::from([text(latest)])
}

fn metadata_filtering() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ws = windows();
    let base = NaiveDate::from_ymd_opt(2008, 1, 1).unwrap();
    let mut fallbacks = 0;
    for case in 0..FILTER_CATALOGS {
        let n = rng.gen_range(1..12);
        let dated = rng.gen_bool(0.8);
        let mut seen = BTreeSet::new();
        let mut gens = Vec::new();
        while gens.len() < n {
            let v = [rng.gen_range(0..4), rng.gen_range(0..15), rng.gen_range(0..5)];
            if !seen.insert(v) {
                continue;
            }
            let day = (dated || rng.gen_bool(0.5)).then(|| base + chrono::Days::new(rng.gen_range(0..8000)));
            gens.push(Gen {
                v,
                day,
                constraint: rng.gen_bool(0.5).then(|| rng.gen_range(0..CONSTRAINTS.len())),
                yanked: rng.gen_bool(0.15),
            });
        }
        let releases = gens
            .iter()
            .map(|g| {
                let mut r = ReleaseRecord::new(format!("{}.{}.{}", g.v[0], g.v[1], g.v[2])).yanked(g.yanked);
                if let Some(d) = g.day {
                    r = r.released(noon(d));
                }
                if let Some(c) = g.constraint {
                    r = r.requires(CONSTRAINTS[c].0);
                }
                r
            })
            .collect();
        let catalog = VersionCatalog::new("pkg", releases, Utc::now());
        let w = &ws[rng.gen_range(0..ws.len())];
        let got: BTreeSet<String> = catalog
            .filter_for_interpreter(&py(w.series).window())
            .releases
            .iter()
            .map(|r| r.version.clone())
            .collect();
        let want = brute_filter(&gens, w);
        if got != want {
            return Err(format!("catalog {case} on {}: {got:?} != {want:?}", w.series));
        }
        let survivors = gens
            .iter()
            .filter(|g| !g.yanked)
            .filter(|g| g.day.is_none_or(|d| w.start <= d && d <= w.end))
            .filter(|g| g.constraint.is_none_or(|c| (CONSTRAINTS[c].1)(w.patch)))
            .count();
        if survivors == 0 {
            fallbacks += 1;
        }
    }
    if fallbacks == 0 {
        return Err("no catalog exercised the fallback".into());
    }
    Ok(format!("{FILTER_CATALOGS} catalogs exact, {fallbacks} via fallback"))
}

// 4
fn triage_corpus() -> Result<String, String> {
    let corpus = common::triage_corpus();
    if corpus.len() < TRIAGE_MIN_LOGS {
        return Err(format!("only {} logs", corpus.len()));
    }
    for class in envrepair::ErrorClass::ALL {
        let n = corpus.iter().filter(|i| i.class == class).count();
        if n < TRIAGE_MIN_PER_CLASS {
            return Err(format!("{class}: {n} logs"));
        }
    }
    let mut wrong = Vec::new();
    for item in &corpus {
        let r = classify(&item.outcome);
        let fields_ok = item.fields.iter().all(|(k, v)| {
            let got = r.payload.get(k).map(String::as_str).unwrap_or("");
            if k == "conflicting_modules" {
                v.split(',').all(|m| got.split(',').any(|g| g.trim() == m))
            } else {
                got == v
            }
        });
        if r.primary_class != item.class || !fields_ok || !r.is_complete() || r.used_llm_extraction {
            wrong.push(item.name.clone());
        }
    }
    if wrong.is_empty() {
        Ok(format!("{}/{} logs, 100%", corpus.len(), corpus.len()))
    } else {
        Err(format!("misclassified: {wrong:?}"))
    }
}

// 5
fn convergence() -> Result<String, String> {
    let cfg = LoopConfig::default();
    if cfg.loop_budget != LOOP_BUDGET {
        return Err(format!("default budget is {}", cfg.loop_budget));
    }
    let mut fixed = 0;
    for id in 0..CONVERGENCE_SOLVABLE {
        let g = common::worlds::solvable(id, 1000 + id as u64, LOOP_BUDGET as usize);
        let (repairer, validator) = common::worlds::repairer(&g.world);
        let r = repairer.repair(&g.snippet, &cfg);
        if r.status == RepairStatus::Fixed {
            let w = r.winning_candidate.unwrap();
            let replay = validator.validate(&BuildRecipe::new(w, "replay"), &g.snippet).unwrap();
            if !replay.is_success() {
                return Err(format!("world {id}: winner does not replay"));
            }
            fixed += 1;
        }
    }
    if fixed < CONVERGENCE_MIN_FIXED {
        return Err(format!("{fixed}/{CONVERGENCE_SOLVABLE} fixed"));
    }
    for id in 0..CONVERGENCE_UNSAT {
        let g = common::worlds::unsatisfiable(id, 5000 + id as u64, LOOP_BUDGET as usize);
        let (repairer, validator) = common::worlds::repairer(&g.world);
        let r = repairer.repair(&g.snippet, &cfg);
        let keys = validator.validated_keys();
        let distinct = keys.iter().collect::<BTreeSet<_>>().len();
        if r.status != RepairStatus::Unfixed || r.iterations_used != LOOP_BUDGET || distinct != keys.len() {
            return Err(format!("unsat world {id}: {} ({distinct}/{} distinct keys)", r.summary(), keys.len()));
        }
    }
    Ok(format!("{fixed}/{CONVERGENCE_SOLVABLE} fixed; {CONVERGENCE_UNSAT} unsat worlds used all {LOOP_BUDGET} cycles, no repeats"))
}

// 6
fn rag_constraint() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let module = ModuleRequirement::new("numpy", "numpy");
    let (mut accepted, mut violations) = (0, 0);
    for i in 0..RAG_REPLIES {
        let n = rng.gen_range(1..12);
        let catalog: Vec<String> = (0..n).map(|k| format!("1.{k}.{}", rng.gen_range(0..3))).collect();
        let previous: Vec<String> = catalog.iter().filter(|_| rng.gen_bool(0.4)).cloned().collect();
        let gw = Gateway::new(Arc::new(common::adversary::Adversary::new(i as u64)));
        match gw.pick_version(&module, Some(&catalog.join(",")), &previous, py("3.6"), &GenerationConfig::default()) {
            Ok(v) => {
                accepted += 1;
                if !catalog.contains(&v) || previous.contains(&v) {
                    violations += 1;
                }
            }
            Err(GatewayError::VersionsExhausted { .. }) | Err(GatewayError::MalformedReply { .. }) => {}
            Err(e) => return Err(e.to_string()),
        }
    }
    if violations == 0 {
        Ok(format!("{accepted}/{RAG_REPLIES} accepted, 0 violations"))
    } else {
        Err(format!("{violations} violations"))
    }
}

// 7
fn name_mapping() -> Result<String, String> {
    let m = NameMapping::bundled();
    let cases = [("sklearn", "scikit-learn"), ("bs4", "beautifulsoup4"), ("requests", "requests"), ("zorblax", "zorblax")];
    for (import, install) in cases {
        if m.lookup(import) != install {
            return Err(format!("{import} -> {}", m.lookup(import)));
        }
    }
    let src = SourceFile::from_text("m.py", "from sklearn.svm import SVC\nimport bs4\n");
    let names: Vec<String> = extract_imports(&src).iter().map(|i| m.lookup(&i.top_level_name).to_string()).collect();
    if names != ["scikit-learn", "beautifulsoup4"] {
        return Err(format!("scanned file maps to {names:?}"));
    }
    Ok("sklearn, bs4 mapped; unmapped names pass through".into())
}

// 8
fn cumulative_aggregation() -> Result<String, String> {
    let (world, files) = common::corpus20();
    let repairer = common::worlds::repairer_with(&world, SimulatedModel::stochastic(0.5));
    let cfg = BenchConfig {
        corpus_id: "corpus20".into(),
        runs: BENCH_RUNS,
        base_seed: 2024,
        ..BenchConfig::default()
    };
    let r = run_corpus(&repairer, &files, &cfg).map_err(|e| e.to_string())?;
    let curve = &r.cumulative.unique_fixed_by_prefix;
    let per_run: Vec<usize> = r.runs.iter().map(|x| x.totals.fixed).collect();
    if files.len() != 20 {
        return Err(format!("{} files", files.len()));
    }
    if per_run.iter().any(|f| *f > common::CORPUS_SOLVABLE) {
        return Err(format!("per-run fixes {per_run:?}"));
    }
    if curve.len() != BENCH_RUNS as usize || curve.windows(2).any(|w| w[0] > w[1]) || curve.iter().any(|c| *c > common::CORPUS_SOLVABLE) {
        return Err(format!("curve {curve:?}"));
    }
    Ok(format!("per run {per_run:?}, curve {curve:?} <= {}", common::CORPUS_SOLVABLE))
}

// 9
fn live_smoke() -> Result<String, String> {
    let url = std::env::var("ENVREPAIR_BACKEND_URL").unwrap_or_else(|_| DEFAULT_BACKEND_URL.to_string());
    let engine = ContainerValidator::new();
    if let Err(e) = engine.probe() {
        return Ok(format!("SKIP container engine unavailable ({e})"));
    }
    let hostport = url.trim_start_matches("http://").trim_start_matches("https://").trim_end_matches('/').to_string();
    let reachable = hostport
        .to_socket_addrs()
        .ok()
        .and_then(|mut a| a.next())
        .is_some_and(|a| TcpStream::connect_timeout(&a, Duration::from_secs(2)).is_ok());
    if !reachable {
        return Ok(format!("SKIP model backend not reachable at {url}"));
    }
    let backend = HttpBackend::new(&url).map_err(|e| e.to_string())?;
    let registry = envrepair::registry::HttpRegistry::new(envrepair::registry::DEFAULT_REGISTRY_URL).map_err(|e| e.to_string())?;
    let repairer = Repairer::new(
        Arc::new(Gateway::new(Arc::new(backend))),
        Some(Arc::new(Retriever::new(Arc::new(registry)))),
        Arc::new(engine),
    );
    let src = SourceFile::from_text("smoke.py", "import requests\n\nprint(requests.__version__)\n");
    let r = repairer.repair(&src, &LoopConfig { loop_budget: 3, ..LoopConfig::default() });
    match r.status {
        RepairStatus::Fixed => Ok(r.summary()),
        _ => Err(r.summary()),
    }
}

type Criterion = (u8, &'static str, Duration, fn() -> Result<String, String>);

#[test]
fn acceptance() {
    let criteria: [Criterion; 9] = [
        (1, "golden build file", Duration::from_secs(1), golden_dockerfile),
        (2, "interpreter expansion", Duration::from_secs(1), interpreter_expansion),
        (3, "metadata filtering oracle", Duration::from_secs(5), metadata_filtering),
        (4, "triage corpus", Duration::from_secs(5), triage_corpus),
        (5, "end-to-end convergence", Duration::from_secs(60), convergence),
        (6, "RAG constraint", Duration::from_secs(10), rag_constraint),
        (7, "name mapping", Duration::from_secs(1), name_mapping),
        (8, "cumulative aggregation", Duration::from_secs(30), cumulative_aggregation),
        (9, "live smoke", Duration::from_secs(600), live_smoke),
    ];
    let mut failed = Vec::new();
    for (id, name, budget, run) in criteria {
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let elapsed = t.elapsed();
        let result = match result {
            Ok(detail) if elapsed > budget => Err(format!("{detail}; took {elapsed:.2?}, budget {budget:?}")),
            other => other,
        };
        match result {
            Ok(detail) => println!("PASS {id} {name}: {detail} [{elapsed:.2?}]"),
            Err(detail) => {
                println!("FAIL {id} {name}: {detail} [{elapsed:.2?}]");
                failed.push(id);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
