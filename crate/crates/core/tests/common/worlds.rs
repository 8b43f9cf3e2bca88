//! Generated simulated worlds with known ground truth.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use envrepair::llm::{Gateway, SimulatedModel};
use envrepair::registry::Retriever;
use envrepair::repair::Repairer;
use envrepair::source::SourceFile;
use envrepair::validator::{
    ImportSpec, ModuleBehaviour, PackageSpec, ProgramSpec, SimulatedValidator, VersionSpec, World,
};

const NAMES: [&str; 4] = ["zorblax", "fennimore", "quaddle", "brimwick"];
const SERIES: [&str; 3] = ["3.5", "3.6", "3.7"];

pub struct Generated {
    pub world: World,
    pub snippet: SourceFile,
    /// Canonical key that runs, when one exists.
    pub target: Option<String>,
    /// Cycles the one-edit-per-cycle walk needs to reach `target` (1 = first candidate).
    pub steps: usize,
}

fn version_text(i: usize) -> String {
    format!("{}.{}.0", 1 + i / 4, i % 4)
}

/// Position of `good` in the order an equal-spacing picker visits `n` versions: each pick takes
/// `floor(remaining * r(k))` of the still-untried list, r being the base-2 radical inverse of k.
pub fn pick_rank(n: usize, good: usize) -> usize {
    let mut left: Vec<usize> = (0..n).collect();
    for k in 1.. {
        let r = (k as u32).reverse_bits() as f64 / 4294967296.0;
        let idx = ((left.len() as f64 * r) as usize).min(left.len() - 1);
        if left[idx] == good {
            return k - 1;
        }
        left.remove(idx);
    }
    unreachable!()
}

fn snippet(id: usize, names: &[&str]) -> SourceFile {
    let mut text: String = names.iter().map(|n| format!("import {n}\n")).collect();
    text.push_str(&format!("\nprint({}.__name__)\n", names[0]));
    SourceFile::from_text(format!("world_{id}.py"), text)
}

fn world(names: &[&str], sizes: &[usize], goods: Option<&[usize]>, target: Option<String>, rng: &mut ChaCha8Rng) -> World {
    let mut packages = BTreeMap::new();
    let mut modules = BTreeMap::new();
    for (i, name) in names.iter().enumerate() {
        let versions = (0..sizes[i]).map(|v| (version_text(v), VersionSpec::default())).collect();
        packages.insert(name.to_string(), PackageSpec { versions });
        let good = goods.map(|g| vec![version_text(g[i])]).unwrap_or_default();
        let error = if rng.gen_bool(0.5) { "AttributeError" } else { "ImportError" };
        modules.insert(
            name.to_string(),
            ModuleBehaviour {
                good,
                error: error.into(),
                detail: None,
            },
        );
    }
    let program = ProgramSpec {
        imports: names.iter().map(|n| ImportSpec::Same(n.to_string())).collect(),
        runnable: target.into_iter().collect(),
        modules,
        ..Default::default()
    };
    World {
        packages,
        programs: BTreeMap::from([("*".to_string(), program)]),
        templates: BTreeMap::new(),
    }
}

/// A world whose single runnable key sits within `budget` one-edit cycles of the first candidate.
pub fn solvable(id: usize, seed: u64, budget: usize) -> Generated {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let n = rng.gen_range(1..=3);
        let names = &NAMES[..n];
        let sizes: Vec<usize> = (0..n).map(|_| rng.gen_range(3..=10)).collect();
        let goods: Vec<usize> = sizes.iter().map(|s| rng.gen_range(0..*s)).collect();
        let steps = 1 + sizes.iter().zip(&goods).map(|(s, g)| pick_rank(*s, *g)).sum::<usize>();
        if steps > budget {
            continue;
        }
        let series = SERIES[rng.gen_range(0..SERIES.len())];
        let mut pins: Vec<String> = names.iter().zip(&goods).map(|(n, g)| format!("{n}=={}", version_text(*g))).collect();
        pins.sort();
        let key = format!("{series}|{}", pins.join(";"));
        return Generated {
            world: world(names, &sizes, Some(&goods), Some(key.clone()), &mut rng),
            snippet: snippet(id, names),
            target: Some(key),
            steps,
        };
    }
}

/// A world with no runnable key but enough versions that no branch runs dry within `budget`.
pub fn unsatisfiable(id: usize, seed: u64, budget: usize) -> Generated {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=3);
    let names = &NAMES[..n];
    let sizes: Vec<usize> = (0..n).map(|_| rng.gen_range(budget.max(4)..=budget + 4)).collect();
    Generated {
        world: world(names, &sizes, None, None, &mut rng),
        snippet: snippet(id, names),
        target: None,
        steps: usize::MAX,
    }
}

/// Deterministic stub model, world registry, simulated validator.
pub fn repairer(world: &World) -> (Repairer, Arc<SimulatedValidator>) {
    let validator = Arc::new(SimulatedValidator::new(world.clone()));
    let gateway = Arc::new(Gateway::new(Arc::new(SimulatedModel::deterministic())));
    let retriever = Arc::new(Retriever::new(Arc::new(world.registry())));
    (Repairer::new(gateway, Some(retriever), validator.clone()), validator)
}

pub fn repairer_with(world: &World, model: SimulatedModel) -> Repairer {
    let gateway = Arc::new(Gateway::new(Arc::new(model)));
    let retriever = Arc::new(Retriever::new(Arc::new(world.registry())));
    Repairer::new(gateway, Some(retriever), Arc::new(SimulatedValidator::new(world.clone())))
}
