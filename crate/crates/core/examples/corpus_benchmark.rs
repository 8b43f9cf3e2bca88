//! Repeated stochastic runs over the 20-file corpus, with the cumulative fix curve.

use std::sync::Arc;

use envrepair::bench::{corpus_files, run_corpus, summary_table, BenchConfig};
use envrepair::llm::SimulatedModel;
use envrepair::{Gateway, Repairer, Retriever, SimulatedValidator, World};

fn main() -> anyhow::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .unwrap_or_else(|| format!("{}/tests/fixtures/corpus20", env!("CARGO_MANIFEST_DIR")));
    let dir = std::path::Path::new(&dir);
    let world = World::load(dir.join("world.json"))?;
    let repairer = Repairer::new(
        Arc::new(Gateway::new(Arc::new(SimulatedModel::stochastic(0.5)))),
        Some(Arc::new(Retriever::new(Arc::new(world.registry())))),
        Arc::new(SimulatedValidator::new(world)),
    );
    let cfg = BenchConfig {
        corpus_id: "corpus20".into(),
        runs: 5,
        base_seed: 1,
        ..BenchConfig::default()
    };
    let result = run_corpus(&repairer, &corpus_files(dir)?, &cfg)?;
    print!("{}", summary_table(&result));
    Ok(())
}
