//! Run the whole repair loop offline against a world document.
//!
//! `cargo run --example simulated_repair -- tests/fixtures/listing5/world.json tests/fixtures/listing5/snippet.py`

use std::sync::Arc;

use envrepair::llm::SimulatedModel;
use envrepair::{emit, BuildRecipe, Gateway, LoopConfig, Repairer, Retriever, SimulatedValidator, SourceFile, World};

fn main() -> anyhow::Result<()> {
    let here = env!("CARGO_MANIFEST_DIR");
    let mut args = std::env::args().skip(1);
    let world_path = args.next().unwrap_or_else(|| format!("{here}/tests/fixtures/listing5/world.json"));
    let snippet_path = args.next().unwrap_or_else(|| format!("{here}/tests/fixtures/listing5/snippet.py"));

    let world = World::load(&world_path)?;
    let validator = Arc::new(SimulatedValidator::new(world.clone()));
    let repairer = Repairer::new(
        Arc::new(Gateway::new(Arc::new(SimulatedModel::deterministic()))),
        Some(Arc::new(Retriever::new(Arc::new(world.registry())))),
        validator.clone(),
    );
    let result = repairer.repair(&SourceFile::read(&snippet_path)?, &LoopConfig::default());

    for cycle in &result.per_iteration_trace {
        println!("cycle {}", cycle.iteration);
        for e in &cycle.entries {
            let class = e.class.map(|c| c.to_string()).unwrap_or_default();
            println!("  {:<45} {:?} {class}", e.candidate_key, e.status);
        }
        for b in &cycle.ended_branches {
            println!("  ended {b}");
        }
    }
    println!("{} ({} builds)", result.summary(), validator.validation_count());
    if let Some(c) = result.winning_candidate {
        print!("{}", emit(&BuildRecipe::new(c, "example"))?);
    }
    Ok(())
}
