//! Render the build file for a candidate: `cargo run --example emit_dockerfile -- 3.6 keras==2.0.9 tensorflow==2.4.4`

use envrepair::{emit, BuildRecipe, EnvironmentCandidate, InterpreterVersion, ModuleRequirement};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let series = InterpreterVersion::parse(&args.next().unwrap_or_else(|| "3.6".into()))?;
    let mut pins: Vec<String> = args.collect();
    if pins.is_empty() {
        pins = vec!["keras==2.0.9".into(), "tensorflow==2.4.4".into()];
    }
    let pins = pins
        .iter()
        .map(|p| {
            let (name, version) = p.split_once("==").ok_or_else(|| anyhow::anyhow!("expected name==version, got {p}"))?;
            Ok(ModuleRequirement::new(name, name).pinned(version))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let recipe = BuildRecipe::new(EnvironmentCandidate::new(series, pins)?, "example");
    eprintln!("tag {}", recipe.container_tag);
    print!("{}", emit(&recipe)?);
    Ok(())
}
