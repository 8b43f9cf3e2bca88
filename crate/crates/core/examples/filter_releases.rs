//! Which releases of a package an interpreter may use.
//!
//! `cargo run --example filter_releases -- numpy 3.6` asks the public registry;
//! without arguments a small in-memory catalog is used.

use std::sync::Arc;

use chrono::{TimeZone, Utc};
use envrepair::registry::{HttpRegistry, MemoryRegistry, ReleaseRecord, RegistrySource, DEFAULT_REGISTRY_URL};
use envrepair::{InterpreterVersion, Retriever};

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (name, source): (String, Arc<dyn RegistrySource>) = match args.first() {
        Some(name) => (name.clone(), Arc::new(HttpRegistry::new(DEFAULT_REGISTRY_URL)?)),
        None => {
            let day = |y, m, d| Utc.with_ymd_and_hms(y, m, d, 12, 0, 0).unwrap();
            let mut reg = MemoryRegistry::new();
            reg.insert_releases(
                "numpy",
                &[
                    ReleaseRecord::new("1.11.3").released(day(2016, 12, 18)),
                    ReleaseRecord::new("1.16.6").released(day(2019, 12, 29)).requires(">=2.7,!=3.0.*,!=3.1.*,!=3.2.*,!=3.3.*"),
                    ReleaseRecord::new("1.19.5").released(day(2021, 1, 5)).requires(">=3.6"),
                    ReleaseRecord::new("1.20.0").released(day(2021, 1, 30)).requires(">=3.7").yanked(true),
                    ReleaseRecord::new("1.21.6").released(day(2022, 4, 12)).requires(">=3.7,<3.11"),
                ],
            );
            ("numpy".into(), Arc::new(reg))
        }
    };
    let retriever = Retriever::new(source);
    let catalog = retriever.fetch_catalog(&name)?;
    let series: Vec<InterpreterVersion> = match args.get(1) {
        Some(s) => vec![InterpreterVersion::parse(s)?],
        None => InterpreterVersion::supported().to_vec(),
    };
    println!("{name}: {} releases", catalog.releases.len());
    for s in series {
        let kept = catalog.filter_for_interpreter(&s.window());
        println!("  {s:<5} {}", kept.to_prompt_text()?);
    }
    Ok(())
}
