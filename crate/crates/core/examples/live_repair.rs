//! Repair against a real container engine, package index and model server.
//!
//! Needs `docker` and a model server (default http://localhost:11434, or `ENVREPAIR_BACKEND_URL`).
//! `cargo run --example live_repair -- snippet.py`

use std::sync::Arc;

use envrepair::llm::{HttpBackend, DEFAULT_BACKEND_URL};
use envrepair::registry::{HttpRegistry, DEFAULT_REGISTRY_URL};
use envrepair::validator::ContainerValidator;
use envrepair::{Gateway, LoopConfig, Repairer, Retriever, SourceFile};

fn main() -> anyhow::Result<()> {
    let path = std::env::args().nth(1).ok_or_else(|| anyhow::anyhow!("usage: live_repair <snippet.py>"))?;
    let url = std::env::var("ENVREPAIR_BACKEND_URL").unwrap_or_else(|_| DEFAULT_BACKEND_URL.into());
    let engine = ContainerValidator::new();
    engine.probe()?;
    let repairer = Repairer::new(
        Arc::new(Gateway::new(Arc::new(HttpBackend::new(url)?))),
        Some(Arc::new(Retriever::new(Arc::new(HttpRegistry::new(DEFAULT_REGISTRY_URL)?)))),
        Arc::new(engine),
    );
    let cfg = LoopConfig {
        trace_dir: Some("envrepair-out".into()),
        ..LoopConfig::default()
    };
    let result = repairer.repair(&SourceFile::read(path)?, &cfg);
    println!("{}", result.summary());
    Ok(())
}
