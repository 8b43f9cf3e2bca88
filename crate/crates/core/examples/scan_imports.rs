//! Static import scan: `cargo run --example scan_imports -- path/to/snippet.py [series]`

use envrepair::source::{extract_imports, filter_stdlib, to_requirements};
use envrepair::{InterpreterVersion, NameMapping, SourceFile};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let file = match args.next() {
        Some(p) => SourceFile::read(p)?,
        None => SourceFile::from_text(
            "demo.py",
            "import os, json\nfrom sklearn.svm import SVC\nimport bs4\ntry:\n    import cPickle as pickle\nexcept ImportError:\n    import pickle\n",
        ),
    };
    let series = InterpreterVersion::parse(&args.next().unwrap_or_else(|| "3.6".into()))?;

    let mentions = extract_imports(&file);
    for m in &mentions {
        println!("{:>4}  {:<16} {}", m.line_number, m.top_level_name, m.raw_statement);
    }
    let third_party = filter_stdlib(&mentions, series)?;
    println!("\nthird-party on {series}:");
    for r in to_requirements(&third_party, &NameMapping::bundled()) {
        println!("  import {:<14} -> pip install {}", r.import_name, r.install_name);
    }
    Ok(())
}
