//! Print every prompt as the model would receive it, with placeholder values filled in.

use std::collections::BTreeMap;

use envrepair::llm::TemplateId;

fn main() -> anyhow::Result<()> {
    let samples = BTreeMap::from([
        ("raw_file", "import keras\nfrom keras.models import Sequential\n"),
        ("module_name", "keras"),
        ("module_versions", "2.0.9,2.1.6,2.2.4,2.3.1"),
        ("previous_versions", "2.2.4"),
        ("python_version", "3.6"),
        ("error_message", "AttributeError: module 'keras' has no attribute 'Sequential'"),
        ("import_error", "ImportError: cannot import name 'Sequential' from 'keras'"),
    ]);
    let ids = [
        TemplateId::InferFile,
        TemplateId::PickVersionRag,
        TemplateId::PickVersionBare,
        TemplateId::ExtractImportError,
        TemplateId::TriageAttributeError,
    ];
    for id in ids {
        let template = id.template();
        let mut bindings: BTreeMap<String, String> = template
            .placeholders()
            .iter()
            .filter_map(|p| samples.get(p.as_str()).map(|v| (p.clone(), v.to_string())))
            .collect();
        bindings.insert("format_instructions".into(), id.schema().format_instructions());
        println!("===== {id} =====");
        match template.render(&bindings) {
            Ok(text) => println!("{text}\n"),
            Err(e) => println!("(not rendered: {e})\n"),
        }
    }
    Ok(())
}
