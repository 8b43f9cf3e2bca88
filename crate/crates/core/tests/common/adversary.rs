//! A backend that answers version prompts with whatever is most likely to slip past a checker.

use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use envrepair::llm::{BackendError, GenerationRequest, TextBackend};

pub struct Adversary {
    rng: Mutex<ChaCha8Rng>,
}

impl Adversary {
    pub fn new(seed: u64) -> Self {
        Adversary {
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
        }
    }
}

impl TextBackend for Adversary {
    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        let mut rng = self.rng.lock().unwrap();
        let b = &request.prompt.bindings;
        let list = |k: &str| -> Vec<String> {
            b.get(k)
                .map(|s| s.split(',').filter(|x| !x.is_empty()).map(String::from).collect())
                .unwrap_or_default()
        };
        let catalog = list("module_versions");
        let previous = list("previous_versions");
        let module = b.get("module_name").cloned().unwrap_or_default();
        let pick = |rng: &mut ChaCha8Rng, xs: &[String]| xs.get(rng.gen_range(0..xs.len().max(1))).cloned();
        let version = match rng.gen_range(0..10) {
            0 => pick(&mut rng, &previous).unwrap_or_else(|| "0.0.1".into()),
            1 => format!("{}.{}.{}", rng.gen_range(0..30), rng.gen_range(0..30), rng.gen_range(0..30)),
            2 => pick(&mut rng, &catalog).map(|v| format!("{v}.post1")).unwrap_or_default(),
            3 => pick(&mut rng, &catalog).map(|v| format!("{module}=={v}")).unwrap_or_default(),
            4 => pick(&mut rng, &previous).map(|v| format!("v{v}")).unwrap_or_else(|| "latest".into()),
            5 => return Ok("I would suggest the newest release.".into()),
            6 => return Ok(r#"{"module": "x"}"#.into()),
            7 => pick(&mut rng, &catalog).map(|v| format!(" {v} ")).unwrap_or_default(),
            _ => pick(&mut rng, &catalog).unwrap_or_default(),
        };
        Ok(serde_json::json!({"module": module, "version": version}).to_string())
    }
}
