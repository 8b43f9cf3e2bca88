//! Container build files for candidates.

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::candidate::EnvironmentCandidate;

pub const DEFAULT_SNIPPET_NAME: &str = "snippet.py";
pub const DEFAULT_PIP_TIMEOUT: u32 = 100;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmitError {
    #[error("{0} has no pinned version")]
    Unpinned(String),
    #[error("refusing to interpolate {field} {value:?}")]
    UnsafeToken { field: &'static str, value: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildRecipe {
    pub candidate: EnvironmentCandidate,
    pub snippet_filename: String,
    pub pip_timeout_seconds: u32,
    pub container_tag: String,
}

impl BuildRecipe {
    /// Recipe with default snippet name and timeout; the tag is derived from `run_id` and the
    /// candidate key, so concurrent builds of distinct candidates never share a tag.
    pub fn new(candidate: EnvironmentCandidate, run_id: &str) -> Self {
        let container_tag = container_tag(run_id, candidate.canonical_key());
        BuildRecipe {
            candidate,
            snippet_filename: DEFAULT_SNIPPET_NAME.to_string(),
            pip_timeout_seconds: DEFAULT_PIP_TIMEOUT,
            container_tag,
        }
    }

    pub fn with_snippet_filename(mut self, name: impl Into<String>) -> Self {
        self.snippet_filename = name.into();
        self
    }
}

/// `envrepair-<run>-<16 hex of sha256(key)>`, restricted to characters valid in image names.
pub fn container_tag(run_id: &str, canonical_key: &str) -> String {
    let run: String = run_id
        .chars()
        .map(|c| c.to_ascii_lowercase())
        .filter(|c| c.is_ascii_alphanumeric() || *c == '-' || *c == '_' || *c == '.')
        .take(40)
        .collect();
    let digest = hex::encode(Sha256::digest(canonical_key.as_bytes()));
    format!("envrepair-{run}-{}", &digest[..16])
}

fn check_token(field: &'static str, value: &str) -> Result<(), EmitError> {
    let bad = value.is_empty()
        || value
            .chars()
            .any(|c| matches!(c, '"' | '\'' | '[' | ']' | '\\' | '\n' | '\r') || c.is_whitespace() || c.is_control());
    if bad {
        Err(EmitError::UnsafeToken {
            field,
            value: value.to_string(),
        })
    } else {
        Ok(())
    }
}

pub fn emit(recipe: &BuildRecipe) -> Result<String, EmitError> {
    let c = &recipe.candidate;
    check_token("snippet filename", &recipe.snippet_filename)?;
    if recipe.snippet_filename.contains('/') {
        return Err(EmitError::UnsafeToken {
            field: "snippet filename",
            value: recipe.snippet_filename.clone(),
        });
    }
    let mut out = String::new();
    out.push_str(&format!("FROM python:{}\n", c.interpreter().series()));
    out.push_str("WORKDIR /app\n");
    out.push_str("RUN [\"pip\",\"install\",\"--upgrade\",\"pip\"]\n");
    for pin in c.pins() {
        let version = pin
            .version
            .as_deref()
            .ok_or_else(|| EmitError::Unpinned(pin.install_name.clone()))?;
        check_token("module name", &pin.install_name)?;
        check_token("version", version)?;
        out.push_str(&format!(
            "RUN [\"pip\",\"install\",\"--trusted-host\",\"pypi.python.org\",\"--default-timeout={}\",\"{}=={}\"]\n",
            recipe.pip_timeout_seconds, pin.install_name, version
        ));
    }
    out.push_str(&format!("COPY {} /app\n", recipe.snippet_filename));
    out.push_str(&format!("CMD [\"python\", \"/app/{}\"]\n", recipe.snippet_filename));
    Ok(out)
}
