use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendError, GenerationRequest, TextBackend};

pub const DEFAULT_BACKEND_URL: &str = "http://localhost:11434";

/// Text-generation server speaking the `/api/generate` protocol.
///
/// Request body:
/// `{"model": "...", "prompt": "...", "stream": false, "options": {"temperature": 0.7, "seed": 1}}`
/// Response body: `{"response": "..."}` (other fields ignored).
#[derive(Debug, Clone)]
pub struct HttpBackend {
    base_url: String,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct GenerateBody<'a> {
    model: &'a str,
    prompt: &'a str,
    stream: bool,
    options: GenerateOptions,
}

#[derive(Serialize)]
struct GenerateOptions {
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct GenerateResponse {
    response: String,
}

impl HttpBackend {
    pub fn new(base_url: impl Into<String>) -> Result<Self, BackendError> {
        Self::with_timeout(base_url, Duration::from_secs(300))
    }

    pub fn with_timeout(base_url: impl Into<String>, timeout: Duration) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Unreachable(e.to_string()))?;
        Ok(HttpBackend {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            client,
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }
}

impl TextBackend for HttpBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        let body = GenerateBody {
            model: &request.model_name,
            prompt: request.rendered_prompt(),
            stream: false,
            options: GenerateOptions {
                temperature: request.temperature,
                seed: request.seed,
            },
        };
        let resp = self
            .client
            .post(format!("{}/api/generate", self.base_url))
            .json(&body)
            .send()
            .map_err(|e| BackendError::Unreachable(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(BackendError::Failed(format!("HTTP {status}: {text}")));
        }
        resp.json::<GenerateResponse>()
            .map(|r| r.response)
            .map_err(|e| BackendError::Failed(e.to_string()))
    }
}
