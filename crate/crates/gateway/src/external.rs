//! HTTP completion backend.
//!
//! Request: `POST <url>` with `{"agent", "language", "prompt", "input"}`.
//! Response: `{"completion": <raw text>}`. The completion is treated as
//! untrusted and goes through the same parsers as the stub output.

use std::time::Duration;

use carebridge_core::agents::{AdapterError, CompletionAdapter, PromptTemplate};
use serde::Deserialize;
use serde_json::json;

#[derive(Debug)]
pub struct ExternalAdapter {
    url: String,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct CompletionResponse {
    completion: String,
}

impl ExternalAdapter {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .new_agent();
        ExternalAdapter {
            url: url.into(),
            agent,
        }
    }
}

impl CompletionAdapter for ExternalAdapter {
    fn complete(&self, template: &PromptTemplate, input: &str) -> Result<String, AdapterError> {
        let body = json!({
            "agent": template.agent_id().as_str(),
            "language": template.language().code(),
            "prompt": template.body(),
            "input": input,
        });
        let mut response = self
            .agent
            .post(&self.url)
            .send_json(&body)
            .map_err(map_err)?;
        let parsed: CompletionResponse = response.body_mut().read_json().map_err(map_err)?;
        Ok(parsed.completion)
    }
}

fn map_err(e: ureq::Error) -> AdapterError {
    match e {
        ureq::Error::Timeout(_) => AdapterError::Timeout,
        ureq::Error::StatusCode(code) => AdapterError::Unavailable(format!("status {code}")),
        other => AdapterError::Unavailable(other.to_string()),
    }
}
