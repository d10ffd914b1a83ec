//! Blocking HTTP client for an external entity-extraction service.
//!
//! The request is a JSON POST; the response must match the extraction
//! fixture schema. Transport failures and server errors are retried with
//! exponential backoff; schema violations fail fast so callers can fall
//! back to the rule-based extractor.

use std::time::Duration;

use serde_json::json;

use crate::error::{Error, Result};
use crate::extract::{parse_extraction_json, ExtractionResult};

/// Environment variable that overrides the configured endpoint.
pub const ENDPOINT_ENV_VAR: &str = "AUTOKG_LLM_ENDPOINT";

/// Instruction the extraction service is expected to apply for the
/// `entity_extraction` task. Versioned here so recorded fixtures can be
/// traced to the prompt that produced them; the service receives the task
/// name on the wire, not this text.
pub const PROMPT_TEMPLATE_V1: &str = "\
Extract the named entities and notable concepts from the following Bengali text. \
For each entity report its surface form, a coarse type tag (PERSON, PLACE, ORG, \
DATE, EVENT, CONCEPT, GROUP, OBJECT, LANGUAGE or UNKNOWN), part-of-speech tags, \
and the zero-based indices of the sentences it appears in. Then list suggested \
relations between entity pairs with a short label. Respond with JSON: \
{\"entities\":[{\"surface\":...,\"type\":...,\"tags\":[...],\"sentence_indices\":[...]}],\
\"relations\":[{\"head_surface\":...,\"tail_surface\":...,\"label\":...}]}";

#[derive(Debug, Clone)]
pub struct LlmClient {
    pub endpoint: String,
    pub model: String,
    pub timeout_s: f64,
    /// Number of retries after the first attempt.
    pub retries: usize,
    /// Base delay for exponential backoff (doubles per retry).
    pub backoff_base_s: f64,
}

impl LlmClient {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        LlmClient {
            endpoint: endpoint.into(),
            model: model.into(),
            timeout_s: 30.0,
            retries: 2,
            backoff_base_s: 1.0,
        }
    }

    /// Extract entities and relations from `text` via the remote service.
    pub fn extract(&self, text: &str) -> Result<ExtractionResult> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(self.timeout_s))
            .build()
            .map_err(|e| Error::HttpTransport {
                url: self.endpoint.clone(),
                message: e.to_string(),
            })?;
        let body = json!({
            "model": self.model,
            "task": "entity_extraction",
            "text": text,
        });
        let mut attempt = 0usize;
        loop {
            match self.attempt_once(&client, &body) {
                Ok(result) => return Ok(result),
                Err(err) if attempt < self.retries && is_retryable(&err) => {
                    let delay = self.backoff_base_s * 2f64.powi(attempt as i32);
                    log::warn!(
                        "llm request attempt {} failed ({err}); retrying in {delay:.1}s",
                        attempt + 1
                    );
                    std::thread::sleep(Duration::from_secs_f64(delay));
                    attempt += 1;
                }
                Err(err) => return Err(err),
            }
        }
    }

    fn attempt_once(
        &self,
        client: &reqwest::blocking::Client,
        body: &serde_json::Value,
    ) -> Result<ExtractionResult> {
        let response = client
            .post(&self.endpoint)
            .json(body)
            .send()
            .map_err(|e| self.transport_error(e))?;
        let status = response.status();
        if !status.is_success() {
            return Err(Error::HttpStatus {
                status: status.as_u16(),
                url: self.endpoint.clone(),
            });
        }
        let text = response.text().map_err(|e| self.transport_error(e))?;
        parse_extraction_json(&text)
    }

    fn transport_error(&self, e: reqwest::Error) -> Error {
        if e.is_timeout() {
            Error::Timeout {
                url: self.endpoint.clone(),
                seconds: self.timeout_s,
            }
        } else {
            Error::HttpTransport {
                url: self.endpoint.clone(),
                message: e.to_string(),
            }
        }
    }
}

fn is_retryable(err: &Error) -> bool {
    matches!(
        err,
        Error::Timeout { .. } | Error::HttpStatus { .. } | Error::HttpTransport { .. }
    )
}

/// One-shot convenience wrapper around [`LlmClient`].
pub fn extract_via_llm(
    text: &str,
    endpoint: &str,
    model: &str,
    timeout_s: f64,
    retries: usize,
) -> Result<ExtractionResult> {
    let client = LlmClient {
        endpoint: endpoint.to_string(),
        model: model.to_string(),
        timeout_s,
        retries,
        backoff_base_s: 1.0,
    };
    client.extract(text)
}
