//! HTTP/JSON client for the optional model sidecar.
//!
//! The sidecar exposes `/embed`, `/variation`, `/expand` and `/healthz`.
//! Responses are checked for array lengths and embedding dimension before
//! they reach the engine.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment variable that overrides every configured sidecar URL.
pub const SIDECAR_URL_ENV: &str = "PRETEXT_SIDECAR_URL";

/// Picks the sidecar base URL: the environment override wins over `configured`.
pub fn resolve_url(configured: Option<&str>) -> Option<String> {
    std::env::var(SIDECAR_URL_ENV)
        .ok()
        .filter(|s| !s.is_empty())
        .or_else(|| configured.map(str::to_owned))
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct EmbedResponse {
    pub embeddings: Vec<Vec<f64>>,
    pub dim: usize,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct VariationRequest {
    pub texts: Vec<String>,
    pub mask_pct: f64,
    pub steps: usize,
    pub seed: u64,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct VariationResponse {
    pub texts: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ExpandRequest {
    pub prompt: String,
    pub max_new_tokens: usize,
    pub seed: u64,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ExpandResponse {
    pub text: String,
}

#[derive(Debug, Clone)]
pub struct SidecarClient {
    base_url: String,
    agent: ureq::Agent,
}

impl SidecarClient {
    pub fn new(base_url: impl Into<String>) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(300))
            .build();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_owned(),
            agent,
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn post<Req: Serialize, Resp: for<'de> Deserialize<'de>>(
        &self,
        endpoint: &str,
        body: &Req,
    ) -> Result<Resp> {
        let url = format!("{}{}", self.base_url, endpoint);
        let resp = match self.agent.post(&url).send_json(body) {
            Ok(r) => r,
            Err(ureq::Error::Status(code, r)) => {
                let msg = r.into_string().unwrap_or_default();
                return Err(Error::Protocol(format!(
                    "{endpoint} returned {code}: {msg}"
                )));
            }
            Err(e) => return Err(Error::Transport(format!("{url}: {e}"))),
        };
        resp.into_json()
            .map_err(|e| Error::Protocol(format!("{endpoint}: undecodable body: {e}")))
    }

    /// Embeds `texts`; every returned vector must have the advertised
    /// dimension, which must equal `expected_dim`.
    pub fn embed(&self, texts: &[String], expected_dim: usize) -> Result<Vec<Vec<f64>>> {
        let resp: EmbedResponse = self.post(
            "/embed",
            &EmbedRequest {
                texts: texts.to_vec(),
            },
        )?;
        if resp.embeddings.len() != texts.len() {
            return Err(Error::Protocol(format!(
                "/embed returned {} embeddings for {} texts",
                resp.embeddings.len(),
                texts.len()
            )));
        }
        if resp.dim != expected_dim {
            return Err(Error::DimensionMismatch {
                expected: expected_dim,
                actual: resp.dim,
            });
        }
        if let Some(v) = resp.embeddings.iter().find(|v| v.len() != expected_dim) {
            return Err(Error::DimensionMismatch {
                expected: expected_dim,
                actual: v.len(),
            });
        }
        Ok(resp.embeddings)
    }

    pub fn variation(
        &self,
        texts: &[String],
        mask_pct: f64,
        steps: usize,
        seed: u64,
    ) -> Result<Vec<String>> {
        let resp: VariationResponse = self.post(
            "/variation",
            &VariationRequest {
                texts: texts.to_vec(),
                mask_pct,
                steps,
                seed,
            },
        )?;
        if resp.texts.len() != texts.len() {
            return Err(Error::Protocol(format!(
                "/variation returned {} texts for {}",
                resp.texts.len(),
                texts.len()
            )));
        }
        Ok(resp.texts)
    }

    pub fn expand(&self, prompt: &str, max_new_tokens: usize, seed: u64) -> Result<String> {
        let resp: ExpandResponse = self.post(
            "/expand",
            &ExpandRequest {
                prompt: prompt.to_owned(),
                max_new_tokens,
                seed,
            },
        )?;
        Ok(resp.text)
    }

    /// Fetches `/healthz` as raw JSON.
    pub fn health(&self) -> Result<serde_json::Value> {
        let url = format!("{}/healthz", self.base_url);
        self.agent
            .get(&url)
            .call()
            .map_err(|e| Error::Transport(format!("{url}: {e}")))?
            .into_json()
            .map_err(|e| Error::Protocol(format!("/healthz: {e}")))
    }
}
