//! Text-to-vector adapters: remote HTTP endpoints and the seeded mock.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use vidseek_core::embed::MockEmbedder;

use crate::config::{Config, Endpoint};
use crate::error::ApiError;

#[derive(Serialize)]
struct EmbedRequest<'a> {
    text: &'a str,
    space_id: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    embedding: Vec<f32>,
}

#[derive(Serialize)]
struct TransformRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct TransformResponse {
    text: String,
}

#[derive(Debug, Clone)]
pub enum EmbedderKind {
    Mock(MockEmbedder),
    Http(Endpoint),
}

impl EmbedderKind {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Mock(_) => "mock",
            Self::Http(_) => "http",
        }
    }
}

/// One embedder per space, plus the optional text transform.
#[derive(Debug, Clone)]
pub struct Embedders {
    client: reqwest::Client,
    endpoints: BTreeMap<String, Endpoint>,
    mock: Option<MockEmbedder>,
    transform: Option<Endpoint>,
}

impl Embedders {
    pub fn from_config(config: &Config) -> Self {
        Self {
            client: reqwest::Client::new(),
            endpoints: config.embedders.clone(),
            mock: config.mock_embedder.then(|| MockEmbedder::new(config.mock_seed)),
            transform: config.text_transform.clone(),
        }
    }

    pub fn kind(&self, space_id: &str) -> Option<EmbedderKind> {
        match (self.endpoints.get(space_id), self.mock) {
            (Some(e), _) => Some(EmbedderKind::Http(e.clone())),
            (None, Some(m)) => Some(EmbedderKind::Mock(m)),
            (None, None) => None,
        }
    }

    /// Rewrites query text through the configured transform, if any.
    pub async fn transform(&self, text: &str) -> Result<String, ApiError> {
        let Some(endpoint) = &self.transform else {
            return Ok(text.to_string());
        };
        let resp: TransformResponse = self.post(endpoint, &TransformRequest { text }).await?;
        Ok(resp.text)
    }

    /// Embeds `text` for one space; the result must have `dim` entries.
    pub async fn embed(&self, space_id: &str, text: &str, dim: usize) -> Result<Vec<f32>, ApiError> {
        let kind = self.kind(space_id).ok_or_else(|| {
            ApiError::bad_request("no_embedder", format!("no embedder configured for space {space_id}"))
        })?;
        let endpoint = match kind {
            EmbedderKind::Mock(m) => return Ok(m.embed(space_id, text, dim)),
            EmbedderKind::Http(e) => e,
        };
        let resp: EmbedResponse = self.post(&endpoint, &EmbedRequest { text, space_id }).await?;
        let expected = endpoint.dim.unwrap_or(dim);
        if resp.embedding.len() != dim || expected != dim {
            return Err(ApiError::Upstream {
                endpoint: endpoint.url.clone(),
                message: format!("returned {} dims, space {space_id} has {dim}", resp.embedding.len()),
            });
        }
        if resp.embedding.iter().any(|v| !v.is_finite()) {
            return Err(ApiError::Upstream {
                endpoint: endpoint.url.clone(),
                message: "returned non-finite values".into(),
            });
        }
        Ok(resp.embedding)
    }

    async fn post<B: Serialize, R: for<'de> Deserialize<'de>>(
        &self,
        endpoint: &Endpoint,
        body: &B,
    ) -> Result<R, ApiError> {
        let upstream = |message: String| ApiError::Upstream {
            endpoint: endpoint.url.clone(),
            message,
        };
        let resp = self
            .client
            .post(&endpoint.url)
            .timeout(Duration::from_millis(endpoint.timeout_ms))
            .json(body)
            .send()
            .await
            .map_err(|e| {
                upstream(if e.is_timeout() {
                    format!("timed out after {} ms", endpoint.timeout_ms)
                } else {
                    e.to_string()
                })
            })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(upstream(format!("HTTP {status}")));
        }
        resp.json::<R>()
            .await
            .map_err(|e| upstream(format!("bad response body: {e}")))
    }
}
