//! The search request as sent over the wire, and the one code path that
//! turns it into a response (used by the HTTP handler and the CLI).

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use vidseek_core::engine::{ClassSelection, Engine, SearchParams, SearchResponse, Timings};
use vidseek_core::filter::MatchMode;
use vidseek_core::fusion::{FusionMethod, Normalization};

use crate::embedder::Embedders;
use crate::error::ApiError;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchRequest {
    pub query_text: Option<String>,
    /// Raw query vector per space; bypasses the embedder for that space.
    pub query_vectors: BTreeMap<String, Vec<f32>>,
    /// Spaces to search. Empty means the spaces named in `query_vectors`.
    pub spaces: Vec<String>,
    pub fusion: FusionMethod,
    pub normalization: Normalization,
    pub top: Option<usize>,
    /// Explicit object-class ids to filter on.
    pub object_classes: Option<Vec<u32>>,
    /// Extract object classes from `query_text` instead.
    pub classes_from_text: bool,
    pub match_mode: MatchMode,
    pub include_deduped: bool,
    pub nprobe: Option<usize>,
    /// Include per-stage timings in the body (they are always in the
    /// `Server-Timing` header).
    pub timing: bool,
}

/// Stage timings including query embedding.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ServiceTimings {
    pub embed_ms: f64,
    #[serde(flatten)]
    pub engine: Timings,
}

impl ServiceTimings {
    /// `Server-Timing` header value.
    pub fn header_value(&self) -> String {
        let t = &self.engine;
        [
            ("embed", self.embed_ms),
            ("filter", t.filter_ms),
            ("search", t.search_ms),
            ("expand", t.expand_ms),
            ("fusion", t.fusion_ms),
            ("group", t.group_ms),
            ("total", self.embed_ms + t.total_ms),
        ]
        .iter()
        .map(|(k, v)| format!("{k};dur={v:.3}"))
        .collect::<Vec<_>>()
        .join(", ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchBody {
    #[serde(flatten)]
    pub response: SearchResponse,
    /// Query text after the optional transform, when it changed.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub transformed_query: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timings: Option<ServiceTimings>,
}

/// Validates the request, embeds whatever is missing, and runs the engine.
pub async fn run_search(
    engine: &Engine,
    embedders: &Embedders,
    req: &SearchRequest,
    default_top: usize,
) -> Result<(SearchBody, ServiceTimings), ApiError> {
    let text = req.query_text.as_deref().map(str::trim).filter(|t| !t.is_empty());
    if text.is_none() && req.query_vectors.is_empty() {
        return Err(ApiError::bad_request(
            "missing_query",
            "query_text or query_vectors is required",
        ));
    }
    if req.object_classes.is_some() && req.classes_from_text {
        return Err(ApiError::bad_request(
            "bad_object_classes",
            "object_classes and classes_from_text are mutually exclusive",
        ));
    }
    let spaces: Vec<String> = if req.spaces.is_empty() {
        req.query_vectors.keys().cloned().collect()
    } else {
        req.spaces.clone()
    };
    if spaces.is_empty() {
        return Err(ApiError::bad_request(
            "bad_spaces",
            "spaces is required with query_text",
        ));
    }
    for id in spaces.iter().chain(req.query_vectors.keys()) {
        engine.space(id)?;
    }

    let started = Instant::now();
    let mut transformed = None;
    let text = match text {
        Some(t) => {
            let out = embedders.transform(t).await?;
            if out != t {
                transformed = Some(out.clone());
            }
            Some(out)
        }
        None => None,
    };
    let mut vectors = BTreeMap::new();
    for id in &spaces {
        let v = match (req.query_vectors.get(id), &text) {
            (Some(v), _) => v.clone(),
            (None, Some(t)) => embedders.embed(id, t, engine.space(id)?.space.dim).await?,
            (None, None) => {
                return Err(ApiError::bad_request(
                    "missing_query",
                    format!("no query vector for space {id} and no query_text"),
                ))
            }
        };
        vectors.insert(id.clone(), v);
    }
    let embed_ms = started.elapsed().as_secs_f64() * 1e3;

    let params = SearchParams {
        spaces,
        top: req.top.unwrap_or(default_top),
        method: req.fusion,
        normalization: req.normalization,
        classes: match (&req.object_classes, req.classes_from_text) {
            (Some(ids), _) => ClassSelection::Ids(ids.clone()),
            (None, true) => ClassSelection::FromText,
            (None, false) => ClassSelection::None,
        },
        match_mode: req.match_mode,
        include_deduped: req.include_deduped,
        query_text: text,
        nprobe: req.nprobe,
    };
    let outcome = engine.search(&params, &vectors)?;
    let timings = ServiceTimings {
        embed_ms,
        engine: outcome.timings,
    };
    Ok((
        SearchBody {
            response: outcome.response,
            transformed_query: transformed,
            timings: req.timing.then_some(timings),
        },
        timings,
    ))
}
