use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use thiserror::Error;

use vidseek_core::catalog::CatalogError;
use vidseek_core::engine::EngineError;
use vidseek_core::index::IndexError;

/// Every failure the API reports, with its HTTP status.
#[derive(Debug, Error)]
pub enum ApiError {
    #[error("unknown space {0}")]
    UnknownSpace(String),
    #[error("{message}")]
    BadRequest { code: &'static str, message: String },
    #[error("{0}")]
    NotFound(String),
    #[error("embedder {endpoint} failed: {message}")]
    Upstream { endpoint: String, message: String },
    #[error("{0}")]
    Unavailable(String),
    #[error("{0}")]
    Internal(String),
}

#[derive(Serialize)]
struct Body<'a> {
    error: String,
    code: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    space: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    endpoint: Option<&'a str>,
}

impl ApiError {
    pub fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::BadRequest {
            code,
            message: message.into(),
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            Self::UnknownSpace(_) | Self::BadRequest { .. } => StatusCode::BAD_REQUEST,
            Self::NotFound(_) => StatusCode::NOT_FOUND,
            Self::Upstream { .. } => StatusCode::BAD_GATEWAY,
            Self::Unavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
            Self::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            Self::UnknownSpace(_) => "unknown_space",
            Self::BadRequest { code, .. } => code,
            Self::NotFound(_) => "not_found",
            Self::Upstream { .. } => "embedder_failed",
            Self::Unavailable(_) => "not_ready",
            Self::Internal(_) => "internal",
        }
    }

    fn body(&self) -> Body<'_> {
        Body {
            error: self.to_string(),
            code: self.code(),
            space: match self {
                Self::UnknownSpace(s) => Some(s),
                _ => None,
            },
            endpoint: match self {
                Self::Upstream { endpoint, .. } => Some(endpoint),
                _ => None,
            },
        }
    }

    /// The JSON error body as a value, for non-HTTP callers.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self.body()).expect("error body serializes")
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status().is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        (self.status(), Json(self.body())).into_response()
    }
}

impl From<CatalogError> for ApiError {
    fn from(e: CatalogError) -> Self {
        match e {
            CatalogError::UnknownFrame(_) | CatalogError::UnknownClip(_) | CatalogError::UnknownVideo(_) => {
                Self::NotFound(e.to_string())
            }
            CatalogError::UnknownSpace(s) => Self::UnknownSpace(s),
            other => Self::Internal(other.to_string()),
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        use EngineError as E;
        match e {
            E::UnknownSpace(s) => Self::UnknownSpace(s),
            E::Catalog(c) => c.into(),
            E::MissingVector(_) => Self::bad_request("missing_query", e.to_string()),
            E::QueryDim { .. } => Self::bad_request("query_dim", e.to_string()),
            E::DuplicateSpace(_) | E::NoSpaces => Self::bad_request("bad_spaces", e.to_string()),
            E::InvalidTop => Self::bad_request("bad_top", e.to_string()),
            E::NoVocabulary | E::NoQueryText | E::Filter(_) => Self::bad_request("bad_object_classes", e.to_string()),
            E::Index {
                source: IndexError::InvalidNprobe { .. },
                ..
            } => Self::bad_request("bad_nprobe", e.to_string()),
            E::Index {
                source: IndexError::NonFinite,
                ..
            } => Self::bad_request("query_not_finite", e.to_string()),
            other => Self::Internal(other.to_string()),
        }
    }
}
