use std::fmt::Display;

use serde_json::{json, Value};

use vidseek_server::ApiError;

/// A failure reported as one JSON line on stderr.
#[derive(Debug)]
pub struct CliError {
    pub message: String,
    pub flag: Option<&'static str>,
    pub code: Option<&'static str>,
}

impl CliError {
    pub fn new(message: impl Display) -> Self {
        Self {
            message: message.to_string(),
            flag: None,
            code: None,
        }
    }

    pub fn flag(flag: &'static str, message: impl Display) -> Self {
        Self {
            flag: Some(flag),
            ..Self::new(message)
        }
    }

    pub fn to_json(&self) -> String {
        let mut v = json!({ "error": self.message });
        if let Some(f) = self.flag {
            v["flag"] = Value::from(f);
        }
        if let Some(c) = self.code {
            v["code"] = Value::from(c);
        }
        v.to_string()
    }
}

impl From<ApiError> for CliError {
    fn from(e: ApiError) -> Self {
        Self {
            code: Some(e.code()),
            flag: match &e {
                ApiError::UnknownSpace(_) => Some("--spaces"),
                ApiError::BadRequest { code: "bad_top", .. } => Some("--top"),
                ApiError::BadRequest { code: "bad_nprobe", .. } => Some("--nprobe"),
                ApiError::BadRequest { code: "query_dim", .. } => Some("--query-vec"),
                ApiError::BadRequest {
                    code: "bad_object_classes",
                    ..
                } => Some("--object-classes"),
                _ => None,
            },
            message: e.to_string(),
        }
    }
}

/// Attaches the failing flag to any displayable error.
pub trait FlagContext<T> {
    fn flag(self, flag: &'static str) -> Result<T, CliError>;
    fn plain(self) -> Result<T, CliError>;
}

impl<T, E: Display> FlagContext<T> for Result<T, E> {
    fn flag(self, flag: &'static str) -> Result<T, CliError> {
        self.map_err(|e| CliError::flag(flag, e))
    }

    fn plain(self) -> Result<T, CliError> {
        self.map_err(CliError::new)
    }
}
