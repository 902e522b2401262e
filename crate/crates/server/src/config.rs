//! Service configuration: one TOML file plus `VIDSEEK_*` environment overrides.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use vidseek_core::engine::DEFAULT_PALETTE_SIZE;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("environment variable {var}={value:?}: {message}")]
    Env {
        var: &'static str,
        value: String,
        message: String,
    },
    #[error("{0}")]
    Invalid(String),
}

/// An HTTP adapter: POST JSON to `url`, give up after `timeout_ms`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endpoint {
    pub url: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Expected vector length; checked against the space when set.
    #[serde(default)]
    pub dim: Option<usize>,
}

fn default_timeout_ms() -> u64 {
    5_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub bind: SocketAddr,
    pub catalog: Option<PathBuf>,
    pub palette_size: usize,
    /// Files under this directory are served at `/media/<relative path>`.
    pub static_root: Option<PathBuf>,
    /// Built web console, served at `/`.
    pub console_root: Option<PathBuf>,
    /// Overrides each IVF index's stored nprobe.
    pub nprobe: Option<usize>,
    /// Spaces without an endpoint use the built-in mock embedder when true.
    pub mock_embedder: bool,
    pub mock_seed: u64,
    pub default_top: usize,
    /// Text embedder per space id.
    pub embedders: BTreeMap<String, Endpoint>,
    /// Optional rewrite of query text (e.g. translation) before embedding.
    pub text_transform: Option<Endpoint>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            catalog: None,
            palette_size: DEFAULT_PALETTE_SIZE,
            static_root: None,
            console_root: None,
            nprobe: None,
            mock_embedder: true,
            mock_seed: 0,
            default_top: vidseek_core::engine::DEFAULT_TOP,
            embedders: BTreeMap::new(),
            text_transform: None,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Reads `path` (if given), applies environment overrides, validates.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.to_path_buf(),
                    source,
                })?;
                Self::from_toml(&text, p)?
            }
            None => Self::default(),
        };
        config.apply_env(|k| std::env::var(k).ok())?;
        config.validate()?;
        Ok(config)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        fn parse<T: std::str::FromStr>(var: &'static str, value: String) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            value.parse().map_err(|e: T::Err| ConfigError::Env {
                var,
                message: e.to_string(),
                value,
            })
        }
        if let Some(v) = get("VIDSEEK_BIND") {
            self.bind = parse("VIDSEEK_BIND", v)?;
        }
        if let Some(v) = get("VIDSEEK_CATALOG") {
            self.catalog = Some(PathBuf::from(v));
        }
        if let Some(v) = get("VIDSEEK_PALETTE_SIZE") {
            self.palette_size = parse("VIDSEEK_PALETTE_SIZE", v)?;
        }
        if let Some(v) = get("VIDSEEK_STATIC_ROOT") {
            self.static_root = Some(PathBuf::from(v));
        }
        if let Some(v) = get("VIDSEEK_CONSOLE_ROOT") {
            self.console_root = Some(PathBuf::from(v));
        }
        if let Some(v) = get("VIDSEEK_NPROBE") {
            self.nprobe = Some(parse("VIDSEEK_NPROBE", v)?);
        }
        if let Some(v) = get("VIDSEEK_MOCK_SEED") {
            self.mock_seed = parse("VIDSEEK_MOCK_SEED", v)?;
        }
        if let Some(v) = get("VIDSEEK_MOCK_EMBEDDER") {
            self.mock_embedder = parse("VIDSEEK_MOCK_EMBEDDER", v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.palette_size == 0 {
            return Err(ConfigError::Invalid("palette_size must be at least 1".into()));
        }
        if self.default_top == 0 {
            return Err(ConfigError::Invalid("default_top must be at least 1".into()));
        }
        if self.nprobe == Some(0) {
            return Err(ConfigError::Invalid("nprobe must be at least 1".into()));
        }
        for (space, e) in self
            .embedders
            .iter()
            .map(|(s, e)| (s.as_str(), e))
            .chain(self.text_transform.iter().map(|e| ("text_transform", e)))
        {
            if !e.url.starts_with("http://") {
                return Err(ConfigError::Invalid(format!(
                    "{space}: url must be http://, got {}",
                    e.url
                )));
            }
            if e.timeout_ms == 0 {
                return Err(ConfigError::Invalid(format!("{space}: timeout_ms must be positive")));
            }
        }
        Ok(())
    }
}
