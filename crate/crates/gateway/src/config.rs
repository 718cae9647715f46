//! Server configuration: a TOML file, overridden by environment variables.
//!
//! The storage master key is read from `CAREBRIDGE_MASTER_KEY` only and is
//! never accepted from the file.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;

pub const MASTER_KEY_ENV: &str = "CAREBRIDGE_MASTER_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdapterKind {
    Stub,
    External,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub listen: SocketAddr,
    /// Fixture directory; the fixtures compiled into the binary when unset.
    pub fixtures_dir: Option<PathBuf>,
    pub audit_path: PathBuf,
    pub store_path: PathBuf,
    pub adapter: AdapterKind,
    pub external_url: Option<String>,
    pub adapter_timeout_ms: u64,
    /// When false, adapter failures surface as 502 instead of the agent's
    /// fallback value.
    pub fallback: bool,
    pub token_ttl_secs: i64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            fixtures_dir: None,
            audit_path: PathBuf::from("data/audit.log"),
            store_path: PathBuf::from("data/records.jsonl"),
            adapter: AdapterKind::Stub,
            external_url: None,
            adapter_timeout_ms: 10_000,
            fallback: true,
            token_ttl_secs: 3600,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid value for {var}")]
    Env { var: &'static str },
    #[error("{0} is required")]
    Missing(&'static str),
}

impl Config {
    pub fn from_toml(raw: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(raw)?)
    }

    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut config = match path {
            Some(path) => {
                let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
                    path: path.to_path_buf(),
                    source,
                })?;
                Config::from_toml(&raw)?
            }
            None => Config::default(),
        };
        config.apply_env(|k| std::env::var(k).ok())?;
        config.validate()?;
        Ok(config)
    }

    /// Applies `CAREBRIDGE_*` overrides from `get`.
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = get("CAREBRIDGE_LISTEN") {
            self.listen = v.parse().map_err(|_| ConfigError::Env {
                var: "CAREBRIDGE_LISTEN",
            })?;
        }
        if let Some(v) = get("CAREBRIDGE_FIXTURES_DIR") {
            self.fixtures_dir = Some(v.into());
        }
        if let Some(v) = get("CAREBRIDGE_AUDIT_PATH") {
            self.audit_path = v.into();
        }
        if let Some(v) = get("CAREBRIDGE_STORE_PATH") {
            self.store_path = v.into();
        }
        if let Some(v) = get("CAREBRIDGE_ADAPTER") {
            self.adapter = match v.as_str() {
                "stub" => AdapterKind::Stub,
                "external" => AdapterKind::External,
                _ => {
                    return Err(ConfigError::Env {
                        var: "CAREBRIDGE_ADAPTER",
                    })
                }
            };
        }
        if let Some(v) = get("CAREBRIDGE_EXTERNAL_URL") {
            self.external_url = Some(v);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.adapter == AdapterKind::External && self.external_url.is_none() {
            return Err(ConfigError::Missing("external_url"));
        }
        Ok(())
    }

    pub fn adapter_timeout(&self) -> Duration {
        Duration::from_millis(self.adapter_timeout_ms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_and_env_overrides() {
        let mut config = Config::from_toml(
            r#"
            listen = "0.0.0.0:9000"
            audit_path = "/var/lib/carebridge/audit.log"
            adapter = "external"
            external_url = "http://127.0.0.1:7000/complete"
            fallback = false
            "#,
        )
        .unwrap();
        assert_eq!(config.listen.port(), 9000);
        assert!(!config.fallback);
        assert_eq!(config.store_path, PathBuf::from("data/records.jsonl"));
        config
            .apply_env(|k| (k == "CAREBRIDGE_ADAPTER").then(|| "stub".to_owned()))
            .unwrap();
        assert_eq!(config.adapter, AdapterKind::Stub);
        assert!(config
            .apply_env(|k| (k == "CAREBRIDGE_LISTEN").then(|| "nope".to_owned()))
            .is_err());
    }

    #[test]
    fn unknown_keys_and_key_material_are_rejected() {
        assert!(Config::from_toml("master_key = \"00\"").is_err());
        let external = Config {
            adapter: AdapterKind::External,
            ..Config::default()
        };
        assert!(matches!(external.validate(), Err(ConfigError::Missing(_))));
    }
}
