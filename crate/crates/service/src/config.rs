use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub const PORT_ENV: &str = "LOTDESIGN_PORT";
pub const STORE_ENV: &str = "LOTDESIGN_STORE";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("{var} = `{value}` is not a valid port")]
    Port { var: &'static str, value: String },
}

/// Service settings. Loaded from an optional TOML file; the port and store
/// path can be overridden from the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub host: String,
    pub port: u16,
    /// Directory of content-addressed documents.
    pub store: PathBuf,
    /// Served at `/` when set, e.g. a built browser console.
    pub static_dir: Option<PathBuf>,
    /// Heuristic solves with a time budget above this run as jobs.
    #[serde(with = "humantime_serde_compat")]
    pub sync_time_limit: Duration,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            host: "127.0.0.1".into(),
            port: 8470,
            store: PathBuf::from("lotdesign-store"),
            static_dir: None,
            sync_time_limit: Duration::from_secs(5),
        }
    }
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut config = match path {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|source| ConfigError::Read { path: path.into(), source })?;
                toml::from_str(&text).map_err(|source| ConfigError::Parse { path: path.into(), source })?
            }
            None => Config::default(),
        };
        config.apply_env(|k| std::env::var(k).ok())?;
        Ok(config)
    }

    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(value) = var(PORT_ENV) {
            self.port = value
                .trim()
                .parse()
                .map_err(|_| ConfigError::Port { var: PORT_ENV, value })?;
        }
        if let Some(value) = var(STORE_ENV) {
            self.store = PathBuf::from(value);
        }
        Ok(())
    }
}

mod humantime_serde_compat {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&humantime::format_duration(*d).to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let s = String::deserialize(d)?;
        humantime::parse_duration(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_env() {
        let mut config: Config = toml::from_str("port = 9000\nstore = \"/tmp/a\"\nsync_time_limit = \"2s\"").unwrap();
        assert_eq!(config.port, 9000);
        assert_eq!(config.sync_time_limit, Duration::from_secs(2));
        config
            .apply_env(|k| match k {
                PORT_ENV => Some("9100".into()),
                STORE_ENV => Some("/tmp/b".into()),
                _ => None,
            })
            .unwrap();
        assert_eq!(config.port, 9100);
        assert_eq!(config.store, PathBuf::from("/tmp/b"));
        assert_eq!(config.host, "127.0.0.1");
    }

    #[test]
    fn bad_port() {
        let mut config = Config::default();
        assert!(config.apply_env(|k| (k == PORT_ENV).then(|| "http".into())).is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<Config>("prot = 1").is_err());
    }
}
