//! Service configuration: a TOML file, with environment overrides for the
//! bind address, storage path and credentials.

use std::path::{Path, PathBuf};

use holdmeter::registry::{Principal, Role, DEFAULT_SNAPSHOT_EVERY};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ENV_BIND: &str = "HOLDMETER_BIND";
pub const ENV_STORAGE: &str = "HOLDMETER_STORAGE";
/// Comma-separated `name:role:token` triples; replaces the file's list.
pub const ENV_PRINCIPALS: &str = "HOLDMETER_PRINCIPALS";
/// Token the CLI authenticates with.
pub const ENV_TOKEN: &str = "HOLDMETER_TOKEN";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("invalid {var}: {reason}")]
    Env { var: &'static str, reason: String },
    #[error("token for `{0}` is shared with another principal")]
    DuplicateToken(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrincipalEntry {
    pub name: String,
    pub role: Role,
    pub token: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_bind")]
    pub bind: String,
    /// Store directory; without one the registry lives in memory only.
    #[serde(default)]
    pub storage: Option<PathBuf>,
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: u64,
    #[serde(default)]
    pub principals: Vec<PrincipalEntry>,
}

fn default_bind() -> String {
    "127.0.0.1:8080".into()
}

fn default_snapshot_every() -> u64 {
    DEFAULT_SNAPSHOT_EVERY
}

impl Default for Config {
    fn default() -> Self {
        Self {
            bind: default_bind(),
            storage: None,
            snapshot_every: default_snapshot_every(),
            principals: Vec::new(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    /// Read `path` (if any), then apply overrides from `env`.
    pub fn load(path: Option<&Path>, env: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let mut config = match path {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
                    path: path.to_path_buf(),
                    source,
                })?;
                Self::from_toml(&text, path)?
            }
            None => Self::default(),
        };
        config.apply_env(env)?;
        config.check()?;
        Ok(config)
    }

    pub fn apply_env(&mut self, env: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(bind) = env(ENV_BIND) {
            self.bind = bind;
        }
        if let Some(storage) = env(ENV_STORAGE) {
            self.storage = (!storage.is_empty()).then(|| PathBuf::from(storage));
        }
        if let Some(list) = env(ENV_PRINCIPALS) {
            self.principals = parse_principals(&list)?;
        }
        Ok(())
    }

    fn check(&self) -> Result<(), ConfigError> {
        for (i, p) in self.principals.iter().enumerate() {
            if self.principals[..i].iter().any(|q| q.token == p.token) {
                return Err(ConfigError::DuplicateToken(p.name.clone()));
            }
        }
        Ok(())
    }

    /// The principal holding `token`, if any.
    pub fn authenticate(&self, token: &str) -> Option<Principal> {
        self.principals
            .iter()
            .find(|p| !token.is_empty() && p.token == token)
            .map(|p| Principal::new(p.name.clone(), p.role, p.token.clone()))
    }
}

fn parse_principals(list: &str) -> Result<Vec<PrincipalEntry>, ConfigError> {
    let bad = |reason: String| ConfigError::Env {
        var: ENV_PRINCIPALS,
        reason,
    };
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|entry| {
            let mut parts = entry.splitn(3, ':');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(name), Some(role), Some(token)) if !name.is_empty() && !token.is_empty() => Ok(PrincipalEntry {
                    name: name.to_string(),
                    role: role.parse().map_err(bad)?,
                    token: token.to_string(),
                }),
                _ => Err(bad(format!("expected name:role:token, got `{entry}`"))),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env<'a>(vars: &'a [(&'a str, &'a str)]) -> impl Fn(&str) -> Option<String> + 'a {
        move |k| vars.iter().find(|(n, _)| *n == k).map(|(_, v)| v.to_string())
    }

    #[test]
    fn file_then_env() {
        let text = r#"
            bind = "0.0.0.0:9000"
            storage = "/srv/meter"

            [[principals]]
            name = "ana"
            role = "labeler"
            token = "t1"
        "#;
        let mut c = Config::from_toml(text, Path::new("x.toml")).unwrap();
        assert_eq!(c.snapshot_every, DEFAULT_SNAPSHOT_EVERY);
        assert_eq!(c.authenticate("t1").unwrap().role, Role::Labeler);

        c.apply_env(env(&[
            (ENV_BIND, "127.0.0.1:1"),
            (ENV_STORAGE, "/tmp/m"),
            (ENV_PRINCIPALS, "dev:developer:abc, root:admin:xyz"),
        ]))
        .unwrap();
        assert_eq!(c.bind, "127.0.0.1:1");
        assert_eq!(c.storage.as_deref(), Some(Path::new("/tmp/m")));
        assert!(c.authenticate("t1").is_none());
        assert_eq!(c.authenticate("xyz").unwrap().name, "root");
        assert!(c.authenticate("").is_none());
    }

    #[test]
    fn bad_principal_lists() {
        let mut c = Config::default();
        for list in ["dev:developer", "dev:boss:tok", ":admin:tok"] {
            assert!(c.apply_env(env(&[(ENV_PRINCIPALS, list)])).is_err(), "{list}");
        }
        let err = Config::load(None, env(&[(ENV_PRINCIPALS, "a:admin:same,b:developer:same")])).unwrap_err();
        assert!(matches!(err, ConfigError::DuplicateToken(_)));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Config::from_toml("bnd = \"x\"", Path::new("c.toml")).is_err());
    }
}
