//! Flat `key = value` config files. Flags override file values.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::CliError;

pub const KEYS: &[&str] = &[
    "city",
    "offline_dir",
    "live",
    "out",
    "graph",
    "vectors",
    "model",
    "hops",
    "whitelist",
    "europeana",
    "k",
    "seed",
    "epochs",
    "lr",
    "embed_dim",
    "layers",
    "batch_size",
    "patience",
    "relation_cap",
    "split",
    "variant",
    "nominatim_url",
    "sparql_url",
    "europeana_url",
    "europeana_key",
    "timeout_secs",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    /// `#` starts a comment line; blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::Config(format!("config line {}: expected key = value", n + 1)));
            };
            let key = k.trim();
            if !KEYS.contains(&key) {
                return Err(CliError::Config(format!("unknown config key '{key}' on line {}", n + 1)));
            }
            if values.insert(key.to_string(), v.trim().to_string()).is_some() {
                return Err(CliError::Config(format!("config key '{key}' given twice")));
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        debug_assert!(KEYS.contains(&key), "{key} missing from KEYS");
        self.values
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|e| CliError::Config(format!("config key '{key}': cannot parse '{v}': {e}")))
            })
            .transpose()
    }

    /// Flag value if given, then the file value, then `default`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(match flag {
            Some(v) => v,
            None => self.get(key)?.unwrap_or(default),
        })
    }

    /// Flag value if given, then the file value.
    pub fn optional<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }

    /// Like [`Config::pick`] without a default.
    pub fn require<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match flag {
            Some(v) => Ok(v),
            None => self
                .get(key)?
                .ok_or_else(|| CliError::Config(format!("missing required '{key}' (flag or config key)"))),
        }
    }
}
