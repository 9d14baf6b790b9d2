//! Line-oriented `key = value` configuration files. Every command accepts
//! `--config FILE`; values there fill in flags the user did not pass, and
//! explicit flags always win.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, Context, Result};

#[derive(Debug, Default)]
pub struct FileConfig {
    values: HashMap<String, String>,
}

impl FileConfig {
    /// Loads `key = value` lines; `#` starts a comment, blank lines are
    /// skipped, keys are the long flag names without the leading dashes.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        let mut values = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                anyhow!(
                    "{}:{}: expected `key = value`, got {raw:?}",
                    path.display(),
                    i + 1
                )
            })?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(anyhow!("{}:{}: empty key", path.display(), i + 1));
            }
            if values.insert(key.to_string(), value.to_string()).is_some() {
                return Err(anyhow!(
                    "{}:{}: duplicate key {key:?}",
                    path.display(),
                    i + 1
                ));
            }
        }
        Ok(FileConfig { values })
    }

    pub fn load_optional(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => FileConfig::load(p),
            None => Ok(FileConfig::default()),
        }
    }

    /// Flag value if set, else the config value under `key`, else None.
    pub fn resolve<T: Clone + FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| anyhow!("config key {key:?}: {e}")),
            None => Ok(None),
        }
    }

    pub fn resolve_path(&self, flag: Option<PathBuf>, key: &str) -> Option<PathBuf> {
        flag.or_else(|| self.values.get(key).map(PathBuf::from))
    }

    /// A bare `--flag` wins; otherwise the config may set true/false.
    pub fn resolve_switch(&self, flag: bool, key: &str) -> Result<bool> {
        if flag {
            return Ok(true);
        }
        match self.values.get(key).map(String::as_str) {
            None => Ok(false),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(other) => Err(anyhow!("config key {key:?}: want true|false, got {other:?}")),
        }
    }
}

/// Missing-required-setting error naming both the flag and the config key.
pub fn required<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| anyhow!("missing required setting --{flag} (config key {flag:?})"))
}
