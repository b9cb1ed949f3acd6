//! `key = value` config files and their merge with flags and defaults.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

#[derive(Debug, Default)]
pub struct ConfigFile {
    path: String,
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config file {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Blank lines and `#` comments are skipped; keys may use `-` or `_`.
    pub fn parse(text: &str, path: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("{path}:{}: expected `key = value`", n + 1)))?;
            values.insert(k.trim().replace('-', "_"), v.trim().to_string());
        }
        Ok(Self { path: path.to_string(), values })
    }

    /// Fails on keys the command does not know, so typos are not ignored.
    pub fn check_keys(&self, known: &[&str]) -> Result<(), CliError> {
        match self.values.keys().find(|k| !known.contains(&k.as_str())) {
            Some(k) => Err(CliError::Usage(format!("{}: unknown key `{k}`", self.path))),
            None => Ok(()),
        }
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.values
            .get(key)
            .map(|v| v.parse().map_err(|_| CliError::Usage(format!("{}: bad value `{v}` for `{key}`", self.path))))
            .transpose()
    }

    /// Flag, else file, else default.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError> {
        Ok(match flag {
            Some(v) => v,
            None => self.get(key)?.unwrap_or(default),
        })
    }

    pub fn pick_opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        Ok(match flag {
            Some(v) => Some(v),
            None => self.get(key)?,
        })
    }
}

/// Comma-separated list.
pub fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse().map_err(|_| CliError::Usage(format!("bad list element `{v}`"))))
        .collect()
}
