//! Flat `key = value` configuration files. Keys are the long CLI flag names
//! without the leading dashes. A key may repeat, and list values may also
//! be comma-separated. `#` starts a comment.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    entries: BTreeMap<String, Vec<String>>,
}

impl ConfigFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected key = value, got {raw:?}",
                    no + 1
                )));
            };
            let key = key.trim().trim_start_matches("--").replace('_', "-");
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", no + 1)));
            }
            entries
                .entry(key)
                .or_default()
                .push(value.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Fails on the first key not in `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.keys().find(|k| !allowed.contains(k)) {
            Some(k) => Err(Error::Config(format!("unknown configuration key {k:?}"))),
            None => Ok(()),
        }
    }

    /// Last value given for `key`.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        let Some(raw) = self.entries.get(key).and_then(|v| v.last()) else {
            return Ok(None);
        };
        raw.parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{key}: cannot parse {raw:?}")))
    }

    /// All values for `key`, splitting comma-separated entries.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let Some(values) = self.entries.get(key) else {
            return Ok(Vec::new());
        };
        values
            .iter()
            .flat_map(|v| v.split(','))
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| Error::Config(format!("{key}: cannot parse {s:?}")))
            })
            .collect()
    }

    /// `true`/`false`/`yes`/`no`/`1`/`0`; a bare key with an empty value
    /// counts as true.
    pub fn get_flag(&self, key: &str) -> Result<Option<bool>> {
        let Some(raw) = self.entries.get(key).and_then(|v| v.last()) else {
            return Ok(None);
        };
        match raw.to_ascii_lowercase().as_str() {
            "" | "true" | "yes" | "1" | "on" => Ok(Some(true)),
            "false" | "no" | "0" | "off" => Ok(Some(false)),
            _ => Err(Error::Config(format!("{key}: {raw:?} is not a boolean"))),
        }
    }
}
