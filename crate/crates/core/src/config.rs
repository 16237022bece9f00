//! Flat `key = value` configuration text with dotted namespaces.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{EhdError, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses lines of `key = value`. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = KvConfig::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(EhdError::Config(format!("line {}: expected key = value", no + 1)));
            };
            let key = k.trim();
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '.' || c == '_') {
                return Err(EhdError::Config(format!("line {}: malformed key {key:?}", no + 1)));
            }
            if cfg.entries.insert(key.to_string(), v.trim().to_string()).is_some() {
                return Err(EhdError::Config(format!("line {}: duplicate key {key}", no + 1)));
            }
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    /// Stores a float so that it parses back to the identical value.
    pub fn set_f64(&mut self, key: &str, value: f64) {
        self.entries.insert(key.to_string(), format!("{value:?}"));
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| EhdError::Config(format!("{key}: cannot parse {v:?}"))),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .ok_or_else(|| EhdError::Config(format!("missing key {key}")))
    }

    /// Overlays `other` on top of `self`.
    pub fn merge(&mut self, other: &KvConfig) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    /// Applies `EHD_*` overrides: `EHD_MTPP__TIME_SCALE=3` sets `mtpp.time_scale = 3`.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) {
        for (name, value) in vars {
            let Some(rest) = name.strip_prefix("EHD_") else {
                continue;
            };
            let key = rest.to_ascii_lowercase().replace("__", ".");
            if !key.is_empty() {
                self.entries.insert(key, value);
            }
        }
    }

    /// Canonical text: sorted keys, one per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(v);
            s.push('\n');
        }
        s
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_round_trip() {
        let c = KvConfig::parse("# c\nmtpp.layers = 4\n\ndistiller.alpha=1.0\n").unwrap();
        assert_eq!(c.require::<usize>("mtpp.layers").unwrap(), 4);
        assert_eq!(c.get::<f64>("distiller.alpha").unwrap(), Some(1.0));
        assert_eq!(KvConfig::parse(&c.to_text()).unwrap(), c);
        assert!(KvConfig::parse("oops").is_err());
        assert!(KvConfig::parse("a = 1\na = 2").is_err());
        assert!(c.get::<usize>("distiller.alpha").is_err());
    }

    #[test]
    fn env_overrides() {
        let mut c = KvConfig::new();
        c.apply_env([
            ("EHD_MTPP__TIME_SCALE".to_string(), "2.5".to_string()),
            ("HOME".to_string(), "/".to_string()),
        ]);
        assert_eq!(c.get_str("mtpp.time_scale"), Some("2.5"));
        assert_eq!(c.keys().count(), 1);
    }

    #[test]
    fn floats_round_trip_exactly() {
        let mut c = KvConfig::new();
        let x = 0.1 + 0.2;
        c.set_f64("x", x);
        assert_eq!(c.require::<f64>("x").unwrap().to_bits(), x.to_bits());
    }
}
