//! Line-oriented `section.key = value` configuration files.
//!
//! `#` starts a comment. A `[section]` line prefixes the keys that follow
//! with `section.` until the next header. Lists are comma separated.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(inner) = line.strip_prefix('[') {
                let name = inner
                    .strip_suffix(']')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .ok_or_else(|| Error::config(format!("line {}", n + 1), format!("malformed section header `{line}`")))?;
                section = name.to_string();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::config(format!("line {}", n + 1), format!("expected `key = value`, got `{line}`")))?;
            let k = k.trim();
            if k.is_empty() || k.contains(char::is_whitespace) {
                return Err(Error::config(format!("line {}", n + 1), format!("malformed key `{k}`")));
            }
            let key = if section.is_empty() { k.to_string() } else { format!("{section}.{k}") };
            entries.insert(key, v.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.insert(key.into(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn parse_one<T: std::str::FromStr>(key: &str, raw: &str, what: &str) -> Result<T> {
    raw.trim().parse().map_err(|_| Error::config(key, format!("expected {what}, got `{raw}`")))
}

/// Parsed config bound to one scenario. Lookups try `<scenario>.<key>`
/// before the bare `<key>`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub values: Config,
    pub seed_override: Option<u64>,
}

impl ExperimentConfig {
    pub fn new(scenario: impl Into<String>, values: Config) -> Self {
        Self { scenario: scenario.into(), values, seed_override: None }
    }

    /// A scenario with all defaults.
    pub fn defaults(scenario: impl Into<String>) -> Self {
        Self::new(scenario, Config::default())
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed_override = seed;
        self
    }

    /// Sets `<scenario>.<key>`.
    pub fn set(mut self, key: &str, value: impl ToString) -> Self {
        let k = format!("{}.{key}", self.scenario);
        self.values.set(k, value.to_string());
        self
    }

    fn lookup(&self, key: &str) -> Option<(String, &str)> {
        let scoped = format!("{}.{key}", self.scenario);
        if let Some(v) = self.values.get(&scoped) {
            return Some((scoped, v));
        }
        self.values.get(key).map(|v| (key.to_string(), v))
    }

    pub fn f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.lookup(key) {
            None => Ok(default),
            Some((k, v)) => {
                let x: f64 = parse_one(&k, v, "a number")?;
                if !x.is_finite() {
                    return Err(Error::config(k, "value must be finite"));
                }
                Ok(x)
            }
        }
    }

    pub fn opt_f64(&self, key: &str) -> Result<Option<f64>> {
        match self.lookup(key) {
            None => Ok(None),
            Some((k, v)) => parse_one(&k, v, "a number").map(Some),
        }
    }

    pub fn usize(&self, key: &str, default: usize) -> Result<usize> {
        self.lookup(key).map_or(Ok(default), |(k, v)| parse_one(&k, v, "a nonnegative integer"))
    }

    pub fn u64(&self, key: &str, default: u64) -> Result<u64> {
        self.lookup(key).map_or(Ok(default), |(k, v)| parse_one(&k, v, "a nonnegative integer"))
    }

    pub fn bool(&self, key: &str, default: bool) -> Result<bool> {
        self.lookup(key).map_or(Ok(default), |(k, v)| parse_one(&k, v, "true or false"))
    }

    pub fn string(&self, key: &str, default: &str) -> String {
        self.lookup(key).map_or(default.to_string(), |(_, v)| v.to_string())
    }

    pub fn f64_list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.lookup(key) {
            None => Ok(default.to_vec()),
            Some((k, v)) => {
                let items: Vec<f64> = v.split(',').map(|x| parse_one(&k, x, "a list of numbers")).collect::<Result<_>>()?;
                if items.is_empty() || items.iter().any(|x| !x.is_finite()) {
                    return Err(Error::config(k, "expected a nonempty list of finite numbers"));
                }
                Ok(items)
            }
        }
    }

    pub fn string_list(&self, key: &str, default: &[&str]) -> Vec<String> {
        match self.lookup(key) {
            None => default.iter().map(|s| s.to_string()).collect(),
            Some((_, v)) => v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
        }
    }

    /// `--seed` wins over the `seed` key.
    pub fn seed(&self, default: u64) -> Result<u64> {
        match self.seed_override {
            Some(s) => Ok(s),
            None => self.u64("seed", default),
        }
    }

    /// Fails with the key named when a lookup value violates `ok`.
    pub fn require(&self, key: &str, ok: bool, message: &str) -> Result<()> {
        if ok {
            Ok(())
        } else {
            let k = self.lookup(key).map_or(format!("{}.{key}", self.scenario), |(k, _)| k);
            Err(Error::config(k, message))
        }
    }
}
