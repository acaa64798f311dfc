//! Flat `key = value` settings files. Flags override file values, which
//! override built-in defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use anyhow::{Context, Result};

use crate::Usage;

/// Every key a settings file may set, spelled with underscores.
pub const KNOWN_KEYS: &[&str] = &[
    "n",
    "m",
    "relation",
    "variant",
    "abs_tol",
    "rel_tol",
    "max_iters",
    "zero_weight_eps",
    "seed",
    "model",
    "format",
    "choice_event",
    "max_error_ratio",
    "train_start",
    "train_end",
    "base_date",
    "span_days",
    "slices",
    "top_n",
    "empty_view",
    "truth",
    "users",
    "items",
    "sample_rate",
    "zero_prob",
    "more_prob",
    "max_vars",
    "max_m",
    "edge_cap",
];

#[derive(Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
    origin: String,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Settings::default()),
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                Settings::parse(&text, &p.display().to_string())
            }
        }
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Usage(format!("{origin}:{}: expected key = value", i + 1)).into());
            };
            let key = key.trim().replace('-', "_");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Usage(format!("{origin}:{}: unknown setting {key:?}", i + 1)).into());
            }
            if values.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(Usage(format!("{origin}:{}: {key} set twice", i + 1)).into());
            }
        }
        Ok(Settings {
            values,
            origin: origin.to_string(),
        })
    }

    /// The flag value if given, else the file value, else `None`.
    pub fn get<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        debug_assert!(KNOWN_KEYS.contains(&key), "{key} missing from KNOWN_KEYS");
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| Usage(format!("{}: invalid {key} = {raw:?}: {e}", self.origin)).into()),
        }
    }

    pub fn or<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        Ok(self.get(flag, key)?.unwrap_or(default))
    }

    pub fn require<T>(&self, flag: Option<T>, key: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        self.get(flag, key)?
            .ok_or_else(|| Usage(format!("--{} is required (flag or config file)", key.replace('_', "-"))).into())
    }
}
