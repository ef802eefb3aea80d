//! Flat `key = value` settings files. Blank lines and `#` comments are
//! ignored; keys may use `-` or `_` interchangeably.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use gcdr::{Error, Result};

#[derive(Debug, Default, Clone, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

fn normalize(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('_', "-")
}

impl Settings {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| gcdr::io::with_path(e, path))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: "expected key = value".into(),
            })?;
            let value = value.trim().trim_matches('"').to_string();
            if values.insert(normalize(key), value).is_some() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: format!("duplicate key '{}'", key.trim()),
                });
            }
        }
        Ok(Settings { values })
    }

    /// Parsed value for `key`, if set.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get(&normalize(key)) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| {
                Error::Parameter(format!("config value for '{key}' is invalid: '{v}'"))
            }),
        }
    }
}
