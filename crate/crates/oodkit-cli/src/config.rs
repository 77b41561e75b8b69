//! Optional JSON config file whose keys mirror the active subcommand's
//! flags. Precedence is always flag > config file > built-in default.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use oodkit::{Error, Result};

/// A flat flag-name → value document. Every key must be consumed by the
/// subcommand that loads it; leftovers are reported as validation errors.
pub struct ConfigDoc {
    values: Map<String, Value>,
    consumed: BTreeSet<String>,
}

impl ConfigDoc {
    pub fn empty() -> ConfigDoc {
        ConfigDoc {
            values: Map::new(),
            consumed: BTreeSet::new(),
        }
    }

    pub fn load(path: Option<&Path>) -> Result<ConfigDoc> {
        let Some(path) = path else {
            return Ok(ConfigDoc::empty());
        };
        let value: Value = serde_json::from_str(&fs::read_to_string(path)?)?;
        match value {
            Value::Object(values) => Ok(ConfigDoc {
                values,
                consumed: BTreeSet::new(),
            }),
            _ => Err(Error::Validation(format!(
                "config file {} must hold a JSON object of flag values",
                path.display()
            ))),
        }
    }

    fn get(&mut self, key: &str) -> Option<&Value> {
        let v = self.values.get(key);
        if v.is_some() {
            self.consumed.insert(key.to_string());
        }
        v
    }

    pub fn u64(&mut self, key: &str) -> Result<Option<u64>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_u64()
                .map(Some)
                .ok_or_else(|| bad_value(key, "a non-negative integer", v)),
        }
    }

    pub fn usize(&mut self, key: &str) -> Result<Option<usize>> {
        Ok(self.u64(key)?.map(|v| v as usize))
    }

    pub fn f64(&mut self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_f64()
                .map(Some)
                .ok_or_else(|| bad_value(key, "a number", v)),
        }
    }

    pub fn bool(&mut self, key: &str) -> Result<Option<bool>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_bool()
                .map(Some)
                .ok_or_else(|| bad_value(key, "a boolean", v)),
        }
    }

    pub fn string(&mut self, key: &str) -> Result<Option<String>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_str()
                .map(|s| Some(s.to_string()))
                .ok_or_else(|| bad_value(key, "a string", v)),
        }
    }

    pub fn path(&mut self, key: &str) -> Result<Option<PathBuf>> {
        Ok(self.string(key)?.map(PathBuf::from))
    }

    /// Errors if the document held keys nobody consumed.
    pub fn ensure_consumed(&self) -> Result<()> {
        let leftover: Vec<&String> = self
            .values
            .keys()
            .filter(|k| !self.consumed.contains(*k))
            .collect();
        if leftover.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "config file has keys this subcommand does not accept: {}",
                leftover
                    .iter()
                    .map(|s| s.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            )))
        }
    }
}

fn bad_value(key: &str, expected: &str, got: &Value) -> Error {
    Error::Validation(format!("config key '{key}' must be {expected}, got {got}"))
}

/// flag > config > default
pub fn pick<T>(flag: Option<T>, config: Option<T>, default: T) -> T {
    flag.or(config).unwrap_or(default)
}

/// flag > config, but the value is mandatory.
pub fn pick_required<T>(flag: Option<T>, config: Option<T>, name: &str) -> Result<T> {
    flag.or(config)
        .ok_or_else(|| Error::Argument(format!("--{name} is required (flag or config file)")))
}
