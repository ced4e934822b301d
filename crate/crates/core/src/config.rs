//! Plain-text run configuration: TOML with `[system]`, `[params]` and
//! `[initial]` sections. Unknown keys are rejected. Command-line flags take
//! precedence over file values.

use crate::error::{Error, Result};
use serde::Deserialize;
use std::path::Path;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub system: Option<SystemSection>,
    pub params: Option<toml::Table>,
    pub initial: Option<InitialSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub name: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub q: Option<Vec<f64>>,
    pub v: Option<Vec<f64>>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    /// Numeric parameter overrides from the `[params]` section.
    pub fn param_overrides(&self) -> Result<Vec<(String, f64)>> {
        let mut out = Vec::new();
        if let Some(table) = &self.params {
            for (key, value) in table {
                let v = match value {
                    toml::Value::Float(f) => *f,
                    toml::Value::Integer(i) => *i as f64,
                    toml::Value::Boolean(b) => {
                        if *b {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    other => {
                        return Err(Error::config(format!(
                            "parameter `{key}` must be numeric, got {other}"
                        )))
                    }
                };
                out.push((key.clone(), v));
            }
        }
        Ok(out)
    }
}
