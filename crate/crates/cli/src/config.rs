//! Run configuration files.
//!
//! ```toml
//! seed = 7
//!
//! [model]
//! kind = "linear"
//! spectrum = [0.99, 0.5]
//! offset = [0.01, 0.5]
//!
//! [task]
//! kind = "fixed-point"
//! tolerance = 1e-10
//!
//! [output]
//! dir = "out"
//! prefix = "linear"
//! stride = 1
//! ```
//!
//! `model` and `task` hold a `kind` plus the options of that kind. Unknown
//! keys anywhere are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub kind: String,
    #[serde(flatten)]
    pub params: toml::Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub prefix: String,
    /// Keep every `stride`-th state entry in CSV output.
    pub stride: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("."),
            prefix: "run".into(),
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub model: Section,
    pub task: Section,
    #[serde(default)]
    pub output: OutputConfig,
    /// Text the configuration was parsed from, used to place errors.
    #[serde(skip)]
    pub source: Option<String>,
}

impl PartialEq for RunConfig {
    fn eq(&self, other: &Self) -> bool {
        self.seed == other.seed && self.model == other.model && self.task == other.task && self.output == other.output
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut config: RunConfig = toml::from_str(text).map_err(|e| {
            let mut err = ConfigError::new(e.message().to_string());
            err.line = e.span().map(|span| line_of(text, span.start));
            if let Some(key) = unknown_key(e.message()) {
                err.key = Some(key);
            }
            err
        })?;
        if config.output.stride == 0 {
            return Err(ConfigError::new("output.stride must be at least 1").with_key("stride"));
        }
        config.source = Some(text.to_string());
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError::new(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }

    /// Adds the line of `err.key` inside `section` when the source is known.
    pub fn locate(&self, section: &str, mut err: ConfigError) -> ConfigError {
        if err.line.is_none() {
            if let (Some(source), Some(key)) = (&self.source, &err.key) {
                err.line = find_key(source, section, key);
            }
        }
        err
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Name inside "unknown field `name`" messages.
fn unknown_key(message: &str) -> Option<String> {
    let rest = &message[message.find("unknown field `")? + "unknown field `".len()..];
    Some(rest[..rest.find('`')?].to_string())
}

/// Line of `key = ...` within `[section]` (or one of its sub-tables).
pub fn find_key(source: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if let Some(header) = line.strip_prefix('[') {
            current = header.trim_end_matches(']').trim().to_string();
            continue;
        }
        let in_section = current == section || current.starts_with(&format!("{section}."));
        if !in_section {
            continue;
        }
        if let Some((lhs, _)) = line.split_once('=') {
            let lhs = lhs.trim().trim_matches('"');
            if lhs == key || lhs.ends_with(&format!(".{key}")) {
                return Some(i + 1);
            }
        }
        // Inline tables: `rpm = { tolerence = 1e-8 }`.
        if line.contains('{') && (line.contains(&format!("{key} =")) || line.contains(&format!("{key}="))) {
            return Some(i + 1);
        }
    }
    None
}

/// Deserializes one section's options into `T`.
pub fn decode<T: DeserializeOwned>(section: &str, table: &toml::Table) -> Result<T, ConfigError> {
    toml::Value::Table(table.clone()).try_into().map_err(|e: toml::de::Error| {
        let mut err = ConfigError::new(format!("[{section}] {}", e.message()));
        if let Some(key) = unknown_key(e.message()) {
            err.key = Some(key);
        }
        err
    })
}

/// Removes `key` from `table` and decodes it.
pub fn take<T: DeserializeOwned>(section: &str, table: &mut toml::Table, key: &str) -> Result<Option<T>, ConfigError> {
    match table.remove(key) {
        None => Ok(None),
        Some(value) => value
            .try_into()
            .map(Some)
            .map_err(|e: toml::de::Error| {
                ConfigError::new(format!("[{section}] `{key}`: {}", e.message())).with_key(key)
            }),
    }
}
