//! Flat `key = value` configuration files with optional `[section]` headers.
//!
//! Keys inside a section are addressed as `section.key`. `#` starts a comment.
//! Every value remembers its line so validation errors can point at it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("config line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    /// `line` is 0 for values that came from flags or defaults.
    #[error("config{}: {key}: {msg}", at_line(*line))]
    Invalid { line: usize, key: String, msg: String },
    #[error("config: unknown key {key} (line {line})")]
    UnknownKey { line: usize, key: String },
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
}

fn at_line(line: usize) -> String {
    if line == 0 {
        String::new()
    } else {
        format!(" line {line}")
    }
}

#[derive(Clone, Debug, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, (String, usize)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut kv = KeyValues::default();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                    line: line_no,
                    msg: format!("unterminated section header {line:?}"),
                })?;
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: line_no,
                msg: format!("expected key = value, got {line:?}"),
            })?;
            let key = if section.is_empty() {
                k.trim().to_string()
            } else {
                format!("{section}.{}", k.trim())
            };
            if kv.entries.contains_key(&key) {
                return Err(ConfigError::Syntax {
                    line: line_no,
                    msg: format!("duplicate key {key}"),
                });
            }
            kv.entries.insert(key, (v.trim().to_string(), line_no));
        }
        Ok(kv)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), (value.to_string(), 0));
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    pub fn line(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |(_, l)| *l)
    }

    /// Parse `key` if present.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => v.parse::<T>().map(Some).map_err(|e| ConfigError::Invalid {
                line: *line,
                key: key.to_string(),
                msg: format!("{v:?}: {e}"),
            }),
        }
    }

    /// Comma-separated list.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let Some((v, line)) = self.entries.get(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(|p| {
                p.trim().parse::<T>().map_err(|e| ConfigError::Invalid {
                    line: *line,
                    key: key.to_string(),
                    msg: format!("{p:?}: {e}"),
                })
            })
            .collect::<Result<Vec<T>, _>>()
            .map(Some)
    }

    pub fn invalid(&self, key: &str, msg: impl Into<String>) -> ConfigError {
        ConfigError::Invalid {
            line: self.line(key),
            key: key.to_string(),
            msg: msg.into(),
        }
    }

    /// Fail on the first key not in `known`.
    pub fn reject_unknown(&self, known: &[&str]) -> Result<(), ConfigError> {
        let mut stray: Vec<(&String, usize)> = self
            .entries
            .iter()
            .filter(|(k, _)| !known.contains(&k.as_str()))
            .map(|(k, (_, l))| (k, *l))
            .collect();
        stray.sort_by_key(|(_, l)| *l);
        match stray.first() {
            Some((k, l)) => Err(ConfigError::UnknownKey {
                line: *l,
                key: k.to_string(),
            }),
            None => Ok(()),
        }
    }

    /// Render with sections grouped by key prefix.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut current: Option<&str> = None;
        let mut top: Vec<(&str, &str)> = Vec::new();
        let mut sectioned: Vec<(&str, &str, &str)> = Vec::new();
        for (k, (v, _)) in &self.entries {
            match k.split_once('.') {
                Some((s, rest)) => sectioned.push((s, rest, v)),
                None => top.push((k, v)),
            }
        }
        for (k, v) in top {
            let _ = writeln!(out, "{k} = {v}");
        }
        for (s, k, v) in sectioned {
            if current != Some(s) {
                let _ = writeln!(out, "\n[{s}]");
                current = Some(s);
            }
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}
