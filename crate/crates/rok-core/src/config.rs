//! Layered run configuration: built-in defaults, overridden by a TOML file,
//! overridden by command-line flags, with per-key provenance.
//!
//! Keys are flat dotted names (`paths.max_hop`, `ranker.damping`, …); the
//! TOML loader accepts both dotted keys and `[section]` tables. Invalid
//! values are rejected when set, naming the offending key.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Result, RokError};
use crate::Score;

/// Where a config value came from; flags beat files beat defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Default,
    File,
    Flag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Mock,
    Http,
}

#[derive(Debug, Clone)]
pub struct PathsConfig {
    pub max_hop: usize,
    pub cap: usize,
    pub directed: bool,
}

#[derive(Debug, Clone)]
pub struct RankerConfig {
    pub damping: Score,
    pub tol: Score,
    pub max_iter: usize,
    pub top_k: usize,
}

#[derive(Debug, Clone)]
pub struct LinkerConfig {
    pub threshold: Score,
}

#[derive(Debug, Clone)]
pub struct LlmConfig {
    pub kind: BackendKind,
    pub endpoint: String,
    pub model: String,
    pub merged_expand_extract: bool,
    pub budget: usize,
    pub mock_file: Option<PathBuf>,
    pub templates: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub micro: bool,
}

/// All module settings plus per-key provenance.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub paths: PathsConfig,
    pub ranker: RankerConfig,
    pub linker: LinkerConfig,
    pub llm: LlmConfig,
    pub eval: EvalConfig,
    provenance: BTreeMap<String, Provenance>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            paths: PathsConfig {
                max_hop: 3,
                cap: 10_000,
                directed: false,
            },
            ranker: RankerConfig {
                damping: 0.85,
                tol: 1e-8,
                max_iter: 100,
                top_k: 5,
            },
            linker: LinkerConfig { threshold: 0.8 },
            llm: LlmConfig {
                kind: BackendKind::Mock,
                endpoint: String::new(),
                model: String::new(),
                merged_expand_extract: false,
                budget: 4,
                mock_file: None,
                templates: None,
            },
            eval: EvalConfig { micro: false },
            provenance: BTreeMap::new(),
        }
    }
}

pub const KNOWN_KEYS: &[&str] = &[
    "paths.max_hop",
    "paths.cap",
    "paths.directed",
    "ranker.damping",
    "ranker.tol",
    "ranker.max_iter",
    "ranker.top_k",
    "linker.threshold",
    "llm.kind",
    "llm.endpoint",
    "llm.model",
    "llm.merged_expand_extract",
    "llm.budget",
    "llm.mock_file",
    "llm.templates",
    "eval.micro",
];

fn bad(key: &str, msg: impl Into<String>) -> RokError {
    RokError::Config {
        key: key.to_string(),
        msg: msg.into(),
    }
}

fn parse_usize(key: &str, value: &str, min: usize) -> Result<usize> {
    let v: usize = value.parse().map_err(|_| {
        bad(
            key,
            format!("expected a non-negative integer, got '{value}'"),
        )
    })?;
    if v < min {
        return Err(bad(key, format!("must be at least {min}, got {v}")));
    }
    Ok(v)
}

fn parse_float(key: &str, value: &str) -> Result<Score> {
    value
        .parse()
        .map_err(|_| bad(key, format!("expected a number, got '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(bad(key, format!("expected true or false, got '{value}'"))),
    }
}

impl RunConfig {
    /// Set one key from its string form; validates and records provenance.
    pub fn set(&mut self, key: &str, value: &str, source: Provenance) -> Result<()> {
        match key {
            "paths.max_hop" => self.paths.max_hop = parse_usize(key, value, 1)?,
            "paths.cap" => self.paths.cap = parse_usize(key, value, 1)?,
            "paths.directed" => self.paths.directed = parse_bool(key, value)?,
            "ranker.damping" => {
                let v = parse_float(key, value)?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(bad(key, format!("must lie in [0,1], got {v}")));
                }
                self.ranker.damping = v;
            }
            "ranker.tol" => {
                let v = parse_float(key, value)?;
                if v <= 0.0 {
                    return Err(bad(key, format!("must be positive, got {v}")));
                }
                self.ranker.tol = v;
            }
            "ranker.max_iter" => self.ranker.max_iter = parse_usize(key, value, 1)?,
            "ranker.top_k" => self.ranker.top_k = parse_usize(key, value, 1)?,
            "linker.threshold" => {
                let v = parse_float(key, value)?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(bad(key, format!("must lie in [0,1], got {v}")));
                }
                self.linker.threshold = v;
            }
            "llm.kind" => {
                self.llm.kind = match value {
                    "mock" => BackendKind::Mock,
                    "http" => BackendKind::Http,
                    _ => {
                        return Err(bad(
                            key,
                            format!("expected 'mock' or 'http', got '{value}'"),
                        ))
                    }
                }
            }
            "llm.endpoint" => self.llm.endpoint = value.to_string(),
            "llm.model" => self.llm.model = value.to_string(),
            "llm.merged_expand_extract" => self.llm.merged_expand_extract = parse_bool(key, value)?,
            "llm.budget" => self.llm.budget = parse_usize(key, value, 1)?,
            "llm.mock_file" => self.llm.mock_file = Some(PathBuf::from(value)),
            "llm.templates" => self.llm.templates = Some(PathBuf::from(value)),
            "eval.micro" => self.eval.micro = parse_bool(key, value)?,
            _ => return Err(bad(key, "unknown config key")),
        }
        self.provenance.insert(key.to_string(), source);
        Ok(())
    }

    pub fn provenance(&self, key: &str) -> Provenance {
        self.provenance
            .get(key)
            .copied()
            .unwrap_or(Provenance::Default)
    }

    /// Apply a TOML file; file values never override flag values.
    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path)?;
        let value: toml::Value = text
            .parse()
            .map_err(|e: toml::de::Error| RokError::Config {
                key: path.display().to_string(),
                msg: e.to_string(),
            })?;
        let table = value
            .as_table()
            .ok_or_else(|| bad(&path.display().to_string(), "expected a TOML table"))?;
        for (section, entry) in table {
            let inner = entry
                .as_table()
                .ok_or_else(|| bad(section, "expected a section of key = value pairs"))?;
            for (name, v) in inner {
                let key = format!("{section}.{name}");
                if self.provenance(&key) == Provenance::Flag {
                    continue;
                }
                let rendered = match v {
                    toml::Value::String(s) => s.clone(),
                    toml::Value::Integer(i) => i.to_string(),
                    toml::Value::Float(f) => f.to_string(),
                    toml::Value::Boolean(b) => b.to_string(),
                    other => return Err(bad(&key, format!("unsupported value type: {other}"))),
                };
                self.set(&key, &rendered, Provenance::File)?;
            }
        }
        Ok(())
    }

    /// Serializable flat view of every key with its value and provenance.
    pub fn describe(&self) -> Vec<KeyDescription> {
        KNOWN_KEYS
            .iter()
            .map(|&key| KeyDescription {
                key: key.to_string(),
                value: self.get(key),
                provenance: self.provenance(key),
            })
            .collect()
    }

    fn get(&self, key: &str) -> String {
        match key {
            "paths.max_hop" => self.paths.max_hop.to_string(),
            "paths.cap" => self.paths.cap.to_string(),
            "paths.directed" => self.paths.directed.to_string(),
            "ranker.damping" => self.ranker.damping.to_string(),
            "ranker.tol" => self.ranker.tol.to_string(),
            "ranker.max_iter" => self.ranker.max_iter.to_string(),
            "ranker.top_k" => self.ranker.top_k.to_string(),
            "linker.threshold" => self.linker.threshold.to_string(),
            "llm.kind" => match self.llm.kind {
                BackendKind::Mock => "mock".to_string(),
                BackendKind::Http => "http".to_string(),
            },
            "llm.endpoint" => self.llm.endpoint.clone(),
            "llm.model" => self.llm.model.clone(),
            "llm.merged_expand_extract" => self.llm.merged_expand_extract.to_string(),
            "llm.budget" => self.llm.budget.to_string(),
            "llm.mock_file" => self
                .llm
                .mock_file
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            "llm.templates" => self
                .llm
                .templates
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            "eval.micro" => self.eval.micro.to_string(),
            _ => String::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct KeyDescription {
    pub key: String,
    pub value: String,
    pub provenance: Provenance,
}
