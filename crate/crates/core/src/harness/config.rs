//! Experiment configuration: a TOML file with `[env]` and `[trainer]` tables.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::PolicyKind;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::rl::TrainerConfig;

/// Environment variable naming the root that relative `output_dir`s resolve
/// against.
pub const OUTPUT_ROOT_ENV: &str = "AOI_OUTPUT_ROOT";

pub const DEFAULT_PLOT_WINDOW: usize = 20;

fn default_window() -> usize {
    DEFAULT_PLOT_WINDOW
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub policy_kinds: Vec<PolicyKind>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub plot: bool,
    #[serde(default = "default_window")]
    pub plot_window: usize,
    pub env: EnvConfig,
    pub trainer: TrainerConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = self.seeds.iter().find(|s| !seen.insert(**s)) {
            return Err(Error::config("seeds", format!("seed {dup} listed twice")));
        }
        if self.policy_kinds.is_empty() {
            return Err(Error::config("policy_kinds", "at least one policy kind is required"));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = self.policy_kinds.iter().find(|k| !seen.insert(**k)) {
            return Err(Error::config("policy_kinds", format!("`{dup}` listed twice")));
        }
        if self.plot_window == 0 {
            return Err(Error::config("plot_window", "must be at least 1"));
        }
        self.env.validate()?;
        self.trainer.validate()?;
        Ok(())
    }

    /// `output_dir`, placed under `$AOI_OUTPUT_ROOT` when that is set and the
    /// configured path is relative.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if self.output_dir.is_relative() => PathBuf::from(root).join(&self.output_dir),
            _ => self.output_dir.clone(),
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("experiment config serializes")
    }

    /// Parses, applies `key=value` overrides (dotted keys reach into tables)
    /// and validates.
    pub fn from_toml_str(text: &str, overrides: &[String], origin: &Path) -> Result<Self> {
        let parse_err = |reason: String| Error::Parse {
            path: origin.to_path_buf(),
            reason,
        };
        let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| parse_err(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: ExperimentConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| parse_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a TOML config, or the config embedded in a run manifest when
    /// the path ends in `.json`.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let toml_text = if path.extension().is_some_and(|e| e == "json") {
            let manifest: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?;
            manifest
                .get("config_toml")
                .and_then(|v| v.as_str())
                .ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    reason: "manifest has no `config_toml` entry".into(),
                })?
                .to_string()
        } else {
            text
        };
        Self::from_toml_str(&toml_text, overrides, path)
    }
}

fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(spec, "override must look like key=value"))?;
    let key = key.trim();
    let raw = raw.trim();
    // Parse the right-hand side as a TOML value; bare words become strings.
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let (last, path) = parts.split_last().expect("split yields at least one part");
    let mut table = doc;
    for p in path {
        table = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::config(key, format!("`{p}` is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}
