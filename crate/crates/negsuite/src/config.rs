//! Experiment configs and the resolved-run record written next to outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use negsuite_core::toyworld::ToyConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::{read_text, write_atomic, Provenance};

pub const SEED_ENV: &str = "NEGSUITE_SEED";
pub const RUN_CONFIG_FILE: &str = "config.toml";

/// TOML with the toy keys (`seed`, `V`, `pairs`, `sigma`, `lr`, ...). Unknown keys are rejected.
pub fn parse_toy_config(text: &str, path: &Path) -> Result<ToyConfig> {
    toml::from_str(text).map_err(|e| {
        let line = e.span().map_or(0, |s| text[..s.start].lines().count().max(1));
        Error::format(path, line, e.message().to_string())
    })
}

pub fn read_toy_config(path: &Path) -> Result<ToyConfig> {
    parse_toy_config(&read_text(path)?, path)
}

/// `--seed`, then the config file, then `NEGSUITE_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, config: Option<u64>, env: Option<&str>) -> Result<u64> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match env {
        Some(v) => v.trim().parse().map_err(|_| Error::Input(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        None => Ok(0),
    }
}

pub fn env_seed() -> Option<String> {
    std::env::var(SEED_ENV).ok()
}

/// What a command actually ran with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub tool: String,
    pub command: String,
    pub seed: u64,
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
    pub out: PathBuf,
    /// Command-specific settings as strings, e.g. `k`, `paraphraser`, `strict`.
    #[serde(default)]
    pub options: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub toy: Option<ToyConfig>,
}

impl RunConfig {
    pub fn new(command: &str, seed: u64, out: &Path) -> Self {
        RunConfig {
            tool: Provenance::new(None).tool,
            command: command.into(),
            seed,
            inputs: Vec::new(),
            out: out.to_path_buf(),
            options: BTreeMap::new(),
            toy: None,
        }
    }

    pub fn input(mut self, p: &Path) -> Self {
        self.inputs.push(p.to_path_buf());
        self
    }

    pub fn option(mut self, key: &str, value: impl ToString) -> Self {
        self.options.insert(key.into(), value.to_string());
        self
    }

    pub fn render(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::format(path, 0, e.message().to_string()))
    }

    /// Written into `dir` as `config.toml`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join(RUN_CONFIG_FILE), self.render().as_bytes())
    }

    /// Written next to a single output file as `<file>.config.toml`.
    pub fn write_beside(&self, file: &Path) -> Result<()> {
        let mut name = file.file_name().unwrap_or_default().to_os_string();
        name.push(".config.toml");
        write_atomic(&file.with_file_name(name), self.render().as_bytes())
    }
}
