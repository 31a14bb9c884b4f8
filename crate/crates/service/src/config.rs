//! TOML configuration.
//!
//! ```toml
//! catalog = "data/catalog.jsonl"
//! store_dir = "store"
//! r_default = 200
//! bind = "127.0.0.1:8080"
//!
//! [[spaces]]
//! path = "data/visual.jsonl"
//!
//! [[spaces]]
//! path = "data/multimodal.vaem"   # binary files need space and model
//! space = "multimodal"
//! model = "blip-base"
//!
//! [arm_spaces]
//! hitl_visual = "visual"
//! hitl_multimodal = "multimodal"
//!
//! [sentiment]
//! lexicon = "lexicon.txt"          # or: command = ["python3", "classify.py"]
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use easel_core::curation::Arm;
use easel_core::recsys::DEFAULT_R;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSource {
    pub path: PathBuf,
    #[serde(default)]
    pub space: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SentimentConfig {
    #[serde(default)]
    pub lexicon: Option<PathBuf>,
    #[serde(default)]
    pub command: Option<Vec<String>>,
    #[serde(default)]
    pub id: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub catalog: PathBuf,
    #[serde(default)]
    pub spaces: Vec<SpaceSource>,
    #[serde(default = "default_r")]
    pub r_default: usize,
    pub store_dir: PathBuf,
    #[serde(default = "default_bind")]
    pub bind: String,
    #[serde(default)]
    pub arm_spaces: BTreeMap<Arm, String>,
    #[serde(default)]
    pub sentiment: SentimentConfig,
    /// JSON theme codebook; the built-in ten themes when absent.
    #[serde(default)]
    pub codebook: Option<PathBuf>,
    /// Prompts shown with each painting; the built-in pair when absent.
    #[serde(default)]
    pub prompts: Option<Vec<String>>,
}

fn default_r() -> usize {
    DEFAULT_R
}

fn default_bind() -> String {
    "127.0.0.1:8080".into()
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|message| ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        })
    }

    /// Parses `text`, resolving relative paths against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, String> {
        let mut config: Config = toml::from_str(text).map_err(|e| e.to_string())?;
        if config.r_default == 0 {
            return Err("r_default must be at least 1".into());
        }
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut config.catalog);
        resolve(&mut config.store_dir);
        for s in &mut config.spaces {
            resolve(&mut s.path);
        }
        if let Some(p) = &mut config.sentiment.lexicon {
            resolve(p);
        }
        if let Some(p) = &mut config.codebook {
            resolve(p);
        }
        if config.sentiment.lexicon.is_some() && config.sentiment.command.is_some() {
            return Err("sentiment: set either lexicon or command, not both".into());
        }
        if matches!(&config.sentiment.command, Some(c) if c.is_empty()) {
            return Err("sentiment.command must name a program".into());
        }
        Ok(config)
    }
}
