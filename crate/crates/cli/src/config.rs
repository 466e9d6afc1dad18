//! Optional TOML config. Command-line flags win over these values, and these
//! win over built-in defaults.
//!
//! ```toml
//! dataset = "data/val.jsonl"
//! seed = 42
//! k = 5
//! stratify = false
//! template = "lm"          # or "lvlm"
//! parse_mode = "strict"    # or "lenient"
//! bleu_smoothing = "none"  # or "add_one"
//! ensemble = "configs/lm5.json"
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use dialemo::metrics::Smoothing;
use dialemo::prompting::{ParseMode, Template};
use serde::Deserialize;

/// Bad invocation: reported with usage text and exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub dataset: Option<PathBuf>,
    pub seed: Option<u64>,
    pub k: Option<usize>,
    pub stratify: Option<bool>,
    template: Option<String>,
    parse_mode: Option<String>,
    bleu_smoothing: Option<String>,
    pub ensemble: Option<PathBuf>,
}

fn parse_enum<T>(key: &str, value: &Option<String>) -> Result<Option<T>, UsageError>
where
    T: std::str::FromStr,
    T::Err: fmt::Display,
{
    value
        .as_deref()
        .map(|v| v.parse::<T>().map_err(|e| UsageError(format!("config `{key}`: {e}"))))
        .transpose()
}

impl FileConfig {
    /// Reads and validates the file. Relative paths inside it are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self, UsageError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("config {}: {e}", path.display())))?;
        let mut config: FileConfig = toml::from_str(&text)
            .map_err(|e| UsageError(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.dataset, &mut config.ensemble].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        config.template()?;
        config.parse_mode()?;
        config.smoothing()?;
        Ok(config)
    }

    pub fn template(&self) -> Result<Option<Template>, UsageError> {
        parse_enum("template", &self.template)
    }

    pub fn parse_mode(&self) -> Result<Option<ParseMode>, UsageError> {
        parse_enum("parse_mode", &self.parse_mode)
    }

    pub fn smoothing(&self) -> Result<Option<Smoothing>, UsageError> {
        parse_enum("bleu_smoothing", &self.bleu_smoothing)
    }
}
