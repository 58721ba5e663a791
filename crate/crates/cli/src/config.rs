use std::fs;
use std::path::{Path, PathBuf};

use cpwloss::geometry::StackConfig;
use serde::{Deserialize, Serialize};

use crate::report::{CliError, CliResult};

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "CPWLOSS_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Text,
    Json,
}

/// Values read from a TOML config file. Command-line flags take precedence.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub format: Option<Format>,
    pub level: Option<u32>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub deposition: Option<String>,
    pub treatment: Option<String>,
    /// Stack keys overlaid on the selected preset.
    pub stack: Option<StackConfig>,
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))
    }

    /// Explicit path first, then the environment variable; no file is fine.
    pub fn resolve(explicit: Option<&Path>) -> CliResult<(Self, Option<PathBuf>)> {
        let path = explicit
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from));
        match path {
            Some(p) => Ok((Self::load(&p)?, Some(p))),
            None => Ok((Self::default(), None)),
        }
    }
}

/// Parse `key=value,key=value` into numbers, keeping the given order.
pub fn parse_assignments(text: &str) -> CliResult<Vec<(String, f64)>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| CliError::Input(format!("expected key=value, got `{item}`")))?;
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| CliError::Input(format!("`{}`: not a number", value.trim())))?;
            Ok((key.trim().to_ascii_lowercase(), v))
        })
        .collect()
}

/// Turn `key=value` overrides into a stack overlay. Values that are not valid
/// TOML (such as `5 um`) are taken as strings.
pub fn stack_overrides(items: &[String]) -> CliResult<StackConfig> {
    let mut doc = String::new();
    for item in items {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| CliError::Input(format!("expected key=value, got `{item}`")))?;
        let (key, value) = (key.trim(), value.trim());
        let line = format!("{key} = {value}\n");
        if toml::from_str::<toml::Table>(&line).is_ok() {
            doc.push_str(&line);
        } else {
            doc.push_str(&format!("{key} = {}\n", toml::Value::String(value.to_string())));
        }
    }
    toml::from_str(&doc).map_err(|e| CliError::Input(format!("stack override: {e}")))
}
