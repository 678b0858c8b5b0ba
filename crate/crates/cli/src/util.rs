//! Output-path resolution and file helpers.

use std::fs;
use std::path::{Path, PathBuf};

use crate::CmdError;

/// Environment variable overriding every output directory.
pub const OUT_DIR_ENV: &str = "DMMSTAB_OUT";

/// Precedence: environment variable, then config file, then flag.
pub fn resolve_out_dir(flag: &Path, config_value: Option<PathBuf>) -> PathBuf {
    if let Ok(env_dir) = std::env::var(OUT_DIR_ENV) {
        if !env_dir.is_empty() {
            return PathBuf::from(env_dir);
        }
    }
    config_value.unwrap_or_else(|| flag.to_path_buf())
}

pub fn write_text(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CmdError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

pub fn read_config_overrides<T: serde::de::DeserializeOwned>(
    path: &Path,
) -> Result<T, CmdError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CmdError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CmdError::Usage(format!("bad config {}: {e}", path.display())))
}

/// One-line JSON echo of a resolved config, for CSV comment headers.
pub fn config_comment<T: serde::Serialize>(config: &T) -> String {
    format!("config: {}", serde_json::to_string(config).expect("config serializes"))
}

pub fn to_pretty_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes")
}
