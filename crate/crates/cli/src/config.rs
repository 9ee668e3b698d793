use std::fs;
use std::path::Path;

use gfm_core::harness::{bundled, ScenarioConfig};

use crate::error::{CliError, Result};

/// A scenario and where it came from.
pub struct Loaded {
    pub cfg: ScenarioConfig,
    pub source: String,
}

/// Reads `arg` as a file path, falling back to the bundled scenario of that
/// name when no such file exists.
pub fn load(arg: &str) -> Result<Loaded> {
    let path = Path::new(arg);
    if path.exists() {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg = ScenarioConfig::from_toml(&text).map_err(|e| CliError::invalid(arg, e))?;
        return Ok(Loaded { cfg, source: path.display().to_string() });
    }
    match bundled(arg) {
        Some(text) => {
            let cfg = ScenarioConfig::from_toml(text).map_err(|e| CliError::invalid(arg, e))?;
            Ok(Loaded { cfg, source: format!("bundled:{arg}") })
        }
        None => Err(CliError::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file and no bundled scenario of that name"),
        )),
    }
}

/// Applies command-line overrides and expands every default.
pub fn resolve(mut cfg: ScenarioConfig, decimate: Option<usize>, source: &str) -> Result<ScenarioConfig> {
    if let Some(n) = decimate {
        cfg.decimation = n;
    }
    cfg.resolved().map_err(|e| CliError::invalid(source, e))
}
