use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use gfm_core::harness::{ScenarioConfig, ScenarioMetrics, TimeSeries, CSV_SCHEMA_VERSION};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const METRICS_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

pub const TIMESERIES: &str = "timeseries.csv";
pub const METRICS: &str = "metrics.json";
pub const RESOLVED: &str = "resolved.toml";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub core_version: String,
    pub command: String,
    pub status: String,
    pub config: String,
    pub out_dir: String,
    pub wall_time_s: f64,
    /// The fully resolved scenario configuration, as TOML. For sweeps this is
    /// the base configuration before the swept value is applied.
    pub resolved_config: String,
    pub files: Vec<FileEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsDoc {
    pub schema_version: u32,
    pub csv_schema_version: u32,
    pub scenario: String,
    pub samples: usize,
    pub sample_period: f64,
    pub metrics: ScenarioMetrics,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Writes `bytes` to `root/rel` and records its digest.
pub fn write_file(root: &Path, rel: &str, bytes: &[u8]) -> Result<FileEntry> {
    let path = root.join(rel);
    fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
    Ok(FileEntry { path: rel.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 })
}

pub fn metrics_doc(ts: &TimeSeries, cfg: &ScenarioConfig) -> Result<MetricsDoc> {
    let metrics = ScenarioMetrics::compute(ts, cfg).map_err(|e| CliError::invalid("metrics", e))?;
    Ok(MetricsDoc {
        schema_version: METRICS_SCHEMA_VERSION,
        csv_schema_version: CSV_SCHEMA_VERSION,
        scenario: cfg.name.clone(),
        samples: ts.len(),
        sample_period: ts.sample_period,
        metrics,
    })
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("plain data always serializes");
    out.push(b'\n');
    out
}

/// Time series, metrics and resolved configuration of one run, written under
/// `root/prefix`. Metrics are skipped for an empty (diverged at once) run.
pub fn write_run(root: &Path, prefix: &str, cfg: &ScenarioConfig, ts: &TimeSeries) -> Result<(Vec<FileEntry>, Option<MetricsDoc>)> {
    let rel = |name: &str| if prefix.is_empty() { name.to_string() } else { format!("{prefix}/{name}") };
    create_dir(&root.join(prefix))?;
    let mut files = vec![
        write_file(root, &rel(TIMESERIES), &ts.to_csv_bytes())?,
        write_file(root, &rel(RESOLVED), cfg.to_toml().as_bytes())?,
    ];
    let doc = if ts.is_empty() { None } else { Some(metrics_doc(ts, cfg)?) };
    if let Some(doc) = &doc {
        files.push(write_file(root, &rel(METRICS), &to_json(doc))?);
    }
    Ok((files, doc))
}

pub struct ManifestInput<'a> {
    pub command: &'a str,
    pub status: &'a str,
    pub config: &'a str,
    pub resolved: &'a ScenarioConfig,
    pub wall_time: Duration,
    pub files: Vec<FileEntry>,
}

pub fn write_manifest(root: &Path, input: ManifestInput<'_>) -> Result<PathBuf> {
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        core_version: gfm_core::VERSION.to_string(),
        command: input.command.to_string(),
        status: input.status.to_string(),
        config: input.config.to_string(),
        out_dir: root.display().to_string(),
        wall_time_s: input.wall_time.as_secs_f64(),
        resolved_config: input.resolved.to_toml(),
        files: input.files,
    };
    let path = root.join(MANIFEST);
    fs::write(&path, to_json(&manifest)).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Files listed in the manifest at `dir` whose content no longer matches.
pub fn verify_manifest(dir: &Path) -> Result<Vec<String>> {
    let manifest = read_manifest(&dir.join(MANIFEST))?;
    let mut bad = Vec::new();
    for f in &manifest.files {
        match fs::read(dir.join(&f.path)) {
            Ok(bytes) if sha256_hex(&bytes) == f.sha256 && bytes.len() as u64 == f.bytes => {}
            _ => bad.push(f.path.clone()),
        }
    }
    Ok(bad)
}
