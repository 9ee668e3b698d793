//! Command implementations behind the `gfmsim` binary.

pub mod config;
pub mod error;
pub mod output;
pub mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use gfm_core::harness::{run_batch, run_scenario, RunError, ScenarioConfig, TimeSeries};

use crate::error::{CliError, Result};
use crate::output::{write_file, write_manifest, ManifestInput, MetricsDoc};

#[derive(Debug, Parser)]
#[command(name = "gfmsim", version, about = "Grid-forming converter fault ride-through simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one scenario and write its time series, metrics and manifest.
    Run {
        /// Scenario file, or the name of a bundled scenario.
        #[arg(long)]
        config: String,
        #[arg(long)]
        out: PathBuf,
        /// Keep every n-th control sample.
        #[arg(long)]
        decimate: Option<usize>,
    },
    /// Run a scenario once per value of a scalar parameter.
    Sweep {
        #[arg(long)]
        config: String,
        #[arg(long)]
        out: PathBuf,
        /// Dotted path of the swept field; defaults to the scenario's sweep.
        #[arg(long)]
        param: Option<String>,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<f64>,
        /// Concurrent runs; defaults to the number of cores.
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        decimate: Option<usize>,
    },
    /// Render the panels of a recorded time series as SVG.
    Plot {
        /// A `timeseries.csv` written by `run` or `sweep`.
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a scenario and print it with every default expanded.
    Validate {
        #[arg(long)]
        config: String,
    },
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, out, decimate } => cmd_run(&config, &out, decimate),
        Command::Sweep { config, out, param, values, workers, decimate } => {
            cmd_sweep(&config, &out, param.as_deref(), &values, workers, decimate)
        }
        Command::Plot { csv, out } => cmd_plot(&csv, &out),
        Command::Validate { config } => cmd_validate(&config),
    }
}

fn outcome(result: std::result::Result<TimeSeries, RunError>, source: &str) -> Result<(TimeSeries, Option<String>)> {
    match result {
        Ok(ts) => Ok((ts, None)),
        Err(RunError::Diverged(d)) => {
            let msg = format!("diverged at t = {:.6} s: {}", d.t, d.reason);
            Ok((d.prefix, Some(msg)))
        }
        Err(RunError::Config(e)) => Err(CliError::invalid(source, e)),
    }
}

fn describe(doc: &MetricsDoc) -> String {
    let m = &doc.metrics;
    let fm: Vec<String> = m.fm_transitions.iter().map(|t| format!("{:?} at {:.4} s", t.to, t.t)).collect();
    format!(
        "peak |i*| {:.4} pu at {:.4} s, peak |i_g| {:.4} pu at {:.4} s, limiter {}, fault mode: {}",
        m.peak_i_ref.value,
        m.peak_i_ref.t,
        m.peak_i_grid.value,
        m.peak_i_grid.t,
        if m.limiter_engaged { "engaged" } else { "idle" },
        if fm.is_empty() { "never entered".to_string() } else { fm.join(", ") }
    )
}

pub fn cmd_run(config: &str, out: &Path, decimate: Option<usize>) -> Result<()> {
    let loaded = config::load(config)?;
    let cfg = config::resolve(loaded.cfg, decimate, config)?;
    output::create_dir(out)?;
    let start = Instant::now();
    let (ts, diverged) = outcome(run_scenario(&cfg), config)?;
    let wall_time = start.elapsed();
    let (files, doc) = output::write_run(out, "", &cfg, &ts)?;
    let status = if diverged.is_some() { "diverged" } else { "ok" };
    write_manifest(out, ManifestInput { command: "run", status, config: &loaded.source, resolved: &cfg, wall_time, files })?;
    if let Some(msg) = diverged {
        return Err(CliError::Diverged(format!("{}: {msg}; {} samples kept", loaded.source, ts.len())));
    }
    if let Some(doc) = doc {
        println!("{}: {}", loaded.source, describe(&doc));
    }
    println!("wrote {} in {:.2} s", out.display(), wall_time.as_secs_f64());
    Ok(())
}

fn sweep_dir(param: &str, value: f64) -> String {
    format!("{param}={value}")
}

pub fn cmd_sweep(
    config: &str,
    out: &Path,
    param: Option<&str>,
    values: &[f64],
    workers: Option<usize>,
    decimate: Option<usize>,
) -> Result<()> {
    let loaded = config::load(config)?;
    let base = config::resolve(loaded.cfg, decimate, config)?;
    let (param, values) = match (param, &base.sweep) {
        (Some(p), _) if !values.is_empty() => (p.to_string(), values.to_vec()),
        (Some(_), _) => return Err(CliError::Usage("--param needs at least one value in --values".into())),
        (None, Some(s)) if values.is_empty() => (s.param.clone(), s.values.clone()),
        (None, Some(s)) => (s.param.clone(), values.to_vec()),
        (None, None) => return Err(CliError::Usage(format!("{config} has no [sweep] section; pass --param and --values"))),
    };
    if values.is_empty() {
        return Err(CliError::Usage("sweep has no values".into()));
    }
    // Every override is checked before the first run starts.
    let cfgs = values
        .iter()
        .map(|&v| {
            let mut cfg = base.with_override(&param, v).map_err(|e| CliError::invalid(config, e))?;
            cfg.sweep = None;
            config::resolve(cfg, None, config)
        })
        .collect::<Result<Vec<ScenarioConfig>>>()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(match workers {
            Some(0) => return Err(CliError::Usage("--workers must be at least 1".into())),
            Some(n) => n,
            None => 0,
        })
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    output::create_dir(out)?;
    let start = Instant::now();
    let results = pool.install(|| run_batch(&cfgs));
    let wall_time = start.elapsed();

    let mut files = Vec::new();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for ((value, cfg), result) in values.iter().zip(&cfgs).zip(results) {
        let (ts, diverged) = outcome(result, config)?;
        let dir = sweep_dir(&param, *value);
        let (written, doc) = output::write_run(out, &dir, cfg, &ts)?;
        files.extend(written);
        if let Some(msg) = diverged {
            failures.push(format!("{param} = {value}: {msg}"));
        }
        rows.push(SweepRow::new(&param, *value, doc.as_ref()));
    }
    let table = sweep_table(&rows)?;
    files.push(write_file(out, "sweep.csv", &table)?);
    let status = if failures.is_empty() { "ok" } else { "diverged" };
    write_manifest(out, ManifestInput { command: "sweep", status, config: &loaded.source, resolved: &base, wall_time, files })?;

    print!("{}", String::from_utf8_lossy(&table));
    if !failures.is_empty() {
        return Err(CliError::Diverged(failures.join("; ")));
    }
    println!("wrote {} runs to {} in {:.2} s", rows.len(), out.display(), wall_time.as_secs_f64());
    Ok(())
}

#[derive(Debug, serde::Serialize)]
struct SweepRow {
    param: String,
    value: f64,
    peak_i_ref: Option<f64>,
    peak_i_grid: Option<f64>,
    i_q_recovery_overshoot: Option<f64>,
    i_d_settling_after_clear: Option<f64>,
    i_q_settling_after_clear: Option<f64>,
    p_final: Option<f64>,
    fm_exit_time: Option<f64>,
}

impl SweepRow {
    fn new(param: &str, value: f64, doc: Option<&MetricsDoc>) -> Self {
        let m = doc.map(|d| &d.metrics);
        Self {
            param: param.to_string(),
            value,
            peak_i_ref: m.map(|m| m.peak_i_ref.value),
            peak_i_grid: m.map(|m| m.peak_i_grid.value),
            i_q_recovery_overshoot: m.and_then(|m| m.i_q_recovery_overshoot),
            i_d_settling_after_clear: m.and_then(|m| m.i_d_settling_after_clear),
            i_q_settling_after_clear: m.and_then(|m| m.i_q_settling_after_clear),
            p_final: m.map(|m| m.p_final),
            fm_exit_time: m.and_then(|m| m.fm_transitions.iter().rev().find(|t| !t.to.is_fault()).map(|t| t.t)),
        }
    }
}

fn sweep_table(rows: &[SweepRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Usage(format!("sweep table: {e}")))?;
    }
    w.into_inner().map_err(|e| CliError::Usage(format!("sweep table: {e}")))
}

pub fn cmd_plot(csv: &Path, out: &Path) -> Result<()> {
    let file = fs::File::open(csv).map_err(|e| CliError::io(csv, e))?;
    let ts = TimeSeries::read_csv(std::io::BufReader::new(file))
        .map_err(|e| CliError::invalid(csv.display().to_string(), e))?;
    output::create_dir(out)?;
    for f in plot::plot_all(&ts, out)? {
        println!("{}", out.join(&f.path).display());
    }
    Ok(())
}

pub fn cmd_validate(config: &str) -> Result<()> {
    let loaded = config::load(config)?;
    let cfg = config::resolve(loaded.cfg, None, config)?;
    if let Some(s) = &cfg.sweep {
        cfg.with_override(&s.param, s.values.first().copied().unwrap_or_default())
            .map_err(|e| CliError::invalid(config, e))?;
    }
    print!("{}", cfg.to_toml());
    eprintln!("{}: valid", loaded.source);
    Ok(())
}
