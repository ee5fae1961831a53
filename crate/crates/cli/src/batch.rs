//! Manifest-driven processing of many datasets.
//!
//! ```toml
//! [[dataset]]
//! name = "ds09"
//! scans = ["ds09/scan_0.csv", "ds09/scan_1.csv"]
//! log = "ds09/wavemeter.csv"
//! p_c_nw = 30.0
//! p_d_nw = 2500.0
//! out_dir = "out/ds09"
//! ```
//!
//! Relative paths are resolved against the manifest's directory. Each entry
//! is reduced (population conversion needs `scans.f_sat` in the config) and
//! then fitted.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::commands::{fit_cpt_file, reduce_files, FitSummary};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::report::{InputFile, Report};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub dataset: Vec<Entry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Entry {
    pub name: String,
    pub scans: Vec<PathBuf>,
    pub log: PathBuf,
    /// Laser powers at the start of the run, recorded for reference.
    #[serde(default)]
    pub p_c_nw: Option<f64>,
    #[serde(default)]
    pub p_d_nw: Option<f64>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct Outcome {
    pub name: String,
    pub p_c_nw: Option<f64>,
    pub p_d_nw: Option<f64>,
    pub out_dir: String,
    pub exit_code: u8,
    pub error: Option<String>,
    pub summary: Option<FitSummary>,
}

fn run_entry(config: &RunConfig, entry: &Entry, plot: bool) -> Result<FitSummary, CliError> {
    if config.scans.f_sat.is_none() {
        return Err(CliError::Validation("batch runs need scans.f_sat in the config".into()));
    }
    let reduced = entry.out_dir.join("reduced.csv");
    reduce_files(config, &entry.scans, &entry.log, &reduced, plot)?;
    Ok(fit_cpt_file(config, &reduced, &entry.out_dir.join("fit.json"), plot)?.summary)
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Runs every entry with at most `jobs` in flight and writes a summary to
/// `out`. Returns the largest exit code among the entries.
pub fn run(config: &RunConfig, manifest_path: &Path, out: &Path, jobs: usize, plot: bool) -> Result<u8, CliError> {
    let text = std::fs::read_to_string(manifest_path)
        .map_err(|e| CliError::Validation(format!("cannot read manifest {}: {e}", manifest_path.display())))?;
    let mut manifest: Manifest =
        toml::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", manifest_path.display())))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    for e in &mut manifest.dataset {
        e.scans = e.scans.iter().map(|p| resolve(base, p)).collect();
        e.log = resolve(base, &e.log);
        e.out_dir = resolve(base, &e.out_dir);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let outcomes: Vec<Outcome> = pool.install(|| {
        use rayon::prelude::*;
        manifest
            .dataset
            .par_iter()
            .map(|entry| {
                let result = run_entry(config, entry, plot);
                if let Err(e) = &result {
                    log::error!("{}: {e}", entry.name);
                }
                Outcome {
                    name: entry.name.clone(),
                    p_c_nw: entry.p_c_nw,
                    p_d_nw: entry.p_d_nw,
                    out_dir: entry.out_dir.display().to_string(),
                    exit_code: result.as_ref().map_or_else(|e| e.exit_code(), |_| 0),
                    error: result.as_ref().err().map(|e| e.to_string()),
                    summary: result.ok(),
                }
            })
            .collect()
    });
    let code = outcomes.iter().map(|o| o.exit_code).max().unwrap_or(0);
    Report::new("batch", config, vec![InputFile::hash(manifest_path)?], outcomes).write(out)?;
    Ok(code)
}
