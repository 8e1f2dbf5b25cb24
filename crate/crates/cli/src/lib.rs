//! Scenario runner for the pseudo-harmonic heat flow simulator.

pub mod config;
pub mod plots;
pub mod scenarios;

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use subrh_core::diagnostics::Verdict;
use subrh_core::fields::{sidecar_path, write_snapshot, SnapshotError};

pub use config::{ConfigError, RunConfig, Scenario};
pub use plots::{emit_plots, PlotError};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error(transparent)]
    Plot(#[from] PlotError),
}

impl RunError {
    /// 2 for configuration problems, 1 for everything that happens at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub scenario: Scenario,
    pub seed: u64,
    pub grid_n: usize,
    pub dt: f64,
    pub samples: usize,
    pub aborted: bool,
    pub error: Option<String>,
    pub all_pass: bool,
    pub verdicts: Vec<Verdict>,
    pub metrics: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub out_dir: PathBuf,
    pub summary: Summary,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if !self.summary.aborted && self.summary.all_pass {
            0
        } else {
            1
        }
    }
}

/// SHA-256 over `"blob <len>\0" ‖ bytes`, as git hashes file contents.
pub fn git_blob_sha256(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    std::fs::write(path, bytes).map_err(|source| RunError::Io { path: path.to_path_buf(), source })
}

fn json_pretty<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serialisable");
    s.push('\n');
    s.into_bytes()
}

/// Validates `cfg`, runs its scenario and writes every output under `cfg.out_dir`.
///
/// `source` is the config file text as given, hashed into the manifest next to the
/// canonical echo. Runtime aborts still write the partial samples and a summary.
pub fn run(cfg: &RunConfig, source: Option<&str>) -> Result<Outcome, RunError> {
    cfg.validate()?;
    let out = cfg.out_dir.clone();
    std::fs::create_dir_all(&out).map_err(|source| RunError::Io { path: out.clone(), source })?;

    let res = scenarios::run_scenario(cfg);
    let mut hashes = std::collections::BTreeMap::new();

    let records_path = out.join("records.csv");
    let csv = res.samples.to_csv();
    write(&records_path, csv.as_bytes())?;
    hashes.insert("records.csv".to_string(), git_blob_sha256(csv.as_bytes()));

    if cfg.snapshots && !res.snapshots.is_empty() {
        let dir = out.join("snapshots");
        std::fs::create_dir_all(&dir).map_err(|source| RunError::Io { path: dir.clone(), source })?;
        for s in &res.snapshots {
            let p = dir.join(format!("{}.bin", s.name));
            write_snapshot(&s.u, &p, s.t, cfg.scenario.as_str(), cfg.seed)?;
            for f in [p.clone(), sidecar_path(&p)] {
                let bytes = std::fs::read(&f).map_err(|source| RunError::Io { path: f.clone(), source })?;
                let rel = f.strip_prefix(&out).unwrap_or(&f).display().to_string();
                hashes.insert(rel, git_blob_sha256(&bytes));
            }
        }
    }

    let summary = Summary {
        scenario: cfg.scenario,
        seed: cfg.seed,
        grid_n: cfg.grid_n,
        dt: cfg.dt()?,
        samples: res.samples.len(),
        aborted: res.error.is_some(),
        error: res.error.clone(),
        all_pass: res.error.is_none() && res.verdicts.iter().all(|v| v.pass),
        verdicts: res.verdicts,
        metrics: res.metrics,
    };
    let summary_bytes = json_pretty(&summary);
    write(&out.join("summary.json"), &summary_bytes)?;
    hashes.insert("summary.json".to_string(), git_blob_sha256(&summary_bytes));

    if !res.samples.is_empty() {
        emit_plots(&records_path, &out.join("plots"))?;
    }

    let text = cfg.to_text();
    let manifest = serde_json::json!({
        "tool": "subrh",
        "versions": {
            "subrh-cli": env!("CARGO_PKG_VERSION"),
            "subrh-core": subrh_core::VERSION,
        },
        "scenario": cfg.scenario,
        "config": cfg,
        "config_text": text,
        "config_hash": git_blob_sha256(text.as_bytes()),
        "source_config_hash": source.map(|s| git_blob_sha256(s.as_bytes())),
        "outputs": hashes,
    });
    write(&out.join("manifest.json"), &json_pretty(&manifest))?;
    Ok(Outcome { out_dir: out, summary })
}
