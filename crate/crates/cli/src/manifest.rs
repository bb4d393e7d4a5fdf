use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use driftflow::datasets as ds;
use driftflow::streams;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};

#[derive(Debug, Serialize)]
struct OutputEntry {
    path: String,
    bytes: u64,
}

#[derive(Debug, Serialize)]
struct RunManifest {
    command: Vec<String>,
    config: Value,
    seeds: Value,
    build: String,
    started_unix: f64,
    wall_clock_seconds: f64,
    status: String,
    dataset_constants: Value,
    outputs: Vec<OutputEntry>,
}

/// Tracks a run directory's outputs and writes `manifest.json` last.
pub struct Recorder {
    root: PathBuf,
    outputs: Vec<PathBuf>,
    started: SystemTime,
    clock: Instant,
}

impl Recorder {
    pub fn new(root: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            outputs: Vec::new(),
            started: SystemTime::now(),
            clock: Instant::now(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Path under the run directory, creating parent directories.
    pub fn path(&self, rel: &str) -> CliResult<PathBuf> {
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent)?;
        }
        Ok(p)
    }

    /// Creates `rel` and registers it as an output.
    pub fn create(&mut self, rel: &str) -> CliResult<std::io::BufWriter<std::fs::File>> {
        let p = self.path(rel)?;
        let f = std::fs::File::create(&p)?;
        self.outputs.push(p);
        Ok(std::io::BufWriter::new(f))
    }

    pub fn write_text(&mut self, rel: &str, text: &str) -> CliResult<()> {
        let p = self.path(rel)?;
        std::fs::write(&p, text)?;
        self.outputs.push(p);
        Ok(())
    }

    pub fn finish<C: Serialize>(self, config: &C, seed: Option<u64>, status: &str) -> CliResult<()> {
        let mut outputs = Vec::with_capacity(self.outputs.len());
        for p in &self.outputs {
            let meta = std::fs::metadata(p)
                .map_err(|e| CliError::Io(std::io::Error::new(e.kind(), format!("missing output {}: {e}", p.display()))))?;
            let rel = p.strip_prefix(&self.root).unwrap_or(p);
            outputs.push(OutputEntry {
                path: rel.to_string_lossy().replace('\\', "/"),
                bytes: meta.len(),
            });
        }
        let manifest = RunManifest {
            command: std::env::args().collect(),
            config: serde_json::to_value(config)?,
            seeds: json!({
                "master": seed,
                "streams": {
                    "data": streams::DATA,
                    "noise": streams::NOISE,
                    "drift": streams::DRIFT,
                    "init": streams::INIT,
                    "holdout": streams::HOLDOUT,
                    "eval": streams::EVAL,
                },
            }),
            build: format!("driftflow {}", env!("CARGO_PKG_VERSION")),
            started_unix: self.started.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0),
            wall_clock_seconds: self.clock.elapsed().as_secs_f64(),
            status: status.to_string(),
            dataset_constants: dataset_constants(),
            outputs,
        };
        let text = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(self.root.join("manifest.json"), text + "\n")?;
        Ok(())
    }
}

fn dataset_constants() -> Value {
    let noise: serde_json::Map<String, Value> = ds::DatasetName::ALL
        .iter()
        .map(|n| (n.as_str().to_string(), json!(n.default_noise())))
        .collect();
    json!({
        "default_noise": noise,
        "eight_gaussians_radius": ds::EIGHT_GAUSSIANS_RADIUS,
        "pinwheel_arms": ds::PINWHEEL_ARMS,
        "pinwheel_radial_std": ds::PINWHEEL_RADIAL_STD,
        "pinwheel_tangential_std": ds::PINWHEEL_TANGENTIAL_STD,
        "pinwheel_rate": ds::PINWHEEL_RATE,
        "circles_inner_factor": ds::CIRCLES_INNER_FACTOR,
        "swiss_roll_scale": ds::SWISS_ROLL_SCALE,
    })
}
