use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use driftflow::{DatasetName, DriftKind};

#[derive(Debug, Parser)]
#[command(name = "driftflow", version, about = "Drift-field particle flows, generator training and verification checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an explicit Euler particle flow toward a dataset.
    Flow(FlowArgs),
    /// Train a residual-MLP generator on drifted targets.
    Train(TrainArgs),
    /// Run numerical verification checks and print a JSON report.
    Verify(VerifyArgs),
    /// Run a grid of flows and aggregate final MMD² values.
    Sweep(SweepArgs),
    /// Export dataset samples as CSV and SVG.
    Datasets(DatasetsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Ours,
    Da2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationArg {
    Relu,
    Tanh,
}

pub fn parse_drift(s: &str) -> Result<DriftKind, String> {
    s.parse().map_err(|e: driftflow::Error| e.to_string())
}

pub fn parse_dataset(s: &str) -> Result<DatasetName, String> {
    s.parse().map_err(|e: driftflow::Error| e.to_string())
}

pub fn parse_positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|e| format!("'{s}' is not a number: {e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be a finite positive number, got {s}"))
    }
}

pub fn parse_nonnegative(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|e| format!("'{s}' is not a number: {e}"))?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be a finite nonnegative number, got {s}"))
    }
}

pub fn parse_count(s: &str) -> Result<usize, String> {
    let v: usize = s.trim().parse().map_err(|e| format!("'{s}' is not a count: {e}"))?;
    if v == 0 {
        Err("must be at least 1".into())
    } else {
        Ok(v)
    }
}

/// Solver and estimator knobs shared by every drift-driven command.
#[derive(Debug, Clone, Args)]
pub struct DriftTuning {
    /// Comma-separated kernel widths; makes the mmd kernel a sum of Gibbs kernels.
    #[arg(long, value_delimiter = ',', value_parser = parse_positive)]
    pub bandwidths: Option<Vec<f64>>,
    /// Exclude self-affinities from the proxy repulsion term.
    #[arg(long)]
    pub ignore_self: bool,
    /// Monte Carlo samples per query for smoothed_kl.
    #[arg(long, value_parser = parse_count)]
    pub mc_samples: Option<usize>,
    /// Random projection directions for sw.
    #[arg(long, value_parser = parse_count)]
    pub slices: Option<usize>,
    /// Iteration cap for sinkhorn_exact.
    #[arg(long, value_parser = parse_count)]
    pub sinkhorn_iters: Option<usize>,
    /// Marginal tolerance for sinkhorn_exact.
    #[arg(long, value_parser = parse_positive)]
    pub sinkhorn_tol: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct DatasetOpts {
    #[arg(long, value_parser = parse_dataset)]
    pub dataset: Option<DatasetName>,
    /// Additive noise std (atom jitter for two_delta_mixture).
    #[arg(long, value_parser = parse_nonnegative)]
    pub noise: Option<f64>,
    /// Atom position D for two_delta_mixture.
    #[arg(long, value_parser = parse_positive)]
    pub half_gap: Option<f64>,
    /// Weight of the atom at −D for two_delta_mixture.
    #[arg(long)]
    pub weight_left: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct FlowArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_drift)]
    pub drift: Option<DriftKind>,
    /// Proxy variant when --drift is sinkhorn_proxy.
    #[arg(long, value_enum)]
    pub variant: Option<Variant>,
    #[arg(long, value_parser = parse_positive)]
    pub tau: Option<f64>,
    #[command(flatten)]
    pub tuning: DriftTuning,
    #[command(flatten)]
    pub data: DatasetOpts,
    /// Particles in both the model and the data batch.
    #[arg(long, value_parser = parse_count)]
    pub n: Option<usize>,
    #[arg(long, value_parser = parse_positive)]
    pub eta: Option<f64>,
    #[arg(long, value_parser = parse_count)]
    pub steps: Option<usize>,
    #[arg(long, value_parser = parse_count)]
    pub snapshot_every: Option<usize>,
    /// Std of the Gaussian initial particle cloud.
    #[arg(long, value_parser = parse_positive)]
    pub init_std: Option<f64>,
    /// Keep the step-0 data batch for the whole run instead of resampling.
    #[arg(long)]
    pub fixed_target: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_drift)]
    pub drift: Option<DriftKind>,
    #[arg(long, value_enum)]
    pub variant: Option<Variant>,
    #[arg(long, value_parser = parse_positive)]
    pub tau: Option<f64>,
    #[command(flatten)]
    pub tuning: DriftTuning,
    #[command(flatten)]
    pub data: DatasetOpts,
    #[arg(long, value_parser = parse_count)]
    pub n_data: Option<usize>,
    #[arg(long, value_parser = parse_count)]
    pub n_model: Option<usize>,
    #[arg(long, value_parser = parse_positive)]
    pub eta: Option<f64>,
    #[arg(long, value_parser = parse_positive)]
    pub lr: Option<f64>,
    #[arg(long, value_parser = parse_count)]
    pub steps: Option<usize>,
    #[arg(long, value_parser = parse_count)]
    pub width: Option<usize>,
    #[arg(long)]
    pub blocks: Option<usize>,
    #[arg(long, value_enum)]
    pub activation: Option<ActivationArg>,
    #[arg(long, value_parser = parse_count)]
    pub eval_every: Option<usize>,
    /// Must be a multiple of --eval-every.
    #[arg(long, value_parser = parse_count)]
    pub checkpoint_every: Option<usize>,
    /// Held-out data and evaluation noise size.
    #[arg(long, value_parser = parse_count)]
    pub holdout: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// Comma-separated check names, or `all`.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    pub suite: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write report.json and manifest.json here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', value_parser = parse_drift)]
    pub drifts: Option<Vec<DriftKind>>,
    #[arg(long, value_delimiter = ',', value_parser = parse_positive)]
    pub taus: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', value_parser = parse_dataset)]
    pub datasets: Option<Vec<DatasetName>>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[command(flatten)]
    pub tuning: DriftTuning,
    #[arg(long, value_parser = parse_count)]
    pub n: Option<usize>,
    #[arg(long, value_parser = parse_positive)]
    pub eta: Option<f64>,
    #[arg(long, value_parser = parse_count)]
    pub steps: Option<usize>,
    #[arg(long, value_parser = parse_positive)]
    pub init_std: Option<f64>,
    #[arg(long)]
    pub fixed_target: bool,
    /// Also tabulate the two-atom failure-mode velocities.
    #[arg(long)]
    pub two_delta: bool,
    /// τ grid for the two-atom table.
    #[arg(long, value_delimiter = ',', value_parser = parse_positive)]
    pub two_delta_taus: Option<Vec<f64>>,
    #[arg(long, value_parser = parse_positive)]
    pub two_delta_gap: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Worker threads for grid cells; results do not depend on this.
    #[arg(long, value_parser = parse_count)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct DatasetsArgs {
    /// Dataset names, or `all`.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    pub dataset: Vec<String>,
    #[arg(long, value_parser = parse_count, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, value_parser = parse_nonnegative)]
    pub noise: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}
