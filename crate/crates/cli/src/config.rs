//! TOML config files and flag-over-file-over-default resolution.
//!
//! ```toml
//! [drift]
//! kind = "mmd"
//! tau = 0.2
//! bandwidths = [0.05, 0.2, 0.8]
//!
//! [dataset]
//! name = "moons"
//!
//! [flow]
//! n = 256
//! eta = 0.1
//! steps = 500
//! seed = 7
//! ```

use std::path::Path;

use driftflow::datasets::TwoDeltaParams;
use driftflow::generator::{Activation, Architecture, TrainConfig};
use driftflow::flow::FlowConfig;
use driftflow::{DatasetName, DatasetSpec, DriftConfig, DriftKind};
use serde::{Deserialize, Serialize};

use crate::cli::{ActivationArg, DatasetOpts, DriftTuning, FlowArgs, SweepArgs, TrainArgs, Variant};
use crate::error::{CliError, CliResult};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub drift: DriftSection,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub flow: FlowSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSection {
    pub kind: Option<String>,
    pub variant: Option<Variant>,
    pub tau: Option<f64>,
    pub bandwidths: Option<Vec<f64>>,
    pub ignore_self: Option<bool>,
    pub mc_samples: Option<usize>,
    pub n_slices: Option<usize>,
    pub sinkhorn_iters: Option<usize>,
    pub sinkhorn_tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub name: Option<String>,
    pub noise: Option<f64>,
    pub half_gap: Option<f64>,
    pub weight_left: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    pub n: Option<usize>,
    pub eta: Option<f64>,
    pub steps: Option<usize>,
    pub snapshot_every: Option<usize>,
    pub init_std: Option<f64>,
    pub fixed_target: Option<bool>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub n_data: Option<usize>,
    pub n_model: Option<usize>,
    pub eta: Option<f64>,
    pub lr: Option<f64>,
    pub steps: Option<usize>,
    pub width: Option<usize>,
    pub blocks: Option<usize>,
    pub activation: Option<ActivationArg>,
    pub eval_every: Option<usize>,
    pub checkpoint_every: Option<usize>,
    pub holdout: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub drifts: Option<Vec<String>>,
    pub taus: Option<Vec<f64>>,
    pub datasets: Option<Vec<String>>,
    pub seeds: Option<Vec<u64>>,
    pub n: Option<usize>,
    pub eta: Option<f64>,
    pub steps: Option<usize>,
    pub init_std: Option<f64>,
    pub fixed_target: Option<bool>,
    pub two_delta: Option<bool>,
    pub two_delta_taus: Option<Vec<f64>>,
    pub two_delta_gap: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub threads: Option<usize>,
}

pub fn load(path: Option<&Path>) -> CliResult<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
            Ok(toml::from_str(&text)?)
        }
    }
}

fn parse_name<T: std::str::FromStr<Err = driftflow::Error>>(s: &str) -> CliResult<T> {
    Ok(s.parse()?)
}

fn positive(name: &str, v: f64) -> CliResult<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Config(format!("{name} must be > 0, got {v}")))
    }
}

fn at_least_one(name: &str, v: usize) -> CliResult<usize> {
    if v == 0 {
        Err(CliError::Config(format!("{name} must be >= 1")))
    } else {
        Ok(v)
    }
}

pub const DEFAULT_TAU: f64 = 0.2;

/// Builds a drift config for `kind` with tuning taken from flags, then file.
pub fn drift_config(kind: DriftKind, tau: f64, tuning: &DriftTuning, file: &DriftSection) -> CliResult<DriftConfig> {
    let mut cfg = DriftConfig::new(kind, positive("tau", tau)?);
    if let Some(bw) = tuning.bandwidths.clone().or_else(|| file.bandwidths.clone()) {
        for &w in &bw {
            positive("bandwidth", w)?;
        }
        cfg = cfg.with_bandwidths(bw);
    }
    cfg.ignore_self = tuning.ignore_self || file.ignore_self.unwrap_or(false);
    if let Some(v) = tuning.mc_samples.or(file.mc_samples) {
        cfg.mc_samples = at_least_one("mc_samples", v)?;
    }
    if let Some(v) = tuning.slices.or(file.n_slices) {
        cfg.n_slices = at_least_one("n_slices", v)?;
    }
    if let Some(v) = tuning.sinkhorn_iters.or(file.sinkhorn_iters) {
        cfg.sinkhorn_iters = at_least_one("sinkhorn_iters", v)?;
    }
    if let Some(v) = tuning.sinkhorn_tol.or(file.sinkhorn_tol) {
        cfg.sinkhorn_tol = positive("sinkhorn_tol", v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Resolves `--drift` plus `--variant`; `da2` selects the DA2 proxy.
fn drift_kind(flag: Option<DriftKind>, variant: Option<Variant>, file: &DriftSection) -> CliResult<DriftKind> {
    let kind = match flag {
        Some(k) => k,
        None => match &file.kind {
            Some(s) => parse_name(s)?,
            None => return Err(CliError::Config("no drift kind given (use --drift or [drift].kind)".into())),
        },
    };
    match (kind, variant.or(file.variant)) {
        (_, None) | (DriftKind::SinkhornProxy | DriftKind::SinkhornProxyDa2, Some(Variant::Ours)) => Ok(kind),
        (DriftKind::SinkhornProxy | DriftKind::SinkhornProxyDa2, Some(Variant::Da2)) => Ok(DriftKind::SinkhornProxyDa2),
        (k, Some(v)) => Err(CliError::Config(format!(
            "--variant {v:?} only applies to sinkhorn_proxy, not {k}"
        ))),
    }
}

fn dataset_spec(opts: &DatasetOpts, file: &DatasetSection) -> CliResult<DatasetSpec> {
    let name = match opts.dataset {
        Some(n) => n,
        None => match &file.name {
            Some(s) => parse_name(s)?,
            None => DatasetName::Moons,
        },
    };
    let mut spec = DatasetSpec::new(name);
    if let Some(noise) = opts.noise.or(file.noise) {
        spec = spec.with_noise(noise);
    }
    let gap = opts.half_gap.or(file.half_gap);
    let weight = opts.weight_left.or(file.weight_left);
    if name == DatasetName::TwoDeltaMixture {
        let d = TwoDeltaParams::default();
        spec.two_delta = Some(TwoDeltaParams {
            half_gap: gap.unwrap_or(d.half_gap),
            weight_left: weight.unwrap_or(d.weight_left),
        });
    } else if gap.is_some() || weight.is_some() {
        return Err(CliError::Config("--half-gap/--weight-left only apply to two_delta_mixture".into()));
    }
    spec.validate()?;
    Ok(spec)
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedFlow {
    pub flow: FlowConfig,
    pub dataset: DatasetSpec,
    pub n: usize,
    pub init_std: f64,
    pub fixed_target: bool,
}

pub fn resolve_flow(args: &FlowArgs) -> CliResult<ResolvedFlow> {
    let file = load(args.config.as_deref())?;
    let kind = drift_kind(args.drift, args.variant, &file.drift)?;
    let tau = args.tau.or(file.drift.tau).unwrap_or(DEFAULT_TAU);
    let drift = drift_config(kind, tau, &args.tuning, &file.drift)?;
    let f = &file.flow;
    let flow = FlowConfig {
        drift,
        eta: positive("eta", args.eta.or(f.eta).unwrap_or(0.1))?,
        n_steps: at_least_one("steps", args.steps.or(f.steps).unwrap_or(500))?,
        snapshot_every: at_least_one("snapshot_every", args.snapshot_every.or(f.snapshot_every).unwrap_or(100))?,
        seed: args.seed.or(f.seed).unwrap_or(0),
    };
    flow.validate()?;
    Ok(ResolvedFlow {
        flow,
        dataset: dataset_spec(&args.data, &file.dataset)?,
        n: at_least_one("n", args.n.or(f.n).unwrap_or(256))?,
        init_std: positive("init_std", args.init_std.or(f.init_std).unwrap_or(1.0))?,
        fixed_target: args.fixed_target || f.fixed_target.unwrap_or(false),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedTrain {
    pub train: TrainConfig,
    pub checkpoint_every: usize,
}

pub fn resolve_train(args: &TrainArgs) -> CliResult<ResolvedTrain> {
    let file = load(args.config.as_deref())?;
    let kind = drift_kind(args.drift, args.variant, &file.drift)?;
    let tau = args.tau.or(file.drift.tau).unwrap_or(DEFAULT_TAU);
    let drift = drift_config(kind, tau, &args.tuning, &file.drift)?;
    let dataset = dataset_spec(&args.data, &file.dataset)?;
    let t = &file.train;
    let mut cfg = TrainConfig::new(drift, dataset);
    let dim = cfg.dataset.name.dim();
    let activation = match args.activation.or(t.activation).unwrap_or(ActivationArg::Tanh) {
        ActivationArg::Relu => Activation::Relu,
        ActivationArg::Tanh => Activation::Tanh,
    };
    cfg.arch = Architecture::ResidualMlp {
        input_dim: 2,
        width: at_least_one("width", args.width.or(t.width).unwrap_or(128))?,
        blocks: args.blocks.or(t.blocks).unwrap_or(2),
        output_dim: dim,
        activation,
    };
    cfg.n_data = at_least_one("n_data", args.n_data.or(t.n_data).unwrap_or(cfg.n_data))?;
    cfg.n_model = at_least_one("n_model", args.n_model.or(t.n_model).unwrap_or(cfg.n_model))?;
    cfg.eta = positive("eta", args.eta.or(t.eta).unwrap_or(cfg.eta))?;
    cfg.lr = positive("lr", args.lr.or(t.lr).unwrap_or(cfg.lr))?;
    cfg.n_steps = at_least_one("steps", args.steps.or(t.steps).unwrap_or(2000))?;
    cfg.eval_every = at_least_one("eval_every", args.eval_every.or(t.eval_every).unwrap_or(100))?;
    cfg.holdout_n = at_least_one("holdout", args.holdout.or(t.holdout).unwrap_or(cfg.holdout_n))?;
    cfg.seed = args.seed.or(t.seed).unwrap_or(0);
    cfg.validate()?;
    let checkpoint_every = at_least_one(
        "checkpoint_every",
        args.checkpoint_every.or(t.checkpoint_every).unwrap_or(1000),
    )?;
    if checkpoint_every % cfg.eval_every != 0 {
        return Err(CliError::Config(format!(
            "checkpoint_every ({checkpoint_every}) must be a multiple of eval_every ({})",
            cfg.eval_every
        )));
    }
    Ok(ResolvedTrain { train: cfg, checkpoint_every })
}

#[derive(Debug, Clone, Serialize)]
pub struct TwoDeltaGrid {
    pub half_gap: f64,
    pub alpha: f64,
    pub beta: f64,
    pub taus: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedSweep {
    pub drifts: Vec<DriftKind>,
    pub taus: Vec<f64>,
    pub datasets: Vec<DatasetName>,
    pub seeds: Vec<u64>,
    /// Drift knobs shared by every cell; `kind` and `tau` are overridden per cell.
    pub drift_template: DriftConfig,
    pub n: usize,
    pub eta: f64,
    pub steps: usize,
    pub init_std: f64,
    pub fixed_target: bool,
    pub two_delta: Option<TwoDeltaGrid>,
    pub threads: usize,
}

pub const DEFAULT_TWO_DELTA_TAUS: [f64; 6] = [1.0, 0.7, 0.5, 0.4, 0.3, 0.2];

pub fn resolve_sweep(args: &SweepArgs) -> CliResult<ResolvedSweep> {
    let file = load(args.config.as_deref())?;
    let s = &file.sweep;
    let drifts = match (&args.drifts, &s.drifts) {
        (Some(d), _) => d.clone(),
        (None, Some(names)) => names.iter().map(|n| parse_name(n)).collect::<CliResult<_>>()?,
        (None, None) => Vec::new(),
    };
    let datasets = match (&args.datasets, &s.datasets) {
        (Some(d), _) => d.clone(),
        (None, Some(names)) => names.iter().map(|n| parse_name(n)).collect::<CliResult<_>>()?,
        (None, None) => vec![DatasetName::Moons],
    };
    let taus = args.taus.clone().or_else(|| s.taus.clone()).unwrap_or_else(|| vec![DEFAULT_TAU]);
    for &t in &taus {
        positive("tau", t)?;
    }
    let seeds = args.seeds.clone().or_else(|| s.seeds.clone()).unwrap_or_else(|| vec![0]);
    let two_delta = if args.two_delta || s.two_delta.unwrap_or(false) {
        let taus = args
            .two_delta_taus
            .clone()
            .or_else(|| s.two_delta_taus.clone())
            .unwrap_or_else(|| DEFAULT_TWO_DELTA_TAUS.to_vec());
        Some(TwoDeltaGrid {
            half_gap: positive("two_delta_gap", args.two_delta_gap.or(s.two_delta_gap).unwrap_or(1.0))?,
            alpha: args.alpha.or(s.alpha).unwrap_or(0.8),
            beta: args.beta.or(s.beta).unwrap_or(0.4),
            taus,
        })
    } else {
        None
    };
    if drifts.is_empty() && two_delta.is_none() {
        return Err(CliError::Config("nothing to sweep: give --drifts and/or --two-delta".into()));
    }
    if !drifts.is_empty() && (taus.is_empty() || datasets.is_empty() || seeds.is_empty()) {
        return Err(CliError::Config("taus, datasets and seeds must be non-empty".into()));
    }
    let template_kind = drifts.first().copied().unwrap_or(DriftKind::Mmd);
    let drift_template = drift_config(template_kind, taus.first().copied().unwrap_or(DEFAULT_TAU), &args.tuning, &file.drift)?;
    Ok(ResolvedSweep {
        drifts,
        taus,
        datasets,
        seeds,
        drift_template,
        n: at_least_one("n", args.n.or(s.n).unwrap_or(128))?,
        eta: positive("eta", args.eta.or(s.eta).unwrap_or(0.1))?,
        steps: at_least_one("steps", args.steps.or(s.steps).unwrap_or(200))?,
        init_std: positive("init_std", args.init_std.or(s.init_std).unwrap_or(1.0))?,
        fixed_target: args.fixed_target || s.fixed_target.unwrap_or(false),
        two_delta,
        threads: at_least_one("threads", args.threads.or(s.threads).unwrap_or(1))?,
    })
}
