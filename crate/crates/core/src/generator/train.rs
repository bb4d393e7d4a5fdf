//! Drifted-target training: regress `f_θ(ε)` onto `x + η V(x)` with the
//! targets held constant.

use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::batch::{ParticleBatch, Role};
use crate::datasets::{sample_dataset, DatasetSpec};
use crate::drift::{compute_drift, DriftConfig};
use crate::error::{Error, Result};
use crate::eval::{mmd2_median, mmd2_with_bandwidth};
use crate::rng::RngHandle;
use crate::streams;

use super::adam::{adam_step, AdamState};
use super::mlp::{Architecture, GeneratorModel};

pub const DEFAULT_LR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub drift: DriftConfig,
    pub dataset: DatasetSpec,
    pub arch: Architecture,
    pub n_data: usize,
    pub n_model: usize,
    pub eta: f64,
    pub lr: f64,
    pub n_steps: usize,
    pub eval_every: usize,
    pub holdout_n: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(drift: DriftConfig, dataset: DatasetSpec) -> Self {
        Self {
            drift,
            dataset,
            arch: Architecture::default(),
            n_data: 256,
            n_model: 256,
            eta: 1.0,
            lr: DEFAULT_LR,
            n_steps: 1000,
            eval_every: 100,
            holdout_n: 512,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.drift.validate()?;
        self.dataset.validate()?;
        self.arch.validate()?;
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta must be > 0, got {}", self.eta)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be > 0, got {}", self.lr)));
        }
        if self.n_data == 0 || self.n_model == 0 || self.holdout_n == 0 {
            return Err(Error::Config("batch sizes must be >= 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be >= 1".into()));
        }
        if self.arch.output_dim() != self.dataset.name.dim() {
            return Err(Error::Config(format!(
                "generator output dim {} does not match dataset dim {}",
                self.arch.output_dim(),
                self.dataset.name.dim()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub step: usize,
    pub loss: f64,
    pub mmd2_holdout: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: GeneratorModel,
    pub records: Vec<TrainRecord>,
    /// Step at which targets or parameters became non-finite.
    pub diverged_at: Option<usize>,
}

/// `n × c` standard normal noise.
pub fn sample_noise(n: usize, c: usize, rng: RngHandle) -> Array2<f64> {
    let mut r = rng.rng();
    Array2::from_shape_simple_fn((n, c), || StandardNormal.sample(&mut r))
}

/// Held-out data and the fixed evaluation noise of a run.
pub struct Holdout {
    pub data: ParticleBatch,
    pub noise: Array2<f64>,
}

impl Holdout {
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        Ok(Self {
            data: sample_dataset(&cfg.dataset, cfg.holdout_n, RngHandle::new(cfg.seed, streams::HOLDOUT))?,
            noise: sample_noise(cfg.holdout_n, cfg.arch.input_dim(), RngHandle::new(cfg.seed, streams::EVAL)),
        })
    }

    pub fn mmd2(&self, model: &GeneratorModel) -> Result<f64> {
        let out = model.forward(self.noise.view())?;
        if out.iter().any(|v| !v.is_finite()) {
            return Ok(f64::NAN);
        }
        let batch = ParticleBatch::new(out, Role::Model, 0)?;
        match mmd2_median(&batch, &self.data) {
            // most pooled points coincide, so the median is zero; use unit width
            Err(Error::Argument(_)) => Ok(mmd2_with_bandwidth(batch.positions(), self.data.positions(), 1.0)),
            r => r,
        }
    }
}

/// Runs the loop for `cfg.n_steps` updates. Step `s` draws data from
/// substream `s` of `DATA`, noise from substream `s` of `NOISE` and drift
/// randomness from substream `s` of `DRIFT`. Records are logged at every
/// multiple of `eval_every` and at the final step; the loss logged at step
/// `s` is the regression loss of that step's targets before the update.
pub fn train(cfg: &TrainConfig, model: GeneratorModel) -> Result<TrainOutcome> {
    train_with(cfg, model, |_, _| {})
}

/// As [`train`], calling `on_record` after each logged record.
pub fn train_with<F: FnMut(&TrainRecord, &GeneratorModel)>(
    cfg: &TrainConfig,
    mut model: GeneratorModel,
    mut on_record: F,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if model.arch != cfg.arch {
        return Err(Error::Config("model architecture differs from the config".into()));
    }
    let holdout = Holdout::new(cfg)?;
    let data_rng = RngHandle::new(cfg.seed, streams::DATA);
    let noise_rng = RngHandle::new(cfg.seed, streams::NOISE);
    let drift_rng = RngHandle::new(cfg.seed, streams::DRIFT);
    let mut adam = AdamState::new(model.n_params());
    let mut records = Vec::new();
    let mut diverged_at = None;

    for step in 0..=cfg.n_steps {
        let s = step as u64;
        let y = sample_dataset(&cfg.dataset, cfg.n_data, data_rng.substream(s))?;
        let noise = sample_noise(cfg.n_model, cfg.arch.input_dim(), noise_rng.substream(s));
        let (out, tape) = model.forward_cached(noise.view())?;
        if out.iter().any(|v| !v.is_finite()) {
            diverged_at = Some(step);
            break;
        }
        let x = ParticleBatch::new(out.clone(), Role::Model, 0)?;
        let v = compute_drift(&cfg.drift, &x, &y, drift_rng.substream(s)).map_err(|e| e.at_step(step))?;
        let targets = x.positions().to_owned() + &(v * cfg.eta);
        if targets.iter().any(|t| !t.is_finite()) {
            diverged_at = Some(step);
            break;
        }
        let (loss, grads) = model.mse_from_tape(noise.view(), &out, &tape, targets.view())?;
        if step % cfg.eval_every == 0 || step == cfg.n_steps {
            let rec = TrainRecord {
                step,
                loss,
                mmd2_holdout: holdout.mmd2(&model)?,
            };
            on_record(&rec, &model);
            records.push(rec);
        }
        if step == cfg.n_steps {
            break;
        }
        adam_step(&mut model.params, &grads, &mut adam, cfg.lr)?;
        if model.params.iter().any(|p| !p.is_finite()) {
            diverged_at = Some(step + 1);
            break;
        }
    }
    Ok(TrainOutcome {
        model,
        records,
        diverged_at,
    })
}

/// Writes `step,loss,mmd2_holdout`.
pub fn write_train_metrics_csv<W: std::io::Write>(records: &[TrainRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["step", "loss", "mmd2_holdout"])?;
    for r in records {
        w.write_record([r.step.to_string(), r.loss.to_string(), r.mmd2_holdout.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// JSON checkpoint: architecture descriptor plus flat parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub step: usize,
    pub arch: Architecture,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn new(step: usize, model: &GeneratorModel) -> Self {
        Self {
            step,
            arch: model.arch.clone(),
            params: model.params.clone(),
        }
    }

    pub fn into_model(self) -> Result<GeneratorModel> {
        GeneratorModel::from_params(self.arch, self.params)
    }

    pub fn write_json<W: std::io::Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer(writer, self)?;
        Ok(())
    }

    pub fn read_json<R: std::io::Read>(reader: R) -> Result<Self> {
        Ok(serde_json::from_reader(reader)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::DatasetName;
    use crate::drift::DriftKind;
    use crate::generator::mlp::Activation;

    fn tiny_cfg(kind: DriftKind) -> TrainConfig {
        let mut cfg = TrainConfig::new(DriftConfig::new(kind, 0.5), DatasetSpec::new(DatasetName::Moons));
        cfg.arch = Architecture::ResidualMlp {
            input_dim: 2,
            width: 8,
            blocks: 1,
            output_dim: 2,
            activation: Activation::Tanh,
        };
        cfg.n_data = 16;
        cfg.n_model = 16;
        cfg.holdout_n = 32;
        cfg.n_steps = 5;
        cfg.eval_every = 2;
        cfg
    }

    #[test]
    fn records_at_cadence_and_final_step() {
        let cfg = tiny_cfg(DriftKind::Mmd);
        let model = GeneratorModel::init(cfg.arch.clone(), RngHandle::new(0, streams::INIT)).unwrap();
        let out = train(&cfg, model).unwrap();
        let steps: Vec<usize> = out.records.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![0, 2, 4, 5]);
    }

    #[test]
    fn deterministic_records() {
        let cfg = tiny_cfg(DriftKind::Sw);
        let run = || {
            let model = GeneratorModel::init(cfg.arch.clone(), RngHandle::new(0, streams::INIT)).unwrap();
            train(&cfg, model).unwrap().records
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn checkpoint_roundtrip() {
        let cfg = tiny_cfg(DriftKind::Kl);
        let model = GeneratorModel::init(cfg.arch.clone(), RngHandle::new(3, streams::INIT)).unwrap();
        let mut buf = Vec::new();
        Checkpoint::new(7, &model).write_json(&mut buf).unwrap();
        let back = Checkpoint::read_json(buf.as_slice()).unwrap();
        assert_eq!(back.step, 7);
        assert_eq!(back.into_model().unwrap(), model);
    }

    #[test]
    fn rejects_nonpositive_eta() {
        let mut cfg = tiny_cfg(DriftKind::Kl);
        cfg.eta = 0.0;
        assert!(cfg.validate().is_err());
    }
}
