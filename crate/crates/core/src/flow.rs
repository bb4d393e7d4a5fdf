//! Explicit Euler particle flows `x ← x + η V(x)` and the two-atom
//! failure-mode table.

use ndarray::{array, Array2};
use serde::{Deserialize, Serialize};

use crate::batch::{check_same_dim, ParticleBatch, Role};
use crate::datasets::{sample_dataset, DatasetSpec};
use crate::drift::kl::population_kl_drift;
use crate::drift::mmd::mmd2_raw;
use crate::drift::sinkhorn::population_proxy_drift;
use crate::drift::{compute_drift, DriftConfig, DriftKind};
use crate::error::{Error, Result};
use crate::eval::median_sq_dist;
use crate::kernels::{KernelSpec, WeightedAtoms};
use crate::rng::RngHandle;
use crate::streams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub drift: DriftConfig,
    pub eta: f64,
    pub n_steps: usize,
    pub snapshot_every: usize,
    pub seed: u64,
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        self.drift.validate()?;
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta must be > 0, got {}", self.eta)));
        }
        if self.n_steps == 0 {
            return Err(Error::Config("n_steps must be >= 1".into()));
        }
        if self.snapshot_every == 0 {
            return Err(Error::Config("snapshot_every must be >= 1".into()));
        }
        Ok(())
    }
}

/// Where the data batch comes from at each step.
#[derive(Debug, Clone)]
pub enum TargetSource {
    Fixed(ParticleBatch),
    /// Fresh `n` samples per step from stream `DATA`, substream = step.
    Resampled { spec: DatasetSpec, n: usize },
}

impl TargetSource {
    fn batch(&self, seed: u64, step: usize) -> Result<ParticleBatch> {
        match self {
            TargetSource::Fixed(b) => Ok(b.clone()),
            TargetSource::Resampled { spec, n } => {
                sample_dataset(spec, *n, RngHandle::new(seed, streams::DATA).substream(step as u64))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub step: usize,
    pub energy_mmd2: f64,
    pub mean_drift_norm: f64,
    pub max_drift_norm: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone)]
pub struct FlowOutput {
    pub final_batch: ParticleBatch,
    pub records: Vec<FlowRecord>,
    pub snapshots: Vec<(usize, ParticleBatch)>,
    pub diverged_at: Option<usize>,
    /// Gibbs kernel used for `energy_mmd2`.
    pub energy_kernel: KernelSpec,
}

/// Kernel for the logged energy: the drift's own kernel for mmd, otherwise a
/// Gibbs kernel at the median bandwidth of the initial pooled batches (1 when
/// that median is zero). It stays fixed for the whole run.
fn energy_kernel(cfg: &DriftConfig, init: &ParticleBatch, target: &ParticleBatch) -> KernelSpec {
    if cfg.kind == DriftKind::Mmd {
        return cfg.kernel();
    }
    let pool = ndarray::concatenate(ndarray::Axis(0), &[init.positions(), target.positions()])
        .expect("same dim");
    KernelSpec::gibbs(median_sq_dist(pool.view()).unwrap_or(1.0))
}

fn drift_norms(v: &Array2<f64>) -> (f64, f64) {
    let norms: Vec<f64> = v.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    let mean = norms.iter().sum::<f64>() / norms.len() as f64;
    let max = norms.iter().copied().fold(0.0, f64::max);
    (mean, max)
}

/// Runs `n_steps` Euler steps. A record is logged at every step `0..=n_steps`;
/// if positions become non-finite the run stops with a flagged record.
pub fn run_flow(cfg: &FlowConfig, init: &ParticleBatch, target: &TargetSource) -> Result<FlowOutput> {
    cfg.validate()?;
    let first = target.batch(cfg.seed, 0)?;
    check_same_dim(init, &first)?;
    let ek = energy_kernel(&cfg.drift, init, &first);
    let drift_rng = RngHandle::new(cfg.seed, streams::DRIFT);

    let mut x = init.with_role(Role::Model);
    let mut records = Vec::with_capacity(cfg.n_steps + 1);
    let mut snapshots = vec![(0, x.clone())];
    let mut diverged_at = None;

    for step in 0..=cfg.n_steps {
        let y = if step == 0 { first.clone() } else { target.batch(cfg.seed, step)? };
        let v = compute_drift(&cfg.drift, &x, &y, drift_rng.substream(step as u64))
            .map_err(|e| e.at_step(step))?;
        let (mean, max) = drift_norms(&v);
        let energy = mmd2_raw(&ek, x.positions(), y.positions());
        records.push(FlowRecord {
            step,
            energy_mmd2: energy,
            mean_drift_norm: mean,
            max_drift_norm: max,
            diverged: false,
        });
        if step == cfg.n_steps {
            break;
        }
        let next = x.positions().to_owned() + &(v * cfg.eta);
        if next.iter().any(|c| !c.is_finite()) {
            records.push(FlowRecord {
                step: step + 1,
                energy_mmd2: f64::NAN,
                mean_drift_norm: f64::NAN,
                max_drift_norm: f64::NAN,
                diverged: true,
            });
            diverged_at = Some(step + 1);
            break;
        }
        x = ParticleBatch::new(next, Role::Model, init.seed())?;
        if (step + 1) % cfg.snapshot_every == 0 || step + 1 == cfg.n_steps {
            snapshots.push((step + 1, x.clone()));
        }
    }
    Ok(FlowOutput {
        final_batch: x,
        records,
        snapshots,
        diverged_at,
        energy_kernel: ek,
    })
}

/// Writes `step,energy_mmd2,mean_drift_norm,max_drift_norm,diverged`.
pub fn write_metrics_csv<W: std::io::Write>(records: &[FlowRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["step", "energy_mmd2", "mean_drift_norm", "max_drift_norm", "diverged"])?;
    for r in records {
        w.write_record([
            r.step.to_string(),
            r.energy_mmd2.to_string(),
            r.mean_drift_norm.to_string(),
            r.max_drift_norm.to_string(),
            (r.diverged as u8).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row of the two-atom comparison at `x = +D`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoDeltaRow {
    pub tau: f64,
    /// `ln ε = −4D²/τ`.
    pub log_eps: f64,
    pub eps: f64,
    pub v_kl: f64,
    pub v_sp: f64,
    pub ratio: f64,
    pub v_w2: f64,
    /// Set when `ε` is below the smallest normal double; velocities are NaN.
    pub flagged: bool,
}

/// Population velocities at `+D` for data `α δ_{−D} + (1−α) δ_{D}` and model
/// `β δ_{−D} + (1−β) δ_{D}`: mean-shift KL, population Sinkhorn proxy and the
/// closed-form W₂ barycentric velocity `−2D(α−β)/(1−β)`.
pub fn two_delta_experiment(d: f64, alpha: f64, beta: f64, tau_grid: &[f64]) -> Result<Vec<TwoDeltaRow>> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::Config(format!("D must be > 0, got {d}")));
    }
    for (name, w) in [("alpha", alpha), ("beta", beta)] {
        if !(w > 0.0 && w < 1.0) {
            return Err(Error::Config(format!("{name} must lie in (0, 1), got {w}")));
        }
    }
    if beta > alpha {
        return Err(Error::Config(format!("need beta <= alpha, got beta={beta} alpha={alpha}")));
    }
    let atoms = |w: f64| WeightedAtoms::new(&[vec![-d], vec![d]], &[w, 1.0 - w]);
    let p = atoms(alpha)?;
    let q = atoms(beta)?;
    let x = array![d];
    let v_w2 = -2.0 * d * (alpha - beta) / (1.0 - beta);
    tau_grid
        .iter()
        .map(|&tau| {
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(Error::Config(format!("tau must be > 0, got {tau}")));
            }
            let log_eps = -4.0 * d * d / tau;
            if log_eps < f64::MIN_POSITIVE.ln() {
                return Ok(TwoDeltaRow {
                    tau,
                    log_eps,
                    eps: 0.0,
                    v_kl: f64::NAN,
                    v_sp: f64::NAN,
                    ratio: f64::NAN,
                    v_w2,
                    flagged: true,
                });
            }
            let v_kl = population_kl_drift(&KernelSpec::parzen(tau), x.view(), &p, &q)?[0];
            let v_sp = population_proxy_drift(x.view(), &p, &q, tau)?.drift[0];
            let ratio = if v_kl == 0.0 { f64::NAN } else { v_sp / v_kl };
            Ok(TwoDeltaRow {
                tau,
                log_eps,
                eps: log_eps.exp(),
                v_kl,
                v_sp,
                ratio,
                v_w2,
                flagged: false,
            })
        })
        .collect()
}

/// Writes `tau,eps,v_kl,v_sp,ratio,v_w2,flagged`.
pub fn write_two_delta_csv<W: std::io::Write>(rows: &[TwoDeltaRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["tau", "eps", "v_kl", "v_sp", "ratio", "v_w2", "flagged"])?;
    for r in rows {
        w.write_record([
            r.tau.to_string(),
            r.eps.to_string(),
            r.v_kl.to_string(),
            r.v_sp.to_string(),
            r.ratio.to_string(),
            r.v_w2.to_string(),
            (r.flagged as u8).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_weights_give_zero_velocities() {
        let rows = two_delta_experiment(1.0, 0.6, 0.6, &[0.5, 1.0]).unwrap();
        for r in rows {
            assert_eq!((r.v_kl, r.v_sp, r.v_w2), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn w2_velocity_closed_form() {
        let rows = two_delta_experiment(1.0, 0.8, 0.4, &[0.5, 0.1]).unwrap();
        for r in rows {
            assert_eq!(r.v_w2, -2.0 * 0.4 / 0.6);
            assert!((r.v_w2 + 4.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn tiny_eps_is_flagged() {
        let rows = two_delta_experiment(1.0, 0.8, 0.4, &[1e-3]).unwrap();
        assert!(rows[0].flagged && rows[0].v_kl.is_nan());
        assert!(two_delta_experiment(1.0, 0.4, 0.8, &[0.5]).is_err());
    }

    #[test]
    fn rejects_nonpositive_eta() {
        let cfg = FlowConfig {
            drift: DriftConfig::new(DriftKind::Kl, 1.0),
            eta: 0.0,
            n_steps: 1,
            snapshot_every: 1,
            seed: 0,
        };
        assert!(cfg.validate().is_err());
    }
}
