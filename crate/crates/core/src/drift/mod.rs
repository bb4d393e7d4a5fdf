//! Velocity fields and the common dispatch entry point.

pub mod kl;
pub mod mmd;
pub mod sinkhorn;
pub mod sw;

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::batch::ParticleBatch;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::rng::RngHandle;

use sinkhorn::{CostConvention, ProxyVariant, SinkhornConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftKind {
    Kl,
    SmoothedKl,
    SinkhornExact,
    SinkhornProxy,
    SinkhornProxyDa2,
    Mmd,
    Sw,
}

impl DriftKind {
    pub const ALL: [DriftKind; 7] = [
        DriftKind::Kl,
        DriftKind::SmoothedKl,
        DriftKind::SinkhornExact,
        DriftKind::SinkhornProxy,
        DriftKind::SinkhornProxyDa2,
        DriftKind::Mmd,
        DriftKind::Sw,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DriftKind::Kl => "kl",
            DriftKind::SmoothedKl => "smoothed_kl",
            DriftKind::SinkhornExact => "sinkhorn_exact",
            DriftKind::SinkhornProxy => "sinkhorn_proxy",
            DriftKind::SinkhornProxyDa2 => "sinkhorn_proxy_da2",
            DriftKind::Mmd => "mmd",
            DriftKind::Sw => "sw",
        }
    }

    /// Whether the drift consumes random numbers.
    pub fn is_stochastic(&self) -> bool {
        matches!(self, DriftKind::SmoothedKl | DriftKind::Sw)
    }
}

impl fmt::Display for DriftKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DriftKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        DriftKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| {
                let names: Vec<&str> = DriftKind::ALL.iter().map(|k| k.as_str()).collect();
                Error::Config(format!(
                    "unknown drift kind '{s}'; expected one of: {}",
                    names.join(", ")
                ))
            })
    }
}

/// Everything needed to evaluate one drift kind.
///
/// `tau` is the kernel width for kl/smoothed_kl/mmd, the entropic
/// regularization for sinkhorn_exact and the affinity temperature for the
/// proxies. `bandwidths`, when set, turns the mmd kernel into a sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftConfig {
    pub kind: DriftKind,
    pub tau: f64,
    #[serde(default)]
    pub bandwidths: Option<Vec<f64>>,
    #[serde(default)]
    pub ignore_self: bool,
    #[serde(default = "default_mc")]
    pub mc_samples: usize,
    #[serde(default = "default_slices")]
    pub n_slices: usize,
    #[serde(default = "default_iters")]
    pub sinkhorn_iters: usize,
    #[serde(default = "default_tol")]
    pub sinkhorn_tol: f64,
    #[serde(default)]
    pub sinkhorn_strict: bool,
}

fn default_mc() -> usize {
    kl::DEFAULT_MC_SAMPLES
}
fn default_slices() -> usize {
    sw::DEFAULT_SLICES
}
fn default_iters() -> usize {
    100
}
fn default_tol() -> f64 {
    1e-9
}

impl DriftConfig {
    pub fn new(kind: DriftKind, tau: f64) -> Self {
        Self {
            kind,
            tau,
            bandwidths: None,
            ignore_self: false,
            mc_samples: default_mc(),
            n_slices: default_slices(),
            sinkhorn_iters: default_iters(),
            sinkhorn_tol: default_tol(),
            sinkhorn_strict: false,
        }
    }

    pub fn with_bandwidths(mut self, bw: Vec<f64>) -> Self {
        self.bandwidths = Some(bw);
        self
    }

    pub fn kernel(&self) -> KernelSpec {
        match self.kind {
            DriftKind::Mmd => match &self.bandwidths {
                Some(bw) => KernelSpec::gibbs_multi(bw.clone()),
                None => KernelSpec::gibbs(self.tau),
            },
            _ => KernelSpec::parzen(self.tau),
        }
    }

    pub fn sinkhorn(&self) -> SinkhornConfig {
        SinkhornConfig {
            tau: self.tau,
            max_iters: self.sinkhorn_iters,
            marginal_tol: self.sinkhorn_tol,
            cost: CostConvention::HalfSq,
            strict: self.sinkhorn_strict,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be > 0, got {}", self.tau)));
        }
        match self.kind {
            DriftKind::Mmd => self.kernel().validate()?,
            DriftKind::SmoothedKl if self.mc_samples == 0 => {
                return Err(Error::Config("mc_samples must be >= 1".into()))
            }
            DriftKind::Sw if self.n_slices == 0 => {
                return Err(Error::Config("n_slices must be >= 1".into()))
            }
            DriftKind::SinkhornExact => self.sinkhorn().validate()?,
            _ => {}
        }
        Ok(())
    }
}

/// Velocity at every row of `x_batch` (model) toward `y_batch` (data).
/// `rng` is used only by stochastic kinds.
pub fn compute_drift(
    cfg: &DriftConfig,
    x_batch: &ParticleBatch,
    y_batch: &ParticleBatch,
    rng: RngHandle,
) -> Result<Array2<f64>> {
    cfg.validate()?;
    match cfg.kind {
        DriftKind::Kl => kl::kl_drift(&cfg.kernel(), x_batch, y_batch, cfg.ignore_self),
        DriftKind::SmoothedKl => Ok(kl::smoothed_kl_drift(
            &cfg.kernel(),
            x_batch,
            y_batch,
            x_batch.positions(),
            cfg.mc_samples,
            rng,
        )?
        .velocity),
        DriftKind::SinkhornExact => sinkhorn::sinkhorn_exact_drift(&cfg.sinkhorn(), x_batch, y_batch),
        DriftKind::SinkhornProxy => {
            sinkhorn::sinkhorn_proxy_drift(cfg.tau, x_batch, y_batch, ProxyVariant::Ours, cfg.ignore_self)
        }
        DriftKind::SinkhornProxyDa2 => {
            sinkhorn::sinkhorn_proxy_drift(cfg.tau, x_batch, y_batch, ProxyVariant::Da2, cfg.ignore_self)
        }
        DriftKind::Mmd => mmd::mmd_drift(&cfg.kernel(), x_batch, y_batch),
        DriftKind::Sw => sw::sw_drift(x_batch, y_batch, cfg.n_slices, rng),
    }
}
