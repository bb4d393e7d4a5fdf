//! Score-difference (mean-shift) drift and the smoothed-KL velocity.
//!
//! The mean-shift drift at `x` is the kernel-weighted barycenter of the data
//! batch minus the kernel-weighted barycenter of the model batch. For a single
//! Gaussian width it equals `(τ/2)(∇log p_τ(x) − ∇log q_τ(x))`.
//!
//! The smoothed-KL velocity is the Wasserstein gradient of `KL(q_τ ‖ p_τ)`:
//! the score difference averaged under `k_τ(·, y)`, i.e. under `N(y, τ/2 · I)`.
//! It is estimated here by reparameterized Monte Carlo.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand_distr::{Distribution, StandardNormal};

use crate::batch::{check_same_dim, ParticleBatch};
use crate::error::{Error, Result};
use crate::kernels::{convolution_score, KernelFamily, KernelSpec, WeightedAtoms};
use crate::numeric::{sq_dist_slice, weighted_displacement_slice};
use crate::rng::RngHandle;

/// `Σ_j w_j(x) (z_j − x)` with `w_j ∝ exp(log_weight_j) k(x, z_j)`; row `skip`
/// of `points` is left out when given.
pub(crate) fn mean_shift(
    spec: &KernelSpec,
    x: ArrayView1<'_, f64>,
    points: ArrayView2<'_, f64>,
    log_weights: Option<&[f64]>,
    skip: Option<usize>,
) -> Vec<f64> {
    let lt = spec.log_terms(x.len());
    let x = x.to_vec();
    let points = points.as_standard_layout();
    let points = points.as_slice().expect("standard layout");
    let logits: Vec<f64> = points
        .chunks_exact(x.len())
        .enumerate()
        .map(|(j, z)| {
            if Some(j) == skip {
                return f64::NEG_INFINITY;
            }
            let lw = log_weights.map_or(0.0, |w| w[j]);
            lw + lt.eval_sq(sq_dist_slice(&x, z))
        })
        .collect();
    weighted_displacement_slice(&logits, points, &x)
}

/// Mean-shift drift evaluated at arbitrary query points.
pub fn kl_drift_field(
    spec: &KernelSpec,
    query: ArrayView2<'_, f64>,
    x_batch: &ParticleBatch,
    y_batch: &ParticleBatch,
) -> Result<Array2<f64>> {
    spec.validate()?;
    check_same_dim(x_batch, y_batch)?;
    if query.ncols() != x_batch.dim() {
        return Err(Error::Shape("query dimension differs from batches".into()));
    }
    let mut out = Array2::zeros(query.raw_dim());
    for (i, q) in query.rows().into_iter().enumerate() {
        let attract = mean_shift(spec, q, y_batch.positions(), None, None);
        let repel = mean_shift(spec, q, x_batch.positions(), None, None);
        for k in 0..q.len() {
            out[[i, k]] = attract[k] - repel[k];
        }
    }
    Ok(out)
}

/// Mean-shift drift at every model particle. With `ignore_self`, particle
/// `x_i` is dropped from its own repulsion term.
pub fn kl_drift(
    spec: &KernelSpec,
    x_batch: &ParticleBatch,
    y_batch: &ParticleBatch,
    ignore_self: bool,
) -> Result<Array2<f64>> {
    spec.validate()?;
    check_same_dim(x_batch, y_batch)?;
    if ignore_self && x_batch.len() < 2 {
        return Err(Error::Config(
            "ignore_self needs at least two model particles".into(),
        ));
    }
    let x = x_batch.positions();
    let mut out = Array2::zeros(x.raw_dim());
    for (i, xi) in x.rows().into_iter().enumerate() {
        let attract = mean_shift(spec, xi, y_batch.positions(), None, None);
        let repel = mean_shift(spec, xi, x, None, ignore_self.then_some(i));
        for k in 0..xi.len() {
            out[[i, k]] = attract[k] - repel[k];
        }
    }
    Ok(out)
}

/// Mean-shift drift between two weighted atomic measures, at a single point.
pub fn population_kl_drift(
    spec: &KernelSpec,
    x: ArrayView1<'_, f64>,
    p_atoms: &WeightedAtoms,
    q_atoms: &WeightedAtoms,
) -> Result<Vec<f64>> {
    spec.validate()?;
    if p_atoms.dim() != x.len() || q_atoms.dim() != x.len() {
        return Err(Error::Shape("atom dimension differs from query".into()));
    }
    let a = mean_shift(spec, x, p_atoms.positions(), Some(p_atoms.log_weights()), None);
    let r = mean_shift(spec, x, q_atoms.positions(), Some(q_atoms.log_weights()), None);
    Ok(a.iter().zip(&r).map(|(a, r)| a - r).collect())
}

/// Monte Carlo estimate of the smoothed-KL velocity with per-coordinate
/// standard errors.
#[derive(Debug, Clone)]
pub struct SmoothedKlEstimate {
    pub velocity: Array2<f64>,
    pub std_err: Array2<f64>,
    pub mc_samples: usize,
}

pub const DEFAULT_MC_SAMPLES: usize = 256;

/// Estimates `V(y) = E_{x ~ N(y, τ/2 I)}[∇log p_τ(x) − ∇log q_τ(x)]` at each
/// query row. Row `r` draws from `rng.substream(r)`, and the same draw feeds
/// both scores.
pub fn smoothed_kl_drift(
    spec: &KernelSpec,
    x_batch: &ParticleBatch,
    y_batch: &ParticleBatch,
    query: ArrayView2<'_, f64>,
    mc_samples: usize,
    rng: RngHandle,
) -> Result<SmoothedKlEstimate> {
    spec.validate()?;
    if spec.family != KernelFamily::ParzenGaussian || spec.is_multi() {
        return Err(Error::Config(
            "smoothed-KL drift is defined for a single-width parzen_gaussian kernel".into(),
        ));
    }
    if mc_samples == 0 {
        return Err(Error::Argument("mc_samples must be >= 1".into()));
    }
    check_same_dim(x_batch, y_batch)?;
    let d = x_batch.dim();
    if query.ncols() != d {
        return Err(Error::Shape("query dimension differs from batches".into()));
    }
    let p_atoms = WeightedAtoms::uniform(y_batch);
    let q_atoms = WeightedAtoms::uniform(x_batch);
    let sd = (spec.tau / 2.0).sqrt();
    let n_q = query.nrows();
    let mut velocity = Array2::zeros((n_q, d));
    let mut std_err = Array2::zeros((n_q, d));
    let mut point = ndarray::Array1::zeros(d);
    for (r, y) in query.rows().into_iter().enumerate() {
        let mut g = rng.substream(r as u64).rng();
        let mut sum = vec![0.0; d];
        let mut sum_sq = vec![0.0; d];
        for _ in 0..mc_samples {
            for k in 0..d {
                let xi: f64 = StandardNormal.sample(&mut g);
                point[k] = y[k] + sd * xi;
            }
            let sp = convolution_score(spec, point.view(), &p_atoms)
                .map_err(|e| smoothed_context(e, r))?;
            let sq = convolution_score(spec, point.view(), &q_atoms)
                .map_err(|e| smoothed_context(e, r))?;
            for k in 0..d {
                let v = sp[k] - sq[k];
                sum[k] += v;
                sum_sq[k] += v * v;
            }
        }
        let m = mc_samples as f64;
        for k in 0..d {
            let mean = sum[k] / m;
            velocity[[r, k]] = mean;
            let var = if mc_samples > 1 {
                ((sum_sq[k] - m * mean * mean) / (m - 1.0)).max(0.0)
            } else {
                0.0
            };
            std_err[[r, k]] = (var / m).sqrt();
        }
    }
    Ok(SmoothedKlEstimate {
        velocity,
        std_err,
        mc_samples,
    })
}

fn smoothed_context(e: Error, row: usize) -> Error {
    match e {
        Error::Singularity { point, context } => Error::Singularity {
            point,
            context: format!("smoothed-KL sample for query row {row}: {context}"),
        },
        other => other,
    }
}
