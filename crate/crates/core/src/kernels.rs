//! Gaussian kernels, Parzen densities and Tweedie scores.
//!
//! Two conventions are kept apart on purpose:
//!
//! * [`KernelFamily::ParzenGaussian`]: `k_τ(x, y) = (πτ)^{-d/2} exp(−‖x − y‖²/τ)`, a
//!   probability density in `x` (it is the `N(y, τ/2 · I)` density).
//! * [`KernelFamily::GibbsGaussian`]: `k(x, y) = exp(−‖x − y‖²/τ)`, equal to 1 on the
//!   diagonal. This is the convolution used by the population Sinkhorn-proxy
//!   analysis and by the MMD flow.
//!
//! A bandwidth list turns either family into a sum of kernels, one per width.
//! All sums and ratios are accumulated in the log domain.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::batch::{check_same_dim, ParticleBatch};
use crate::error::{Error, Result};
use crate::numeric::{lse, sq_dist, sq_dist_slice};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    ParzenGaussian,
    GibbsGaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub tau: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidths: Option<Vec<f64>>,
}

impl KernelSpec {
    pub fn parzen(tau: f64) -> Self {
        Self {
            family: KernelFamily::ParzenGaussian,
            tau,
            bandwidths: None,
        }
    }

    pub fn gibbs(tau: f64) -> Self {
        Self {
            family: KernelFamily::GibbsGaussian,
            tau,
            bandwidths: None,
        }
    }

    /// Gibbs kernel summed over several widths; `tau` is set to the first one.
    pub fn gibbs_multi(bandwidths: Vec<f64>) -> Self {
        Self {
            family: KernelFamily::GibbsGaussian,
            tau: bandwidths.first().copied().unwrap_or(f64::NAN),
            bandwidths: Some(bandwidths),
        }
    }

    /// Widths actually summed over.
    pub fn widths(&self) -> &[f64] {
        match &self.bandwidths {
            Some(b) if !b.is_empty() => b,
            _ => std::slice::from_ref(&self.tau),
        }
    }

    pub fn is_multi(&self) -> bool {
        self.widths().len() > 1
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("kernel tau must be > 0, got {}", self.tau)));
        }
        if let Some(b) = &self.bandwidths {
            if b.is_empty() {
                return Err(Error::Config("empty bandwidth list".into()));
            }
            if let Some(w) = b.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
                return Err(Error::Config(format!("bandwidths must be > 0, got {w}")));
            }
        }
        Ok(())
    }

    fn log_normalizer(&self, width: f64, d: usize) -> f64 {
        match self.family {
            KernelFamily::ParzenGaussian => -(d as f64) / 2.0 * (PI * width).ln(),
            KernelFamily::GibbsGaussian => 0.0,
        }
    }

    /// `log k(x, y)` from a squared distance.
    pub fn log_eval_sq(&self, r2: f64, d: usize) -> f64 {
        self.log_terms(d).eval_sq(r2)
    }

    /// Per-width log normalizers, computed once for repeated evaluation.
    pub(crate) fn log_terms(&self, d: usize) -> LogTerms {
        LogTerms {
            terms: self.widths().iter().map(|&w| (w, self.log_normalizer(w, d))).collect(),
        }
    }

    /// `k(x, y)` from a squared distance, evaluated directly (no log round trip).
    pub fn eval_sq(&self, r2: f64, d: usize) -> f64 {
        self.widths()
            .iter()
            .map(|&w| {
                let norm = match self.family {
                    KernelFamily::ParzenGaussian => (PI * w).powf(-(d as f64) / 2.0),
                    KernelFamily::GibbsGaussian => 1.0,
                };
                norm * (-r2 / w).exp()
            })
            .sum()
    }

    /// Normalizing constant of one width: `(πw)^{−d/2}` for Parzen, 1 for Gibbs.
    pub fn norm(&self, width: f64, d: usize) -> f64 {
        match self.family {
            KernelFamily::ParzenGaussian => (PI * width).powf(-(d as f64) / 2.0),
            KernelFamily::GibbsGaussian => 1.0,
        }
    }

    /// Scalar `c` with `∇_x k(x, z) = c (x − z)` at squared distance `r2`.
    pub fn grad_coef_sq(&self, r2: f64, d: usize) -> f64 {
        let mut coef = 0.0;
        for &w in self.widths() {
            coef += -(2.0 / w) * self.norm(w, d) * (-r2 / w).exp();
        }
        coef
    }

    /// `∇_x k(x, z) = −Σ_w (2/w)(x − z) k_w(x, z)`.
    pub fn grad_x(&self, x: ArrayView1<'_, f64>, z: ArrayView1<'_, f64>) -> Vec<f64> {
        let coef = self.grad_coef_sq(sq_dist(x, z), x.len());
        x.iter().zip(z.iter()).map(|(a, b)| coef * (a - b)).collect()
    }
}

/// `(width, log normalizer)` pairs of a kernel in a fixed dimension.
pub(crate) struct LogTerms {
    pub(crate) terms: Vec<(f64, f64)>,
}

impl LogTerms {
    pub(crate) fn eval_sq(&self, r2: f64) -> f64 {
        if let [(w, ln)] = self.terms[..] {
            return -r2 / w + ln;
        }
        lse(self.terms.iter().map(|&(w, ln)| -r2 / w + ln))
    }
}

/// Direct-domain kernel matrix `K_ij = k(a_i, b_j)`.
pub fn kernel_matrix(spec: &KernelSpec, a: &ParticleBatch, b: &ParticleBatch) -> Result<Array2<f64>> {
    spec.validate()?;
    check_same_dim(a, b)?;
    let d = a.dim();
    let r2 = crate::numeric::sq_dists(a.positions(), b.positions());
    Ok(r2.mapv(|v| spec.eval_sq(v, d)))
}

/// Log-domain kernel matrix `log k(a_i, b_j)`.
pub fn log_kernel_matrix(
    spec: &KernelSpec,
    a: &ParticleBatch,
    b: &ParticleBatch,
) -> Result<Array2<f64>> {
    spec.validate()?;
    check_same_dim(a, b)?;
    Ok(log_kernel_matrix_raw(spec, a.positions(), b.positions()))
}

pub(crate) fn log_kernel_matrix_raw(
    spec: &KernelSpec,
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
) -> Array2<f64> {
    let d = a.ncols();
    let lt = spec.log_terms(d);
    crate::numeric::sq_dists(a, b).mapv(|v| lt.eval_sq(v))
}

/// A finite measure `Σ_j w_j δ_{z_j}` with weights stored as logs.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedAtoms {
    positions: Array2<f64>,
    log_weights: Vec<f64>,
}

impl WeightedAtoms {
    /// Atoms with explicit weights, which must be nonnegative and sum to 1.
    pub fn new(rows: &[Vec<f64>], weights: &[f64]) -> Result<Self> {
        let batch = ParticleBatch::from_rows(rows, crate::batch::Role::Data)?;
        if weights.len() != rows.len() {
            return Err(Error::Shape(format!(
                "{} atoms but {} weights",
                rows.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Argument("atom weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Argument(format!("atom weights sum to {total}, not 1")));
        }
        Ok(Self {
            positions: batch.into_positions(),
            log_weights: weights.iter().map(|w| w.ln()).collect(),
        })
    }

    /// Uniform weights `1/N` on the rows of a batch.
    pub fn uniform(batch: &ParticleBatch) -> Self {
        let n = batch.len();
        Self {
            positions: batch.positions().to_owned(),
            log_weights: vec![-(n as f64).ln(); n],
        }
    }

    pub fn positions(&self) -> ArrayView2<'_, f64> {
        self.positions.view()
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.positions.ncols()
    }
}

fn check_query(x: ArrayView1<'_, f64>, atoms: &WeightedAtoms) -> Result<()> {
    if atoms.is_empty() {
        return Err(Error::Argument("empty support".into()));
    }
    if x.len() != atoms.dim() {
        return Err(Error::Shape(format!(
            "query has dimension {} but support has {}",
            x.len(),
            atoms.dim()
        )));
    }
    Ok(())
}

/// `log Σ_j w_j k(x, z_j)`.
pub fn log_convolution(spec: &KernelSpec, x: ArrayView1<'_, f64>, atoms: &WeightedAtoms) -> Result<f64> {
    spec.validate()?;
    check_query(x, atoms)?;
    let d = x.len();
    Ok(lse(atoms
        .positions
        .rows()
        .into_iter()
        .zip(&atoms.log_weights)
        .map(|(z, lw)| lw + spec.log_eval_sq(sq_dist(x, z), d))))
}

/// `∇ log Σ_j w_j k(x, z_j)`. For a single width this is Tweedie's
/// `(2/τ)(E_w[z] − x)` with kernel-proportional weights.
pub fn convolution_score(
    spec: &KernelSpec,
    x: ArrayView1<'_, f64>,
    atoms: &WeightedAtoms,
) -> Result<Vec<f64>> {
    spec.validate()?;
    check_query(x, atoms)?;
    let d = x.len();
    let lt = spec.log_terms(d);
    let xs = x.to_vec();
    let positions = atoms.positions.as_standard_layout();
    let positions = positions.as_slice().expect("standard layout");
    // log weight of each (atom, width) term
    let mut terms = Vec::with_capacity(atoms.len() * lt.terms.len());
    for (z, lw) in positions.chunks_exact(d).zip(&atoms.log_weights) {
        let r2 = sq_dist_slice(&xs, z);
        for &(w, ln) in &lt.terms {
            terms.push(lw - r2 / w + ln);
        }
    }
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Singularity {
            point: x.to_vec(),
            context: "kernel density is zero or infinite in log domain".into(),
        });
    }
    for t in terms.iter_mut() {
        *t = (*t - max).exp();
    }
    let total: f64 = terms.iter().sum();
    let mut score = vec![0.0; d];
    let mut t = 0;
    for z in positions.chunks_exact(d) {
        for &(w, _) in &lt.terms {
            let p = terms[t] / total;
            t += 1;
            if p == 0.0 {
                continue;
            }
            for k in 0..d {
                score[k] += p * (2.0 / w) * (z[k] - xs[k]);
            }
        }
    }
    Ok(score)
}

/// Parzen estimate `(1/N) Σ_j k(x, y_j)` over the rows of `support`.
pub fn parzen_density(spec: &KernelSpec, x: ArrayView1<'_, f64>, support: &ParticleBatch) -> Result<f64> {
    Ok(log_parzen_density(spec, x, support)?.exp())
}

pub fn log_parzen_density(
    spec: &KernelSpec,
    x: ArrayView1<'_, f64>,
    support: &ParticleBatch,
) -> Result<f64> {
    log_convolution(spec, x, &WeightedAtoms::uniform(support))
}

/// `∇ log p_τ(x)` of the Parzen estimate built on `support`.
pub fn parzen_score(
    spec: &KernelSpec,
    x: ArrayView1<'_, f64>,
    support: &ParticleBatch,
) -> Result<Vec<f64>> {
    convolution_score(spec, x, &WeightedAtoms::uniform(support))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::batch::Role;
    use crate::rng::RngHandle;
    use ndarray::{array, Array1};
    use rand::Rng;

    fn batch(rows: &[Vec<f64>]) -> ParticleBatch {
        ParticleBatch::from_rows(rows, Role::Data).unwrap()
    }

    fn random_batch(n: usize, d: usize, seed: u64) -> ParticleBatch {
        let mut r = RngHandle::new(seed, 0).rng();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| r.random_range(-1.5..1.5)).collect())
            .collect();
        batch(&rows)
    }

    #[test]
    fn kernel_values_at_known_points() {
        let x = batch(&[vec![0.3]]);
        let k = kernel_matrix(&KernelSpec::parzen(1.0), &x, &x).unwrap();
        assert!((k[[0, 0]] - 0.564_189_583_547_756_3).abs() < 1e-12);

        let g = kernel_matrix(&KernelSpec::gibbs(0.7), &x, &x).unwrap();
        assert_eq!(g[[0, 0]], 1.0);

        let a = batch(&[vec![0.0, 1.0]]);
        let b = batch(&[vec![1.0, 0.0]]);
        let k = kernel_matrix(&KernelSpec::gibbs(1.0), &a, &b).unwrap();
        assert!((k[[0, 0]] - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn log_and_direct_matrices_agree() {
        let a = random_batch(6, 3, 1);
        let b = random_batch(5, 3, 2);
        for spec in [
            KernelSpec::parzen(0.4),
            KernelSpec::gibbs(0.9),
            KernelSpec::gibbs_multi(vec![0.05, 0.2, 0.8]),
        ] {
            let direct = kernel_matrix(&spec, &a, &b).unwrap();
            let logm = log_kernel_matrix(&spec, &a, &b).unwrap();
            for (k, lk) in direct.iter().zip(logm.iter()) {
                assert!(((lk.exp() - k) / k).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn multi_bandwidth_is_sum_of_singles() {
        let a = random_batch(4, 2, 3);
        let b = random_batch(7, 2, 4);
        let widths = vec![0.05, 0.2, 0.8];
        let multi = kernel_matrix(&KernelSpec::gibbs_multi(widths.clone()), &a, &b).unwrap();
        let mut sum = Array2::<f64>::zeros((4, 7));
        for w in widths {
            sum = sum + kernel_matrix(&KernelSpec::gibbs(w), &a, &b).unwrap();
        }
        for (m, s) in multi.iter().zip(sum.iter()) {
            assert!((m - s).abs() <= 1e-14 * s.abs().max(1.0));
        }
    }

    #[test]
    fn density_of_self_support() {
        let s = batch(&[vec![0.25]]);
        let p = parzen_density(&KernelSpec::parzen(1.0), array![0.25].view(), &s).unwrap();
        assert!((p - PI.powf(-0.5)).abs() < 1e-15);
    }

    #[test]
    fn gibbs_two_atom_density() {
        // β at −D, 1 − β at +D, evaluated at +D
        let (d, beta, tau) = (1.0, 0.4, 0.5);
        let atoms = WeightedAtoms::new(&[vec![-d], vec![d]], &[beta, 1.0 - beta]).unwrap();
        let val = log_convolution(&KernelSpec::gibbs(tau), array![d].view(), &atoms)
            .unwrap()
            .exp();
        let eps = (-4.0 * d * d / tau).exp();
        assert!((val - ((1.0 - beta) + beta * eps)).abs() < 1e-15);
    }

    #[test]
    fn density_matches_direct_summation() {
        let mut r = RngHandle::new(8, 0).rng();
        let support: Vec<Vec<f64>> = (0..30).map(|_| vec![r.random_range(-3.0..3.0)]).collect();
        let s = batch(&support);
        let spec = KernelSpec::parzen(0.3);
        for q in 0..20 {
            let x = -4.0 + 0.4 * q as f64;
            let mut direct = 0.0;
            for y in &support {
                direct += (PI * 0.3f64).powf(-0.5) * (-(x - y[0]).powi(2) / 0.3).exp();
            }
            direct /= 30.0;
            let p = parzen_density(&spec, array![x].view(), &s).unwrap();
            assert!((p - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn score_special_cases() {
        let spec = KernelSpec::parzen(0.8);
        let sym = batch(&[vec![-1.0, 2.0], vec![1.0, 2.0]]);
        let s = parzen_score(&spec, array![0.0, 2.0].view(), &sym).unwrap();
        assert_eq!(s, vec![0.0, 0.0]);

        let one = batch(&[vec![0.5, -1.0]]);
        let x = array![0.1, 0.3];
        let s = parzen_score(&spec, x.view(), &one).unwrap();
        assert!((s[0] - 2.0 / 0.8 * 0.4).abs() < 1e-14);
        assert!((s[1] - 2.0 / 0.8 * -1.3).abs() < 1e-14);
    }

    #[test]
    fn score_matches_finite_differences() {
        let support = random_batch(12, 2, 21);
        let spec = KernelSpec::parzen(0.5);
        let h = 1e-5;
        let mut r = RngHandle::new(22, 0).rng();
        for _ in 0..20 {
            let x = Array1::from(vec![r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]);
            let s = parzen_score(&spec, x.view(), &support).unwrap();
            for k in 0..2 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += h;
                xm[k] -= h;
                let fd = (log_parzen_density(&spec, xp.view(), &support).unwrap()
                    - log_parzen_density(&spec, xm.view(), &support).unwrap())
                    / (2.0 * h);
                assert!((fd - s[k]).abs() <= 1e-5 * (1.0 + s[k].abs()));
            }
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(KernelSpec::parzen(0.0).validate().is_err());
        assert!(KernelSpec::gibbs_multi(vec![0.1, -1.0]).validate().is_err());
        let s = batch(&[vec![0.0]]);
        assert!(matches!(
            parzen_density(&KernelSpec::parzen(1.0), array![0.0, 1.0].view(), &s),
            Err(Error::Shape(_))
        ));
    }
}
