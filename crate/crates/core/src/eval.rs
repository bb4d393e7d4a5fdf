//! Median-heuristic MMD² and its permutation null.
//!
//! Bandwidth convention: the lower median `m` of the squared distances over
//! all unordered pairs `i < j` of the pooled batch; the kernel is
//! `exp(−‖a − b‖²/m)`. The statistic is the biased V-statistic, so identical
//! batches score exactly zero.

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;

use crate::batch::{check_same_dim, ParticleBatch};
use crate::error::{Error, Result};
use crate::numeric::sq_dist;
use crate::rng::RngHandle;

pub const DEFAULT_PERMUTATIONS: usize = 200;

fn pooled(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Array2<f64> {
    concatenate(Axis(0), &[x, y]).expect("same column count")
}

/// Lower median of pooled pairwise squared distances.
pub fn median_bandwidth(x_batch: &ParticleBatch, y_batch: &ParticleBatch) -> Result<f64> {
    check_same_dim(x_batch, y_batch)?;
    median_sq_dist(pooled(x_batch.positions(), y_batch.positions()).view())
}

pub(crate) fn median_sq_dist(pool: ArrayView2<'_, f64>) -> Result<f64> {
    let n = pool.nrows();
    if n < 2 {
        return Err(Error::Argument("median heuristic needs at least two points".into()));
    }
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            d.push(sq_dist(pool.row(i), pool.row(j)));
        }
    }
    let k = (d.len() - 1) / 2;
    let (_, m, _) = d.select_nth_unstable_by(k, f64::total_cmp);
    let m = *m;
    if m <= 0.0 {
        return Err(Error::Argument(
            "degenerate median bandwidth: pooled points are (mostly) identical".into(),
        ));
    }
    Ok(m)
}

fn mean_gauss(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, m: f64) -> f64 {
    let mut s = 0.0;
    for ai in a.rows() {
        for bj in b.rows() {
            s += (-sq_dist(ai, bj) / m).exp();
        }
    }
    s / (a.nrows() * b.nrows()) as f64
}

/// V-statistic MMD² with Gaussian kernel `exp(−r²/m)`.
pub fn mmd2_with_bandwidth(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, m: f64) -> f64 {
    mean_gauss(x, x, m) - 2.0 * mean_gauss(x, y, m) + mean_gauss(y, y, m)
}

/// Evaluation metric: V-statistic MMD² at the median-heuristic bandwidth.
pub fn mmd2_median(x_batch: &ParticleBatch, y_batch: &ParticleBatch) -> Result<f64> {
    let m = median_bandwidth(x_batch, y_batch)?;
    Ok(mmd2_with_bandwidth(x_batch.positions(), y_batch.positions(), m))
}

/// MMD² values after randomly relabelling the pooled points, split back into
/// sizes `|x|` and `|y|`. The pooled median is permutation invariant, so one
/// bandwidth serves every draw.
pub fn permutation_null(
    x_batch: &ParticleBatch,
    y_batch: &ParticleBatch,
    n_perm: usize,
    rng: RngHandle,
) -> Result<Vec<f64>> {
    if n_perm == 0 {
        return Err(Error::Argument("n_perm must be >= 1".into()));
    }
    check_same_dim(x_batch, y_batch)?;
    let pool = pooled(x_batch.positions(), y_batch.positions());
    let m = median_sq_dist(pool.view())?;
    let nx = x_batch.len();
    let mut idx: Vec<usize> = (0..pool.nrows()).collect();
    let mut r = rng.rng();
    let mut out = Vec::with_capacity(n_perm);
    for _ in 0..n_perm {
        idx.shuffle(&mut r);
        let a = pool.select(Axis(0), &idx[..nx]);
        let b = pool.select(Axis(0), &idx[nx..]);
        out.push(mmd2_with_bandwidth(a.view(), b.view(), m));
    }
    Ok(out)
}

/// Empirical `q`-quantile (nearest rank, upper) of a sample.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}
