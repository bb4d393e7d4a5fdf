//! MMD-flow drift with (possibly multi-width) Gibbs kernels.
//!
//! The witness `g(x) = mean_k k(x, x_k) − mean_j k(x, y_j)` is the first
//! variation of `½ MMD²`, and the drift is `−∇g`.

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::batch::{check_same_dim, ParticleBatch};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::numeric::sq_dist;

/// `(−2/w · norm_w, 1/w)` per kernel width, so a pair costs one exp per width.
fn grad_terms(spec: &KernelSpec, d: usize) -> Vec<(f64, f64)> {
    spec.widths()
        .iter()
        .map(|&w| (-(2.0 / w) * spec.norm(w, d), 1.0 / w))
        .collect()
}

fn mean_grad(terms: &[(f64, f64)], x: &[f64], points: &[f64], acc: &mut [f64]) {
    let d = x.len();
    acc.iter_mut().for_each(|a| *a = 0.0);
    for z in points.chunks_exact(d) {
        let mut r2 = 0.0;
        for k in 0..d {
            let t = x[k] - z[k];
            r2 += t * t;
        }
        let mut coef = 0.0;
        for &(c, inv_w) in terms {
            coef += c * (-r2 * inv_w).exp();
        }
        for k in 0..d {
            acc[k] += coef * (x[k] - z[k]);
        }
    }
    let n = (points.len() / d) as f64;
    acc.iter_mut().for_each(|a| *a /= n);
}

/// MMD drift at arbitrary query points.
pub fn mmd_drift_field(
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
    let d = query.ncols();
    let terms = grad_terms(spec, d);
    let ys = y_batch.positions().as_standard_layout().into_owned();
    let xs = x_batch.positions().as_standard_layout().into_owned();
    let (ys, xs) = (ys.as_slice().expect("standard layout"), xs.as_slice().expect("standard layout"));
    let mut out = Array2::zeros(query.raw_dim());
    let (mut a, mut r) = (vec![0.0; d], vec![0.0; d]);
    for (i, q) in query.rows().into_iter().enumerate() {
        let q = q.to_vec();
        mean_grad(&terms, &q, ys, &mut a);
        mean_grad(&terms, &q, xs, &mut r);
        for k in 0..d {
            out[[i, k]] = a[k] - r[k];
        }
    }
    Ok(out)
}

/// `V_i = mean_j ∇k(x_i, y_j) − mean_k ∇k(x_i, x_k)` at every model particle.
pub fn mmd_drift(spec: &KernelSpec, x_batch: &ParticleBatch, y_batch: &ParticleBatch) -> Result<Array2<f64>> {
    mmd_drift_field(spec, x_batch.positions(), x_batch, y_batch)
}

/// Empirical witness `mean_k k(z, x_k) − mean_j k(z, y_j)`.
pub fn mmd_witness(
    spec: &KernelSpec,
    z: ArrayView1<'_, f64>,
    x_batch: &ParticleBatch,
    y_batch: &ParticleBatch,
) -> Result<f64> {
    spec.validate()?;
    check_same_dim(x_batch, y_batch)?;
    if z.len() != x_batch.dim() {
        return Err(Error::Shape("query dimension differs from batches".into()));
    }
    let d = z.len();
    let mean_k = |pts: ArrayView2<'_, f64>| {
        pts.rows().into_iter().map(|p| spec.eval_sq(sq_dist(z, p), d)).sum::<f64>() / pts.nrows() as f64
    };
    Ok(mean_k(x_batch.positions()) - mean_k(y_batch.positions()))
}

fn mean_kernel(spec: &KernelSpec, a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    let d = a.ncols();
    let mut s = 0.0;
    for ai in a.rows() {
        for bj in b.rows() {
            s += spec.eval_sq(sq_dist(ai, bj), d);
        }
    }
    s / (a.nrows() * b.nrows()) as f64
}

/// Biased (V-statistic) MMD² between the two batches under `spec`. Its
/// gradient in particle `x_i` is `−(2/N⁻) V_i`.
pub fn mmd2(spec: &KernelSpec, x_batch: &ParticleBatch, y_batch: &ParticleBatch) -> Result<f64> {
    spec.validate()?;
    check_same_dim(x_batch, y_batch)?;
    Ok(mmd2_raw(spec, x_batch.positions(), y_batch.positions()))
}

pub(crate) fn mmd2_raw(spec: &KernelSpec, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> f64 {
    mean_kernel(spec, x, x) - 2.0 * mean_kernel(spec, x, y) + mean_kernel(spec, y, y)
}
