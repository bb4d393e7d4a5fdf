//! Shared numeric primitives: squared distances and max-shifted log-sum-exp.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::batch::{check_same_dim, ParticleBatch};
use crate::error::{Error, Result};

/// `‖a_i − b_j‖²` for every pair of rows.
pub fn pairwise_sq_dists(a: &ParticleBatch, b: &ParticleBatch) -> Result<Array2<f64>> {
    check_same_dim(a, b)?;
    Ok(sq_dists(a.positions(), b.positions()))
}

/// Row-pairwise squared distances on raw views. Computed as an explicit sum of
/// squared differences so the diagonal of a self-comparison is exactly zero.
pub fn sq_dists(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = Array2::zeros((a.nrows(), b.nrows()));
    for (i, ai) in a.rows().into_iter().enumerate() {
        for (j, bj) in b.rows().into_iter().enumerate() {
            out[[i, j]] = sq_dist(ai, bj);
        }
    }
    out
}

#[inline]
pub(crate) fn sq_dist_slice(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `log Σ exp(v_k)` with max-shift. Errors on empty input.
pub fn logsumexp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Argument("logsumexp of an empty vector".into()));
    }
    Ok(lse(values.iter().copied()))
}

/// Infallible log-sum-exp over an iterator; `-inf` when empty or all `-inf`.
pub fn lse<I: IntoIterator<Item = f64>>(values: I) -> f64
where
    I::IntoIter: Clone,
{
    let it = values.into_iter();
    let max = it.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let s: f64 = it.map(|v| (v - max).exp()).sum();
    max + s.ln()
}

/// Log-sum-exp of each row.
pub fn row_lse(m: ArrayView2<'_, f64>) -> Vec<f64> {
    m.rows().into_iter().map(|r| lse(r.iter().copied())).collect()
}

/// Log-sum-exp of each column.
pub fn col_lse(m: ArrayView2<'_, f64>) -> Vec<f64> {
    m.axis_iter(Axis(1))
        .map(|c| lse(c.iter().copied()))
        .collect()
}

/// Softmax-weighted average of `points` rows using log-weights `logw`,
/// returned as `Σ_j w_j (points_j − origin)`.
pub(crate) fn weighted_displacement(
    logw: ArrayView1<'_, f64>,
    points: ArrayView2<'_, f64>,
    origin: ArrayView1<'_, f64>,
) -> Vec<f64> {
    let logw = logw.as_standard_layout();
    let points = points.as_standard_layout();
    let origin = origin.to_vec();
    weighted_displacement_slice(
        logw.as_slice().expect("standard layout"),
        points.as_slice().expect("standard layout"),
        &origin,
    )
}

/// Slice form of [`weighted_displacement`]; `points` is row-major with
/// `origin.len()` columns.
pub(crate) fn weighted_displacement_slice(logw: &[f64], points: &[f64], origin: &[f64]) -> Vec<f64> {
    let norm = lse(logw.iter().copied());
    let d = origin.len();
    let mut out = vec![0.0; d];
    for (lw, p) in logw.iter().zip(points.chunks_exact(d)) {
        let w = (lw - norm).exp();
        if w == 0.0 {
            continue;
        }
        for k in 0..d {
            out[k] += w * (p[k] - origin[k]);
        }
    }
    out
}
