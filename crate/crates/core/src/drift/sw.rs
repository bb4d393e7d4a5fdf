//! Sliced-Wasserstein drift: per direction, the 1D optimal map between the
//! projected batches, averaged over directions.
//!
//! The 1D map is quantile matching. Model particle of rank `r` (of `N⁻`) sits
//! at level `(r + ½)/N⁻` and is sent to the data quantile at that level,
//! linearly interpolated between sorted data projections when `N⁺ ≠ N⁻`. With
//! equal sizes this is the sorted assignment. Sorts are stable on
//! `(value, index)`.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand_distr::{Distribution, StandardNormal};

use crate::batch::{check_same_dim, ParticleBatch};
use crate::error::{Error, Result};
use crate::rng::RngHandle;

pub const DEFAULT_SLICES: usize = 32;

fn sorted_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    idx
}

/// Target of the rank-`r` model projection among `n_model`, given sorted data
/// projections.
fn quantile_target(r: usize, n_model: usize, sorted_data: &[f64]) -> f64 {
    let n_data = sorted_data.len();
    if n_data == n_model {
        return sorted_data[r];
    }
    let num = (2 * r + 1) as f64 * n_data as f64 - n_model as f64;
    let pos = (num / (2 * n_model) as f64).clamp(0.0, (n_data - 1) as f64);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n_data - 1);
    let t = pos - lo as f64;
    if t == 0.0 {
        sorted_data[lo]
    } else {
        (1.0 - t) * sorted_data[lo] + t * sorted_data[hi]
    }
}

/// `L` directions uniform on the unit sphere; direction `l` comes from
/// `rng.substream(l)`.
pub fn sample_directions(n_slices: usize, d: usize, rng: RngHandle) -> Array2<f64> {
    let mut out = Array2::zeros((n_slices, d));
    for l in 0..n_slices {
        let mut r = rng.substream(l as u64).rng();
        loop {
            let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut r)).collect();
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm > 1e-12 {
                for (k, a) in v.iter().enumerate() {
                    out[[l, k]] = a / norm;
                }
                break;
            }
        }
    }
    out
}

/// Displacement `T_θ(θ·x_i) − θ·x_i` of every model particle along one direction.
pub fn slice_displacements(
    direction: ArrayView1<'_, f64>,
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
) -> Vec<f64> {
    let px: Vec<f64> = x.rows().into_iter().map(|r| r.dot(&direction)).collect();
    let py: Vec<f64> = y.rows().into_iter().map(|r| r.dot(&direction)).collect();
    let sorted_y: Vec<f64> = sorted_order(&py).into_iter().map(|j| py[j]).collect();
    let mut out = vec![0.0; px.len()];
    for (rank, i) in sorted_order(&px).into_iter().enumerate() {
        out[i] = quantile_target(rank, px.len(), &sorted_y) - px[i];
    }
    out
}

/// SW drift with an explicit `L × d` direction set.
pub fn sw_drift_with_directions(
    x_batch: &ParticleBatch,
    y_batch: &ParticleBatch,
    directions: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    check_same_dim(x_batch, y_batch)?;
    if directions.nrows() == 0 {
        return Err(Error::Argument("at least one slice direction is required".into()));
    }
    if directions.ncols() != x_batch.dim() {
        return Err(Error::Shape("direction dimension differs from batches".into()));
    }
    let x = x_batch.positions();
    let mut out = Array2::zeros(x.raw_dim());
    for theta in directions.rows() {
        let disp = slice_displacements(theta, x, y_batch.positions());
        for (i, s) in disp.iter().enumerate() {
            for k in 0..theta.len() {
                out[[i, k]] += s * theta[k];
            }
        }
    }
    let l = directions.nrows() as f64;
    out.mapv_inplace(|v| v / l);
    Ok(out)
}

/// SW drift with `n_slices` fresh uniform directions drawn from `rng`.
pub fn sw_drift(
    x_batch: &ParticleBatch,
    y_batch: &ParticleBatch,
    n_slices: usize,
    rng: RngHandle,
) -> Result<Array2<f64>> {
    if n_slices == 0 {
        return Err(Error::Argument("n_slices must be >= 1".into()));
    }
    let dirs = sample_directions(n_slices, x_batch.dim(), rng);
    sw_drift_with_directions(x_batch, y_batch, dirs.view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::batch::Role;
    use ndarray::array;

    #[test]
    fn hand_sorted_example() {
        let x = ParticleBatch::from_rows(&[vec![2.0], vec![0.0]], Role::Model).unwrap();
        let y = ParticleBatch::from_rows(&[vec![3.0], vec![1.0]], Role::Data).unwrap();
        let v = sw_drift_with_directions(&x, &y, array![[1.0]].view()).unwrap();
        assert_eq!(v, array![[1.0], [1.0]]);
    }

    #[test]
    fn identical_batches_give_zero() {
        let x = ParticleBatch::from_rows(&[vec![0.3, 1.0], vec![-0.2, 0.4], vec![0.3, 1.0]], Role::Model)
            .unwrap();
        let v = sw_drift(&x, &x.with_role(Role::Data), 16, RngHandle::new(3, 0)).unwrap();
        assert!(v.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn unequal_sizes_interpolate_quantiles() {
        // one model point at level 1/2 between data {0, 1}: target is the midpoint
        let x = ParticleBatch::from_rows(&[vec![5.0]], Role::Model).unwrap();
        let y = ParticleBatch::from_rows(&[vec![1.0], vec![0.0]], Role::Data).unwrap();
        let v = sw_drift_with_directions(&x, &y, array![[1.0]].view()).unwrap();
        assert_eq!(v[[0, 0]], -4.5);
        // two model points onto a single data point
        let x2 = ParticleBatch::from_rows(&[vec![0.0], vec![1.0]], Role::Model).unwrap();
        let y2 = ParticleBatch::from_rows(&[vec![3.0]], Role::Data).unwrap();
        let v2 = sw_drift_with_directions(&x2, &y2, array![[1.0]].view()).unwrap();
        assert_eq!(v2, array![[3.0], [2.0]]);
    }

    #[test]
    fn directions_are_unit_and_deterministic() {
        let a = sample_directions(8, 3, RngHandle::new(1, 2));
        let b = sample_directions(8, 3, RngHandle::new(1, 2));
        assert_eq!(a, b);
        for r in a.rows() {
            assert!((r.dot(&r) - 1.0).abs() < 1e-12);
        }
    }
}
