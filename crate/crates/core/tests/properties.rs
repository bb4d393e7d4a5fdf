use driftflow::drift::kl::kl_drift;
use driftflow::drift::mmd::mmd_drift;
use driftflow::drift::sinkhorn::{sinkhorn_proxy_drift, sinkhorn_solve, ProxyVariant, SinkhornConfig};
use driftflow::drift::sw::{sw_drift, sw_drift_with_directions};
use driftflow::kernels::{kernel_matrix, log_kernel_matrix, parzen_score};
use driftflow::numeric::pairwise_sq_dists;
use driftflow::{compute_drift, sample_dataset, DatasetName, DatasetSpec, DriftConfig, DriftKind, KernelSpec, ParticleBatch, RngHandle, Role};
use ndarray::{array, Array2};
use proptest::prelude::*;

fn points(n: std::ops::Range<usize>, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-2.0f64..2.0, d), n)
}

fn batch(rows: &[Vec<f64>], role: Role) -> ParticleBatch {
    ParticleBatch::from_rows(rows, role).unwrap()
}

fn shifted(rows: &[Vec<f64>], s: &[f64], role: Role) -> ParticleBatch {
    let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().zip(s).map(|(a, b)| a + b).collect()).collect();
    batch(&rows, role)
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sq_dists_nonnegative_with_zero_diagonal(rows in points(1..8, 3)) {
        let b = batch(&rows, Role::Model);
        let d = pairwise_sq_dists(&b, &b).unwrap();
        prop_assert!(d.iter().all(|v| *v >= 0.0));
        for i in 0..rows.len() {
            prop_assert_eq!(d[[i, i]], 0.0);
        }
    }

    #[test]
    fn log_and_direct_kernels_agree(a in points(1..6, 2), b in points(1..6, 2), tau in 0.2f64..3.0) {
        for spec in [KernelSpec::parzen(tau), KernelSpec::gibbs(tau)] {
            let (x, y) = (batch(&a, Role::Model), batch(&b, Role::Data));
            let direct = kernel_matrix(&spec, &x, &y).unwrap();
            let logk = log_kernel_matrix(&spec, &x, &y).unwrap();
            for (d, l) in direct.iter().zip(logk.iter()) {
                prop_assert!((d - l.exp()).abs() <= 1e-12 * d.abs().max(f64::MIN_POSITIVE));
            }
        }
    }

    #[test]
    fn multi_bandwidth_is_a_sum(a in points(1..5, 2), b in points(1..5, 2)) {
        let (x, y) = (batch(&a, Role::Model), batch(&b, Role::Data));
        let widths = vec![0.1, 0.5, 2.0];
        let sum = kernel_matrix(&KernelSpec::gibbs_multi(widths.clone()), &x, &y).unwrap();
        let mut parts = Array2::zeros(sum.raw_dim());
        for w in widths {
            parts = parts + kernel_matrix(&KernelSpec::gibbs(w), &x, &y).unwrap();
        }
        prop_assert!(max_abs_diff(&sum, &parts) < 1e-12);

        let v = mmd_drift(&KernelSpec::gibbs_multi(vec![0.1, 0.5, 2.0]), &x, &y).unwrap();
        let mut vs = Array2::zeros(v.raw_dim());
        for w in [0.1, 0.5, 2.0] {
            vs = vs + mmd_drift(&KernelSpec::gibbs(w), &x, &y).unwrap();
        }
        prop_assert!(max_abs_diff(&v, &vs) < 1e-12);
    }

    #[test]
    fn kl_drift_is_scaled_score_difference(a in points(1..6, 2), b in points(1..6, 2), tau in 0.3f64..3.0) {
        let spec = KernelSpec::parzen(tau);
        let (x, y) = (batch(&a, Role::Model), batch(&b, Role::Data));
        let v = kl_drift(&spec, &x, &y, false).unwrap();
        for (i, xi) in x.positions().rows().into_iter().enumerate() {
            let sp = parzen_score(&spec, xi, &y).unwrap();
            let sq = parzen_score(&spec, xi, &x).unwrap();
            for k in 0..2 {
                let want = tau / 2.0 * (sp[k] - sq[k]);
                prop_assert!((v[[i, k]] - want).abs() < 1e-10 * (1.0 + want.abs()));
            }
        }
    }

    #[test]
    fn kl_and_proxy_are_translation_invariant(
        a in points(2..6, 2),
        b in points(1..6, 2),
        s in prop::collection::vec(-5.0f64..5.0, 2),
    ) {
        let (x, y) = (batch(&a, Role::Model), batch(&b, Role::Data));
        let (xs, ys) = (shifted(&a, &s, Role::Model), shifted(&b, &s, Role::Data));
        let spec = KernelSpec::parzen(0.8);
        let k0 = kl_drift(&spec, &x, &y, false).unwrap();
        let k1 = kl_drift(&spec, &xs, &ys, false).unwrap();
        prop_assert!(max_abs_diff(&k0, &k1) < 1e-9);
        for variant in [ProxyVariant::Ours, ProxyVariant::Da2] {
            let p0 = sinkhorn_proxy_drift(0.8, &x, &y, variant, false).unwrap();
            let p1 = sinkhorn_proxy_drift(0.8, &xs, &ys, variant, false).unwrap();
            prop_assert!(max_abs_diff(&p0, &p1) < 1e-9);
        }
    }

    #[test]
    fn deterministic_kinds_vanish_on_identical_batches(a in points(2..7, 2), tau in 0.2f64..2.0) {
        let x = batch(&a, Role::Model);
        let y = x.with_role(Role::Data);
        for kind in [DriftKind::Kl, DriftKind::Mmd, DriftKind::SinkhornProxy, DriftKind::SinkhornProxyDa2, DriftKind::Sw, DriftKind::SmoothedKl] {
            let mut cfg = DriftConfig::new(kind, tau);
            cfg.mc_samples = 4;
            let v = compute_drift(&cfg, &x, &y, RngHandle::new(0, 3)).unwrap();
            prop_assert!(v.iter().all(|c| *c == 0.0), "{}", kind);
        }
    }

    #[test]
    fn converged_plans_are_row_stochastic(a in points(2..6, 1), b in points(2..6, 1), tau in 0.3f64..2.0) {
        let cfg = SinkhornConfig { max_iters: 20_000, ..SinkhornConfig::new(tau) };
        let plan = sinkhorn_solve(&cfg, &batch(&a, Role::Model), &batch(&b, Role::Data)).unwrap();
        prop_assume!(plan.converged);
        for r in plan.conditional().rows() {
            prop_assert!((r.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn sw_is_rotation_equivariant(a in points(3..8, 2), b in points(3..8, 2), angle in 0.0f64..6.283) {
        prop_assume!(a.len() == b.len());
        let (c, s) = (angle.cos(), angle.sin());
        let rot = array![[c, -s], [s, c]];
        let rotate = |rows: &Vec<Vec<f64>>, role| {
            let m = Array2::from_shape_vec((rows.len(), 2), rows.concat()).unwrap();
            ParticleBatch::new(m.dot(&rot.t()), role, 0).unwrap()
        };
        let dirs = driftflow::drift::sw::sample_directions(5, 2, RngHandle::new(1, 0));
        let v = sw_drift_with_directions(&batch(&a, Role::Model), &batch(&b, Role::Data), dirs.view()).unwrap();
        let vr = sw_drift_with_directions(&rotate(&a, Role::Model), &rotate(&b, Role::Data), dirs.dot(&rot.t()).view()).unwrap();
        prop_assert!(max_abs_diff(&v.dot(&rot.t()), &vr) < 1e-9);
    }

    #[test]
    fn sw_in_one_dimension_is_the_monotone_map(a in prop::collection::vec(-3.0f64..3.0, 1..9), seed in 0u64..100) {
        let b: Vec<f64> = a.iter().map(|v| 0.5 * v * v - 1.0).collect();
        let x = batch(&a.iter().map(|v| vec![*v]).collect::<Vec<_>>(), Role::Model);
        let y = batch(&b.iter().map(|v| vec![*v]).collect::<Vec<_>>(), Role::Data);
        let v = sw_drift(&x, &y, 1, RngHandle::new(seed, 0)).unwrap();
        let mut xs = a.clone();
        let mut ys = b.clone();
        xs.sort_by(f64::total_cmp);
        ys.sort_by(f64::total_cmp);
        for (i, xi) in a.iter().enumerate() {
            let rank = xs.iter().position(|u| u == xi).unwrap();
            prop_assert!((v[[i, 0]] - (ys[rank] - xi)).abs() < 1e-12);
        }
    }

    #[test]
    fn samplers_are_reproducible(seed in any::<u64>(), stream in 0u64..8) {
        for name in DatasetName::ALL {
            let spec = DatasetSpec::new(name);
            let a = sample_dataset(&spec, 7, RngHandle::new(seed, stream)).unwrap();
            let b = sample_dataset(&spec, 7, RngHandle::new(seed, stream)).unwrap();
            prop_assert_eq!(a.positions(), b.positions());
        }
    }
}
