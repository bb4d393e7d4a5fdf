use driftflow::drift::kl::{kl_drift, kl_drift_field, smoothed_kl_drift};
use driftflow::drift::mmd::mmd_drift;
use driftflow::drift::sinkhorn::{
    population_proxy_drift, proxy_population_scale, sinkhorn_divergence, sinkhorn_exact_drift,
    sinkhorn_proxy_drift, sinkhorn_proxy_drift_rows, ProxyVariant, SinkhornConfig,
};
use driftflow::drift::sw::{sample_directions, sw_drift_with_directions};
use driftflow::{KernelSpec, ParticleBatch, RngHandle, Role, WeightedAtoms};
use ndarray::{array, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn batch(rows: &[&[f64]], role: Role) -> ParticleBatch {
    let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
    ParticleBatch::from_rows(&rows, role).unwrap()
}

fn parzen_score_1d(x: f64, support: &[f64], tau: f64) -> f64 {
    let w: Vec<f64> = support.iter().map(|y| (-(x - y).powi(2) / tau).exp()).collect();
    let total: f64 = w.iter().sum();
    let mean: f64 = w.iter().zip(support).map(|(w, y)| w * y).sum::<f64>() / total;
    2.0 / tau * (mean - x)
}

#[test]
fn smoothed_kl_converges_to_quadrature() {
    let tau = 1.0;
    let p = [-1.0, 0.3, 1.2];
    let q = [0.5, 2.0];
    let y0 = 0.2;

    // trapezoid rule for E_{x ~ N(y0, tau/2)}[s_p(x) - s_q(x)]
    let sd = (tau / 2.0f64).sqrt();
    let (lo, hi, n) = (y0 - 12.0 * sd, y0 + 12.0 * sd, 40_001);
    let h = (hi - lo) / (n - 1) as f64;
    let mut oracle = 0.0;
    for k in 0..n {
        let x = lo + h * k as f64;
        let phi = (-(x - y0).powi(2) / (2.0 * sd * sd)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
        let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
        oracle += w * h * phi * (parzen_score_1d(x, &p, tau) - parzen_score_1d(x, &q, tau));
    }

    let model = batch(&[&[0.5], &[2.0]], Role::Model);
    let data = batch(&[&[-1.0], &[0.3], &[1.2]], Role::Data);
    let est = smoothed_kl_drift(&KernelSpec::parzen(tau), &model, &data, array![[y0]].view(), 100_000, RngHandle::new(3, 0))
        .unwrap();
    let v = est.velocity[[0, 0]];
    assert!(((v - oracle) / oracle).abs() < 1e-2, "mc {v} quadrature {oracle}");
    assert!(est.std_err[[0, 0]] > 0.0);
}

#[test]
fn smoothed_kl_differs_from_kl_on_asymmetric_instance() {
    let spec = KernelSpec::parzen(0.8);
    let model = batch(&[&[0.3], &[1.5]], Role::Model);
    let data = batch(&[&[-1.0], &[0.7]], Role::Data);
    let q = array![[0.0]];
    // compare in score units: the smoothed velocity has no tau/2 factor
    let kl = kl_drift_field(&spec, q.view(), &model, &data).unwrap()[[0, 0]] * 2.0 / spec.tau;
    let sm = smoothed_kl_drift(&spec, &model, &data, q.view(), 20_000, RngHandle::new(1, 0)).unwrap();
    assert!((sm.velocity[[0, 0]] - kl).abs() > 5.0 * sm.std_err[[0, 0]]);
}

#[test]
fn kl_two_delta_drift_leading_order() {
    let (d, alpha, beta, tau): (f64, f64, f64, f64) = (1.0, 0.8, 0.4, 0.5);
    let eps = (-4.0 * d * d / tau).exp();
    let spec = KernelSpec::parzen(tau);
    let p = WeightedAtoms::new(&[vec![-d], vec![d]], &[alpha, 1.0 - alpha]).unwrap();
    let q = WeightedAtoms::new(&[vec![-d], vec![d]], &[beta, 1.0 - beta]).unwrap();
    let v = driftflow::drift::kl::population_kl_drift(&spec, array![d].view(), &p, &q).unwrap()[0];
    let lead = -2.0 * d * eps * (alpha / (1.0 - alpha) - beta / (1.0 - beta));
    assert!(((v - lead) / lead).abs() < 10.0 * eps, "{v} vs {lead}");
}

/// Straight transcription of the one-shot proxy with explicit matrices.
fn proxy_oracle(x: &Array2<f64>, y: &Array2<f64>, tau: f64, da2: bool) -> Array2<f64> {
    let (n, m, d) = (x.nrows(), y.nrows(), x.ncols());
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>();
    let mut kp = Array2::zeros((n, m));
    let mut km = Array2::zeros((n, n));
    for i in 0..n {
        let xi = x.row(i).to_vec();
        for j in 0..m {
            kp[[i, j]] = (-dist(&xi, &y.row(j).to_vec()) / tau).exp();
        }
        for k in 0..n {
            km[[i, k]] = (-dist(&xi, &x.row(k).to_vec()) / tau).exp();
        }
    }
    let mut ap = Array2::zeros((n, m));
    let mut am = Array2::zeros((n, n));
    for i in 0..n {
        let rp: f64 = kp.row(i).sum();
        let rm: f64 = km.row(i).sum();
        let (rp, rm) = if da2 { (rp + rm, rp + rm) } else { (rp, rm) };
        for j in 0..m {
            let cp: f64 = kp.column(j).sum();
            ap[[i, j]] = ((kp[[i, j]] / rp) * (kp[[i, j]] / cp)).sqrt();
        }
        for k in 0..n {
            let cm: f64 = km.column(k).sum();
            am[[i, k]] = ((km[[i, k]] / rm) * (km[[i, k]] / cm)).sqrt();
        }
    }
    let mut out = Array2::zeros((n, d));
    for i in 0..n {
        let sp: f64 = ap.row(i).sum();
        let sm: f64 = am.row(i).sum();
        for c in 0..d {
            let a: f64 = (0..m).map(|j| ap[[i, j]] * sm * y[[j, c]]).sum();
            let r: f64 = (0..n).map(|k| am[[i, k]] * sp * x[[k, c]]).sum();
            out[[i, c]] = a - r;
        }
    }
    out
}

#[test]
fn proxy_matches_transcription_oracle() {
    let mut r = RngHandle::new(11, 0).rng();
    let x = Array2::from_shape_fn((3, 2), |_| r.random_range(-1.0..1.0));
    let y = Array2::from_shape_fn((4, 2), |_| r.random_range(-1.0..1.5));
    let xb = ParticleBatch::new(x.clone(), Role::Model, 0).unwrap();
    let yb = ParticleBatch::new(y.clone(), Role::Data, 0).unwrap();
    for (variant, da2) in [(ProxyVariant::Ours, false), (ProxyVariant::Da2, true)] {
        let got = sinkhorn_proxy_drift(0.7, &xb, &yb, variant, false).unwrap();
        let want = proxy_oracle(&x, &y, 0.7, da2);
        for (g, w) in got.iter().zip(want.iter()) {
            assert!((g - w).abs() < 1e-12, "{variant:?}: {g} vs {w}");
        }
    }
}

#[test]
fn proxy_two_delta_ratio_to_kl() {
    let (d, alpha, beta, tau): (f64, f64, f64, f64) = (1.0, 0.8, 0.4, 0.3);
    let eps = (-4.0 * d * d / tau).exp();
    let p = WeightedAtoms::new(&[vec![-d], vec![d]], &[alpha, 1.0 - alpha]).unwrap();
    let q = WeightedAtoms::new(&[vec![-d], vec![d]], &[beta, 1.0 - beta]).unwrap();
    let sp = population_proxy_drift(array![d].view(), &p, &q, tau).unwrap().drift[0];
    let kl = driftflow::drift::kl::population_kl_drift(&KernelSpec::parzen(tau), array![d].view(), &p, &q).unwrap()[0];
    let ratio = sp / kl;
    assert!((ratio - 0.5f64.sqrt()).abs() < 20.0 * eps, "ratio {ratio}");
}

#[test]
fn population_toy_values() {
    let p = WeightedAtoms::new(&[vec![1.0, 0.0]], &[1.0]).unwrap();
    let q = WeightedAtoms::new(&[vec![-1.0, 0.0]], &[1.0]).unwrap();
    let out = population_proxy_drift(array![0.0, 1.0].view(), &p, &q, 1.0).unwrap();
    assert!((out.z - 1.0).abs() < 1e-12);
    // w+ = e, w- = 1/e, so V = (1, -1) - (-1, -1)
    assert!((out.drift[0] - 2.0).abs() < 1e-12 && out.drift[1].abs() < 1e-12);
}

/// 1D Gaussian as a fine grid of weighted atoms.
fn gaussian_atoms(mean: f64, sd: f64) -> WeightedAtoms {
    let n = 4001;
    let (lo, hi) = (mean - 9.0 * sd, mean + 9.0 * sd);
    let h = (hi - lo) / (n - 1) as f64;
    let rows: Vec<Vec<f64>> = (0..n).map(|k| vec![lo + h * k as f64]).collect();
    let w: Vec<f64> = rows.iter().map(|r| (-(r[0] - mean).powi(2) / (2.0 * sd * sd)).exp()).collect();
    let total: f64 = w.iter().sum();
    let w: Vec<f64> = w.iter().map(|v| v / total).collect();
    WeightedAtoms::new(&rows, &w).unwrap()
}

#[test]
fn empirical_proxy_tends_to_population_form() {
    let tau = 1.0;
    let (pm, ps, qm, qs) = (1.0, 0.5, -0.5, 1.0);
    let p = gaussian_atoms(pm, ps);
    let q = gaussian_atoms(qm, qs);
    let probes = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let pop: Vec<f64> = probes
        .iter()
        .map(|&x| population_proxy_drift(array![x].view(), &p, &q, tau).unwrap().drift[0])
        .collect();

    let n = 4096;
    let reps = 12;
    let mut draws = vec![Vec::new(); probes.len()];
    for rep in 0..reps {
        let mut r = RngHandle::new(100 + rep, 0).rng();
        let (dp, dq) = (Normal::new(pm, ps).unwrap(), Normal::new(qm, qs).unwrap());
        let mut x: Vec<f64> = probes.to_vec();
        x.extend((0..n).map(|_| dq.sample(&mut r)));
        let y: Vec<f64> = (0..n).map(|_| dp.sample(&mut r)).collect();
        let xb = ParticleBatch::new(Array2::from_shape_vec((x.len(), 1), x).unwrap(), Role::Model, 0).unwrap();
        let yb = ParticleBatch::new(Array2::from_shape_vec((n, 1), y).unwrap(), Role::Data, 0).unwrap();
        let rows: Vec<usize> = (0..probes.len()).collect();
        let v = sinkhorn_proxy_drift_rows(tau, &xb, &yb, ProxyVariant::Ours, false, &rows).unwrap();
        let scale = proxy_population_scale(xb.len(), yb.len());
        for (k, d) in draws.iter_mut().enumerate() {
            d.push(v[[k, 0]] * scale);
        }
    }
    for (k, d) in draws.iter().enumerate() {
        let mean = d.iter().sum::<f64>() / reps as f64;
        let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let se = (var / reps as f64).sqrt();
        assert!(
            (mean - pop[k]).abs() < 3.0 * se,
            "probe {}: empirical {mean} +- {se}, population {}",
            probes[k],
            pop[k]
        );
    }
}

#[test]
fn exact_sinkhorn_drift_is_scaled_divergence_gradient() {
    let x = batch(&[&[-0.8], &[-0.1], &[0.4], &[0.9]], Role::Model);
    let y = batch(&[&[-0.3], &[0.2], &[0.6], &[1.4]], Role::Data);
    let cfg = SinkhornConfig {
        max_iters: 100_000,
        marginal_tol: 1e-12,
        ..SinkhornConfig::new(0.5)
    };
    let v = sinkhorn_exact_drift(&cfg, &x, &y).unwrap();
    let h = 1e-5;
    for i in 0..4 {
        let shifted = |s: f64| {
            let mut p = x.positions().to_owned();
            p[[i, 0]] += s;
            ParticleBatch::new(p, Role::Model, 0).unwrap()
        };
        let g = (sinkhorn_divergence(&cfg, &shifted(h), &y).unwrap() - sinkhorn_divergence(&cfg, &shifted(-h), &y).unwrap())
            / (2.0 * h);
        let want = -4.0 * g;
        assert!((v[[i, 0]] - want).abs() < 1e-4 * (1.0 + want.abs()), "{} vs {want}", v[[i, 0]]);
    }
}

#[test]
fn mmd_single_pair() {
    let x = batch(&[&[0.0]], Role::Model);
    let y = batch(&[&[1.0]], Role::Data);
    let v = mmd_drift(&KernelSpec::gibbs(2.0), &x, &y).unwrap();
    assert!((v[[0, 0]] - (-0.5f64).exp()).abs() < 1e-15);
}

/// Per-direction sorted assignment, written without the library's quantile code.
fn sw_oracle(x: &Array2<f64>, y: &Array2<f64>, dirs: &Array2<f64>) -> Array2<f64> {
    let n = x.nrows();
    let mut out = Array2::zeros(x.raw_dim());
    for theta in dirs.rows() {
        let px: Vec<f64> = x.rows().into_iter().map(|r| r.dot(&theta)).collect();
        let py: Vec<f64> = y.rows().into_iter().map(|r| r.dot(&theta)).collect();
        let mut ix: Vec<usize> = (0..n).collect();
        let mut iy: Vec<usize> = (0..n).collect();
        ix.sort_by(|&a, &b| px[a].partial_cmp(&px[b]).unwrap().then(a.cmp(&b)));
        iy.sort_by(|&a, &b| py[a].partial_cmp(&py[b]).unwrap().then(a.cmp(&b)));
        for (&i, &j) in ix.iter().zip(&iy) {
            for c in 0..x.ncols() {
                out[[i, c]] += (py[j] - px[i]) * theta[c];
            }
        }
    }
    out / dirs.nrows() as f64
}

#[test]
fn sw_matches_permutation_oracle() {
    let mut r = RngHandle::new(5, 0).rng();
    let x = Array2::from_shape_fn((9, 2), |_| r.random_range(-2.0..2.0));
    let y = Array2::from_shape_fn((9, 2), |_| r.random_range(-1.0..3.0));
    let dirs = sample_directions(7, 2, RngHandle::new(5, 1));
    let got = sw_drift_with_directions(
        &ParticleBatch::new(x.clone(), Role::Model, 0).unwrap(),
        &ParticleBatch::new(y.clone(), Role::Data, 0).unwrap(),
        dirs.view(),
    )
    .unwrap();
    let want = sw_oracle(&x, &y, &dirs);
    for (g, w) in got.iter().zip(want.iter()) {
        assert!((g - w).abs() < 1e-12);
    }
}

#[test]
fn sw_hand_sorted_1d() {
    let x = batch(&[&[2.0], &[0.0]], Role::Model);
    let y = batch(&[&[3.0], &[1.0]], Role::Data);
    let v = sw_drift_with_directions(&x, &y, array![[1.0]].view()).unwrap();
    assert_eq!(v, array![[1.0], [1.0]]);
}

#[test]
fn kl_single_particles() {
    let x = batch(&[&[0.0]], Role::Model);
    let y = batch(&[&[1.0]], Role::Data);
    assert_eq!(kl_drift(&KernelSpec::parzen(1.0), &x, &y, false).unwrap()[[0, 0]], 1.0);
}
