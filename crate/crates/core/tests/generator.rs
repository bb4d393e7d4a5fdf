use driftflow::generator::train::{sample_noise, write_train_metrics_csv};
use driftflow::generator::{adam_step, train, Activation, AdamState, Architecture, GeneratorModel, TrainConfig};
use driftflow::{compute_drift, DatasetName, DatasetSpec, DriftConfig, DriftKind, ParticleBatch, RngHandle, Role};
use ndarray::Array2;

fn small_arch(activation: Activation) -> Architecture {
    Architecture::ResidualMlp {
        input_dim: 3,
        width: 5,
        blocks: 2,
        output_dim: 2,
        activation,
    }
}

fn act(a: Activation, v: f64) -> f64 {
    match a {
        Activation::Relu => v.max(0.0),
        Activation::Tanh => v.tanh(),
    }
}

/// Per-neuron forward pass reading the flat parameter layout directly.
fn forward_oracle(model: &GeneratorModel, eps: &[f64]) -> Vec<f64> {
    let Architecture::ResidualMlp {
        input_dim,
        width,
        blocks,
        output_dim,
        activation,
    } = model.arch
    else {
        unreachable!()
    };
    let p = &model.params;
    let mut off = 0;
    let mut dense = |input: &[f64], rows: usize, cols: usize| {
        let mut out = vec![0.0; rows];
        for (r, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for c in 0..cols {
                s += p[off + r * cols + c] * input[c];
            }
            *o = s;
        }
        off += rows * cols;
        for o in out.iter_mut() {
            *o += p[off];
            off += 1;
        }
        out
    };
    let mut h = dense(eps, width, input_dim);
    for _ in 0..blocks {
        let z = dense(&h, width, width);
        let a: Vec<f64> = z.iter().map(|&v| act(activation, v)).collect();
        let u = dense(&a, width, width);
        for k in 0..width {
            h[k] += u[k];
        }
    }
    let a: Vec<f64> = h.iter().map(|&v| act(activation, v)).collect();
    dense(&a, output_dim, width)
}

#[test]
fn forward_matches_loop_oracle() {
    for activation in [Activation::Tanh, Activation::Relu] {
        let model = GeneratorModel::init(small_arch(activation), RngHandle::new(8, 0)).unwrap();
        let noise = sample_noise(6, 3, RngHandle::new(8, 1));
        let out = model.forward(noise.view()).unwrap();
        for (i, row) in noise.rows().into_iter().enumerate() {
            let want = forward_oracle(&model, row.as_slice().unwrap());
            for k in 0..2 {
                assert!((out[[i, k]] - want[k]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn mse_gradient_matches_finite_differences() {
    let model = GeneratorModel::init(small_arch(Activation::Tanh), RngHandle::new(2, 0)).unwrap();
    let noise = sample_noise(7, 3, RngHandle::new(2, 1));
    let targets = sample_noise(7, 2, RngHandle::new(2, 2));
    let (_, grads) = model.backward_mse(noise.view(), targets.view()).unwrap();
    let loss_at = |params: Vec<f64>| {
        let m = GeneratorModel::from_params(model.arch.clone(), params).unwrap();
        m.backward_mse(noise.view(), targets.view()).unwrap().0
    };
    let h = 1e-5;
    let n = model.n_params();
    for probe in 0..20 {
        let k = (probe * 37 + 3) % n;
        let mut up = model.params.clone();
        let mut down = model.params.clone();
        up[k] += h;
        down[k] -= h;
        let fd = (loss_at(up) - loss_at(down)) / (2.0 * h);
        let rel = (grads[k] - fd).abs() / grads[k].abs().max(fd.abs()).max(1e-8);
        assert!(rel < 1e-4, "param {k}: {} vs {fd}", grads[k]);
    }
}

#[test]
fn adam_matches_reference_trace() {
    let grads = [0.5, -0.3, 0.8, 0.1, -0.6, 0.2, 0.4, -0.1, 0.3, -0.2];
    let want = [
        0.9900000002,
        0.9880850198941775,
        0.9820496563682867,
        0.9765464063479192,
        0.9753840400841334,
        0.9735098358114679,
        0.9703304566552768,
        0.967934473859698,
        0.9647222043753821,
        0.9626371561748417,
    ];
    let mut p = [1.0];
    let mut s = AdamState::new(1);
    for (g, w) in grads.iter().zip(want) {
        adam_step(&mut p, &[*g], &mut s, 0.01).unwrap();
        assert!((p[0] - w).abs() < 1e-12, "{} vs {w}", p[0]);
    }
}

#[test]
fn gradient_depends_only_on_target_values() {
    let model = GeneratorModel::init(small_arch(Activation::Tanh), RngHandle::new(4, 0)).unwrap();
    let noise = sample_noise(16, 3, RngHandle::new(4, 1));
    let x = model.sample(noise.view()).unwrap();
    let y = ParticleBatch::new(sample_noise(16, 2, RngHandle::new(4, 2)), Role::Data, 0).unwrap();
    let v = compute_drift(&DriftConfig::new(DriftKind::Mmd, 0.5), &x, &y, RngHandle::new(4, 3)).unwrap();
    let targets = x.positions().to_owned() + &v;

    // the same numbers produced without any drift code
    let copied = Array2::from_shape_vec(targets.raw_dim(), targets.iter().copied().collect()).unwrap();
    let (la, ga) = model.backward_mse(noise.view(), targets.view()).unwrap();
    let (lb, gb) = model.backward_mse(noise.view(), copied.view()).unwrap();
    assert_eq!(la.to_bits(), lb.to_bits());
    assert_eq!(ga, gb);

    // and it equals the backward pass of the plain residual
    let out = model.forward(noise.view()).unwrap();
    let d_out = (&out - &targets).mapv(|r| 2.0 * r / 16.0);
    let gc = model.backward(noise.view(), d_out.view()).unwrap();
    for (a, c) in ga.iter().zip(&gc) {
        assert!((a - c).abs() <= 1e-14 * (1.0 + c.abs()));
    }
}

#[test]
fn zero_drift_leaves_parameters_unchanged() {
    // every sample sits on the single data atom, so every drift is exactly zero
    let arch = Architecture::Linear {
        input_dim: 1,
        output_dim: 1,
    };
    let model = GeneratorModel::from_params(arch.clone(), vec![0.0, -1.0]).unwrap();
    for kind in [DriftKind::Kl, DriftKind::Mmd, DriftKind::SinkhornProxy] {
        let mut cfg = TrainConfig::new(DriftConfig::new(kind, 0.5), DatasetSpec::two_delta(1.0, 1.0, 0.0));
        cfg.arch = arch.clone();
        cfg.n_data = 16;
        cfg.n_model = 16;
        cfg.holdout_n = 16;
        cfg.n_steps = 25;
        cfg.eval_every = 5;
        let out = train(&cfg, model.clone()).unwrap();
        assert_eq!(out.model.params, model.params, "{kind}");
        assert!(out.records.iter().all(|r| r.loss == 0.0 && r.mmd2_holdout == 0.0));
    }
}

#[test]
fn training_records_are_reproducible() {
    let mut cfg = TrainConfig::new(DriftConfig::new(DriftKind::SinkhornProxy, 0.2), DatasetSpec::new(DatasetName::Moons));
    cfg.arch = Architecture::ResidualMlp {
        input_dim: 2,
        width: 16,
        blocks: 1,
        output_dim: 2,
        activation: Activation::Tanh,
    };
    cfg.n_data = 64;
    cfg.n_model = 64;
    cfg.holdout_n = 64;
    cfg.n_steps = 40;
    cfg.eval_every = 10;
    cfg.lr = 1e-3;
    let run = || {
        let model = GeneratorModel::init(cfg.arch.clone(), RngHandle::new(cfg.seed, 4)).unwrap();
        let out = train(&cfg, model).unwrap();
        let mut buf = Vec::new();
        write_train_metrics_csv(&out.records, &mut buf).unwrap();
        buf
    };
    let a = run();
    assert_eq!(a, run());
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 6);
}
