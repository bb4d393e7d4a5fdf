//! Numerical checks of the drift identities, run by name.
//!
//! Each check returns one or more [`CheckRecord`]s carrying the measured
//! value, the expected value, the tolerance actually applied and the kind of
//! oracle it was compared against. Every check draws from its own substream of
//! the master seed, so a report is reproducible.

use ndarray::{array, Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::batch::{ParticleBatch, Role};
use crate::datasets::{sample_dataset, DatasetName, DatasetSpec};
use crate::drift::kl::{kl_drift_field, smoothed_kl_drift};
use crate::drift::mmd::{mmd2, mmd_drift, mmd_drift_field};
use crate::drift::sinkhorn::{
    iterate_symmetric_normalization, population_proxy_drift, sinkhorn_divergence, sinkhorn_exact_drift,
    sinkhorn_solve, SinkhornConfig, SinkhornField,
};
use crate::drift::{compute_drift, DriftConfig, DriftKind};
use crate::error::{Error, Result};
use crate::flow::{run_flow, two_delta_experiment, FlowConfig, TargetSource};
use crate::generator::mlp::{Activation, Architecture, GeneratorModel};
use crate::kernels::{log_parzen_density, parzen_score, KernelSpec, WeightedAtoms};
use crate::numeric::sq_dists;
use crate::rng::RngHandle;

pub const CHECKS: [&str; 11] = [
    "tweedie",
    "consistency_identical_batches",
    "curl_toy",
    "conservative_fields",
    "failure_mode",
    "sinkhorn_exact_gradient",
    "symmetric_normalization",
    "surrogate_gradient",
    "backprop",
    "smoothed_kl_distinction",
    "mmd_dissipation",
];

pub const MEDIAN_CONVENTION: &str =
    "lower median of pooled pairwise squared distances over pairs i<j; kernel exp(-r^2/m); V-statistic";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub check: String,
    pub quantity: String,
    pub status: Status,
    pub measured: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub provenance: String,
}

impl CheckRecord {
    fn new(check: &str, quantity: impl Into<String>, passed: bool, measured: f64, expected: f64, tolerance: f64, provenance: &str) -> Self {
        Self {
            check: check.into(),
            quantity: quantity.into(),
            status: if passed { Status::Pass } else { Status::Fail },
            measured,
            expected,
            tolerance,
            provenance: provenance.into(),
        }
    }

    /// `|measured − expected| ≤ tolerance`.
    fn near(check: &str, quantity: impl Into<String>, measured: f64, expected: f64, tolerance: f64, provenance: &str) -> Self {
        let ok = (measured - expected).abs() <= tolerance;
        Self::new(check, quantity, ok, measured, expected, tolerance, provenance)
    }

    /// `measured < tolerance` for an error-like quantity.
    fn below(check: &str, quantity: impl Into<String>, measured: f64, tolerance: f64, provenance: &str) -> Self {
        Self::new(check, quantity, measured < tolerance, measured, 0.0, tolerance, provenance)
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub seed: u64,
    pub median_convention: String,
    pub records: Vec<CheckRecord>,
}

impl VerificationReport {
    pub fn all_passed(&self) -> bool {
        self.records.iter().all(CheckRecord::passed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Expands `all` and rejects unknown names.
pub fn resolve_selector(selector: &[String]) -> Result<Vec<&'static str>> {
    if selector.is_empty() {
        return Err(Error::Config("no checks selected".into()));
    }
    let mut out: Vec<&'static str> = Vec::new();
    for name in selector {
        let name = name.trim();
        if name == "all" {
            for c in CHECKS {
                if !out.contains(&c) {
                    out.push(c);
                }
            }
            continue;
        }
        match CHECKS.iter().find(|c| **c == name) {
            Some(c) if !out.contains(c) => out.push(c),
            Some(_) => {}
            None => {
                return Err(Error::Config(format!(
                    "unknown check '{name}'; valid checks: all, {}",
                    CHECKS.join(", ")
                )))
            }
        }
    }
    Ok(out)
}

pub fn run_verification_suite(selector: &[String], seed: u64) -> Result<VerificationReport> {
    let names = resolve_selector(selector)?;
    let master = RngHandle::new(seed, 0);
    let mut records = Vec::new();
    for name in names {
        let idx = CHECKS.iter().position(|c| *c == name).expect("resolved") as u64;
        records.extend(run_check(name, master.substream(idx))?);
    }
    Ok(VerificationReport {
        seed,
        median_convention: MEDIAN_CONVENTION.into(),
        records,
    })
}

pub fn run_check(name: &str, rng: RngHandle) -> Result<Vec<CheckRecord>> {
    match name {
        "tweedie" => check_tweedie(rng),
        "consistency_identical_batches" => check_consistency(rng),
        "curl_toy" => check_curl_toy(),
        "conservative_fields" => check_conservative(rng),
        "failure_mode" => check_failure_mode(),
        "sinkhorn_exact_gradient" => check_sinkhorn_gradient(rng),
        "symmetric_normalization" => check_symmetric_normalization(rng),
        "surrogate_gradient" => check_surrogate_gradient(rng),
        "backprop" => check_backprop(rng),
        "smoothed_kl_distinction" => check_smoothed_kl(rng),
        "mmd_dissipation" => check_mmd_dissipation(rng),
        other => Err(Error::Config(format!(
            "unknown check '{other}'; valid checks: {}",
            CHECKS.join(", ")
        ))),
    }
}

fn uniform_batch(n: usize, d: usize, lo: f64, hi: f64, rng: RngHandle, role: Role) -> ParticleBatch {
    let mut r = rng.rng();
    let pos = Array2::from_shape_simple_fn((n, d), || r.random_range(lo..hi));
    ParticleBatch::new(pos, role, rng.seed).expect("finite")
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Central-difference Jacobian `J[i][k] = ∂f_i/∂x_k`.
pub fn fd_jacobian<F: Fn(&[f64]) -> Result<Vec<f64>>>(f: F, x: &[f64], h: f64) -> Result<Vec<Vec<f64>>> {
    let d = x.len();
    let mut cols = Vec::with_capacity(d);
    for k in 0..d {
        let mut p = x.to_vec();
        let mut m = x.to_vec();
        p[k] += h;
        m[k] -= h;
        let (fp, fm) = (f(&p)?, f(&m)?);
        cols.push(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<f64>>());
    }
    let n = cols[0].len();
    Ok((0..n).map(|i| (0..d).map(|k| cols[k][i]).collect()).collect())
}

/// `∂₁V₂ − ∂₂V₁` by central differences.
pub fn antisymmetric_part<F: Fn(&[f64]) -> Result<Vec<f64>>>(f: F, x: &[f64], h: f64) -> Result<f64> {
    let j = fd_jacobian(f, x, h)?;
    Ok(j[1][0] - j[0][1])
}

fn check_tweedie(rng: RngHandle) -> Result<Vec<CheckRecord>> {
    let spec = KernelSpec::parzen(0.5);
    let support = uniform_batch(20, 2, -2.0, 2.0, rng.substream(0), Role::Data);
    let queries = uniform_batch(100, 2, -2.5, 2.5, rng.substream(1), Role::Model);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for q in queries.positions().rows() {
        let score = parzen_score(&spec, q, &support)?;
        let fd = fd_jacobian(
            |p| Ok(vec![log_parzen_density(&spec, Array1::from(p.to_vec()).view(), &support)?]),
            q.as_slice().expect("contiguous"),
            h,
        )?;
        let diff: Vec<f64> = score.iter().zip(&fd[0]).map(|(s, f)| s - f).collect();
        worst = worst.max(norm(&diff) / (1.0 + norm(&score)));
    }
    Ok(vec![CheckRecord::below(
        "tweedie",
        "max relative error of score vs finite-difference log-density gradient (100 queries)",
        worst,
        1e-5,
        "finite-difference oracle",
    )])
}

fn check_consistency(rng: RngHandle) -> Result<Vec<CheckRecord>> {
    let x = uniform_batch(64, 2, -1.5, 1.5, rng.substream(0), Role::Model);
    let y = x.with_role(Role::Data);
    let mut out = Vec::new();
    for kind in DriftKind::ALL {
        let cfg = DriftConfig::new(kind, 0.5);
        let v = compute_drift(&cfg, &x, &y, rng.substream(1))?;
        let max = v.rows().into_iter().map(|r| r.dot(&r).sqrt()).fold(0.0, f64::max);
        out.push(CheckRecord::new(
            "consistency_identical_batches",
            format!("max drift norm, {kind}"),
            max == 0.0,
            max,
            0.0,
            0.0,
            "exact identity",
        ));
    }
    Ok(out)
}

fn toy_atoms() -> Result<(WeightedAtoms, WeightedAtoms)> {
    Ok((
        WeightedAtoms::new(&[vec![1.0, 0.0]], &[1.0])?,
        WeightedAtoms::new(&[vec![-1.0, 0.0]], &[1.0])?,
    ))
}

fn check_curl_toy() -> Result<Vec<CheckRecord>> {
    let (p, q) = toy_atoms()?;
    let tau = 1.0;
    let x0 = [0.0, 1.0];
    let h = 1e-5;
    let proxy = |x: &[f64]| Ok(population_proxy_drift(Array1::from(x.to_vec()).view(), &p, &q, tau)?.drift);
    let curl = antisymmetric_part(proxy, &x0, h)?;
    let z = population_proxy_drift(array![0.0, 1.0].view(), &p, &q, tau)?.z;

    let xb = ParticleBatch::from_rows(&[vec![-1.0, 0.0]], Role::Model)?;
    let yb = ParticleBatch::from_rows(&[vec![1.0, 0.0]], Role::Data)?;
    let single = |f: &dyn Fn(&[f64]) -> Result<Vec<f64>>| antisymmetric_part(f, &x0, h);
    let kl_spec = KernelSpec::parzen(tau);
    let kl = single(&|x: &[f64]| {
        let q = Array2::from_shape_vec((1, 2), x.to_vec()).expect("shape");
        Ok(kl_drift_field(&kl_spec, q.view(), &xb, &yb)?.row(0).to_vec())
    })?;
    let mmd_spec = KernelSpec::gibbs(tau);
    let mmd = single(&|x: &[f64]| {
        let q = Array2::from_shape_vec((1, 2), x.to_vec()).expect("shape");
        Ok(mmd_drift_field(&mmd_spec, q.view(), &xb, &yb)?.row(0).to_vec())
    })?;
    let field = SinkhornField::new(&SinkhornConfig::new(tau), &xb, &yb)?;
    let sk = single(&|x: &[f64]| Ok(field.velocity(Array1::from(x.to_vec()).view())))?;

    Ok(vec![
        CheckRecord::near("curl_toy", "preconditioner Z at (0,1)", z, 1.0, 1e-12, "closed form"),
        CheckRecord::near(
            "curl_toy",
            "antisymmetric Jacobian component of the population proxy at (0,1)",
            curl,
            4.0,
            0.01,
            "closed form",
        ),
        CheckRecord::below("curl_toy", "antisymmetric component, kl", kl.abs(), 1e-3, "closed form"),
        CheckRecord::below("curl_toy", "antisymmetric component, mmd", mmd.abs(), 1e-3, "closed form"),
        CheckRecord::below("curl_toy", "antisymmetric component, sinkhorn_exact", sk.abs(), 1e-3, "closed form"),
    ])
}

fn check_conservative(rng: RngHandle) -> Result<Vec<CheckRecord>> {
    let x = uniform_batch(8, 2, -1.0, 1.0, rng.substream(0), Role::Model);
    let y = uniform_batch(8, 2, -0.5, 1.5, rng.substream(1), Role::Data);
    let queries = uniform_batch(5, 2, -1.0, 1.0, rng.substream(2), Role::Model);
    let h = 1e-5;
    let kl_spec = KernelSpec::parzen(0.5);
    let mmd_spec = KernelSpec::gibbs_multi(vec![0.2, 0.8]);
    let cfg = SinkhornConfig {
        max_iters: 100_000,
        marginal_tol: 1e-12,
        ..SinkhornConfig::new(0.5)
    };
    let field = SinkhornField::new(&cfg, &x, &y)?;
    let as_query = |p: &[f64]| Array2::from_shape_vec((1, 2), p.to_vec()).expect("shape");
    let mut worst = [0.0f64; 3];
    for q in queries.positions().rows() {
        let q = q.to_vec();
        let a = antisymmetric_part(|p| Ok(kl_drift_field(&kl_spec, as_query(p).view(), &x, &y)?.row(0).to_vec()), &q, h)?;
        let b = antisymmetric_part(|p| Ok(mmd_drift_field(&mmd_spec, as_query(p).view(), &x, &y)?.row(0).to_vec()), &q, h)?;
        let c = antisymmetric_part(|p| Ok(field.velocity(Array1::from(p.to_vec()).view())), &q, h)?;
        worst[0] = worst[0].max(a.abs());
        worst[1] = worst[1].max(b.abs());
        worst[2] = worst[2].max(c.abs());
    }
    Ok(["kl", "mmd", "sinkhorn_exact"]
        .iter()
        .zip(worst)
        .map(|(k, w)| {
            CheckRecord::below(
                "conservative_fields",
                format!("max Jacobian asymmetry over 5 random points, {k}"),
                w,
                1e-4,
                "finite-difference oracle",
            )
        })
        .collect())
}

fn check_failure_mode() -> Result<Vec<CheckRecord>> {
    let (d, alpha, beta) = (1.0, 0.8, 0.4);
    let taus = [0.5, 0.4, 0.3];
    let rows = two_delta_experiment(d, alpha, beta, &taus)?;
    let kl_lead = alpha / (1.0 - alpha) - beta / (1.0 - beta);
    let sp_lead = ((1.0 - alpha) / beta).sqrt();
    let mut out = Vec::new();
    for r in &rows {
        let a = r.v_kl / (-2.0 * d * r.eps);
        out.push(CheckRecord::near(
            "failure_mode",
            format!("V_KL/(-2D eps) at tau={}", r.tau),
            a,
            kl_lead,
            0.01 * kl_lead,
            "leading-order closed form",
        ));
        out.push(CheckRecord::near(
            "failure_mode",
            format!("V_SP/V_KL at tau={}", r.tau),
            r.ratio,
            sp_lead,
            0.01 * sp_lead,
            "leading-order closed form",
        ));
        out.push(CheckRecord::near(
            "failure_mode",
            format!("V_W2 at tau={}", r.tau),
            r.v_w2,
            -4.0 / 3.0,
            1e-12,
            "closed form",
        ));
    }
    let log_eps: Vec<f64> = rows.iter().map(|r| r.log_eps).collect();
    for (name, vals) in [
        ("kl", rows.iter().map(|r| r.v_kl.abs().ln()).collect::<Vec<_>>()),
        ("sinkhorn_proxy", rows.iter().map(|r| r.v_sp.abs().ln()).collect::<Vec<_>>()),
    ] {
        out.push(CheckRecord::near(
            "failure_mode",
            format!("log-log slope of |V| vs eps, {name}"),
            ls_slope(&log_eps, &vals),
            1.0,
            0.02,
            "leading-order closed form",
        ));
    }
    Ok(out)
}

/// Least-squares slope of `y` on `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn check_sinkhorn_gradient(rng: RngHandle) -> Result<Vec<CheckRecord>> {
    let x = uniform_batch(6, 1, -1.0, 1.0, rng.substream(0), Role::Model);
    let y = uniform_batch(6, 1, -0.5, 1.5, rng.substream(1), Role::Data);
    let cfg = SinkhornConfig {
        max_iters: 100_000,
        marginal_tol: 1e-12,
        ..SinkhornConfig::new(0.5)
    };
    let v = sinkhorn_exact_drift(&cfg, &x, &y)?;
    let n = x.len() as f64;
    let h = 1e-5;
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let shifted = |s: f64| {
            let mut p = x.positions().to_owned();
            p[[i, 0]] += s;
            ParticleBatch::new(p, Role::Model, 0)
        };
        grad[i] = (sinkhorn_divergence(&cfg, &shifted(h)?, &y)? - sinkhorn_divergence(&cfg, &shifted(-h)?, &y)?)
            / (2.0 * h);
    }
    let diff: Vec<f64> = v.iter().zip(&grad).map(|(a, g)| a + n * g).collect();
    let rel = norm(&diff) / norm(v.as_slice().expect("contiguous"));

    let mut row_err: f64 = 0.0;
    for (a, b) in [(&x, &y), (&x, &x)] {
        let plan = sinkhorn_solve(&cfg, a, b)?;
        for r in plan.conditional().rows() {
            row_err = row_err.max((r.sum() - 1.0).abs());
        }
    }
    Ok(vec![
        CheckRecord::below(
            "sinkhorn_exact_gradient",
            "relative error of drift vs -N * finite-difference gradient of S_tau",
            rel,
            1e-4,
            "finite-difference oracle",
        ),
        CheckRecord::below(
            "sinkhorn_exact_gradient",
            "max |row sum - 1| of converged conditional plans",
            row_err,
            1e-9,
            "exact identity",
        ),
    ])
}

fn check_symmetric_normalization(rng: RngHandle) -> Result<Vec<CheckRecord>> {
    let x = uniform_batch(6, 2, 0.0, 1.0, rng.substream(0), Role::Model);
    let y = uniform_batch(6, 2, 0.0, 1.0, rng.substream(1), Role::Data);
    let cfg = SinkhornConfig {
        max_iters: 100_000,
        marginal_tol: 1e-13,
        ..SinkhornConfig::new(0.5)
    };
    let k = sq_dists(x.positions(), y.positions()).mapv(|c| (-0.5 * c / cfg.tau).exp());
    let sym = iterate_symmetric_normalization(k.view(), 200)?;
    let reference = sinkhorn_solve(&cfg, &x, &y)?.conditional();
    let err = sym
        .plan
        .plan()
        .iter()
        .zip(reference.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let (hub_sym, hub_row) = hub_masses()?;
    Ok(vec![
        CheckRecord::below(
            "symmetric_normalization",
            "max entrywise gap to N * sinkhorn plan after 200 iterations",
            err,
            1e-8,
            "sinkhorn solver oracle",
        ),
        CheckRecord::new(
            "symmetric_normalization",
            "hub column mass after one symmetric step (must be below the row-only step)",
            hub_sym < hub_row,
            hub_sym,
            hub_row,
            0.0,
            "direct evaluation",
        ),
    ])
}

/// Mass of a hub column after one symmetric step and after one row-only step.
pub fn hub_masses() -> Result<(f64, f64)> {
    let n = 6;
    let k = Array2::from_shape_fn((n, n), |(_, j)| if j == 0 { 10.0 } else { 1.0 });
    let sym = iterate_symmetric_normalization(k.view(), 1)?.plan.plan();
    let hub_sym: f64 = sym.column(0).sum();
    let row_sums = k.sum_axis(ndarray::Axis(1));
    let hub_row: f64 = (0..n).map(|i| k[[i, 0]] / row_sums[i]).sum();
    Ok((hub_sym, hub_row))
}

/// Small generator, fixed batches and the fixed-batch MMD energy.
pub struct SurrogateSetup {
    pub model: GeneratorModel,
    pub noise: Array2<f64>,
    pub data: ParticleBatch,
    pub kernel: KernelSpec,
    pub eta: f64,
}

impl SurrogateSetup {
    pub fn new(rng: RngHandle) -> Result<Self> {
        let arch = Architecture::ResidualMlp {
            input_dim: 2,
            width: 8,
            blocks: 1,
            output_dim: 2,
            activation: Activation::Tanh,
        };
        let mut r = rng.substream(1).rng();
        Ok(Self {
            model: GeneratorModel::init(arch, rng.substream(0))?,
            noise: Array2::from_shape_simple_fn((32, 2), || StandardNormal.sample(&mut r)),
            data: sample_dataset(&DatasetSpec::new(DatasetName::Moons), 32, rng.substream(2))?,
            kernel: KernelSpec::gibbs_multi(vec![0.05, 0.2, 0.8]),
            eta: 1.0,
        })
    }

    /// `½ MMD²(f_θ(noise), data)`.
    pub fn energy(&self, params: &[f64]) -> Result<f64> {
        let m = GeneratorModel::from_params(self.model.arch.clone(), params.to_vec())?;
        Ok(0.5 * mmd2(&self.kernel, &m.sample(self.noise.view())?, &self.data)?)
    }

    /// Gradient of the drifted-target loss with targets held fixed.
    pub fn loss_gradient(&self) -> Result<Vec<f64>> {
        let x = self.model.sample(self.noise.view())?;
        let v = mmd_drift(&self.kernel, &x, &self.data)?;
        let targets = x.positions().to_owned() + &(v * self.eta);
        Ok(self.model.backward_mse(self.noise.view(), targets.view())?.1)
    }
}

fn check_surrogate_gradient(rng: RngHandle) -> Result<Vec<CheckRecord>> {
    let setup = SurrogateSetup::new(rng)?;
    let g = setup.loss_gradient()?;
    let mut r = rng.substream(3).rng();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let u: Vec<f64> = (0..g.len()).map(|_| StandardNormal.sample(&mut r)).collect();
        let un = norm(&u);
        let u: Vec<f64> = u.iter().map(|a| a / un).collect();
        let step = |s: f64| -> Vec<f64> { setup.model.params.iter().zip(&u).map(|(p, d)| p + s * d).collect() };
        let fd = (setup.energy(&step(h))? - setup.energy(&step(-h))?) / (2.0 * h);
        let lhs: f64 = g.iter().zip(&u).map(|(a, b)| a * b).sum();
        let rhs = 2.0 * setup.eta * fd;
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()));
    }
    Ok(vec![CheckRecord::below(
        "surrogate_gradient",
        format!(
            "max relative gap between loss gradient and 2*eta*energy gradient ({} parameters, 10 directions)",
            setup.model.n_params()
        ),
        worst,
        1e-3,
        "finite-difference oracle",
    )])
}

fn check_backprop(rng: RngHandle) -> Result<Vec<CheckRecord>> {
    let arch = Architecture::ResidualMlp {
        input_dim: 2,
        width: 16,
        blocks: 2,
        output_dim: 2,
        activation: Activation::Tanh,
    };
    let model = GeneratorModel::init(arch, rng.substream(0))?;
    let mut r = rng.substream(1).rng();
    let noise = Array2::from_shape_simple_fn((8, 2), || StandardNormal.sample(&mut r));
    let targets = Array2::from_shape_simple_fn((8, 2), || StandardNormal.sample(&mut r));
    let (_, g) = model.backward_mse(noise.view(), targets.view())?;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let k = r.random_range(0..model.n_params());
        let loss_at = |s: f64| -> Result<f64> {
            let mut m = model.clone();
            m.params[k] += s;
            Ok(m.backward_mse(noise.view(), targets.view())?.0)
        };
        let fd = (loss_at(h)? - loss_at(-h)?) / (2.0 * h);
        worst = worst.max((g[k] - fd).abs() / g[k].abs().max(fd.abs()).max(1e-8));
    }
    Ok(vec![CheckRecord::below(
        "backprop",
        "max relative error of 20 probed parameter gradients",
        worst,
        1e-4,
        "finite-difference oracle",
    )])
}

fn check_smoothed_kl(rng: RngHandle) -> Result<Vec<CheckRecord>> {
    let spec = KernelSpec::parzen(1.0);
    let model = ParticleBatch::from_rows(&[vec![0.5]], Role::Model)?;
    let data = ParticleBatch::from_rows(&[vec![0.0]], Role::Data)?;
    let query = array![[0.0]];
    let kl = kl_drift_field(&spec, query.view(), &model, &data)?[[0, 0]];
    let sm = smoothed_kl_drift(&spec, &model, &data, query.view(), 4096, rng.substream(0))?;
    let (v, se) = (sm.velocity[[0, 0]], sm.std_err[[0, 0]]);
    let gap = (v - kl).abs();

    // a mixture instance where the integrand is not constant, compared in score units
    let spec2 = KernelSpec::parzen(0.8);
    let q2 = ParticleBatch::from_rows(&[vec![0.3], vec![1.5]], Role::Model)?;
    let p2 = ParticleBatch::from_rows(&[vec![-1.0], vec![0.7]], Role::Data)?;
    let query2 = array![[0.2]];
    let kl2 = kl_drift_field(&spec2, query2.view(), &q2, &p2)?[[0, 0]] * 2.0 / spec2.tau;
    let sm2 = smoothed_kl_drift(&spec2, &q2, &p2, query2.view(), 20_000, rng.substream(1))?;
    let (v2, se2) = (sm2.velocity[[0, 0]], sm2.std_err[[0, 0]]);
    let gap2 = (v2 - kl2).abs();

    Ok(vec![
        CheckRecord::new(
            "smoothed_kl_distinction",
            "|smoothed - kl| at query 0, p={0}, q={0.5}, tau=1 (must exceed tolerance = 5 standard errors)",
            gap > 5.0 * se,
            gap,
            kl,
            5.0 * se,
            "monte carlo standard error",
        ),
        CheckRecord::new(
            "smoothed_kl_distinction",
            "|smoothed - score difference| at 0.2, p={-1,0.7}, q={0.3,1.5}, tau=0.8 (must exceed 5 standard errors)",
            gap2 > 5.0 * se2,
            gap2,
            kl2,
            5.0 * se2,
            "monte carlo standard error",
        ),
    ])
}

fn check_mmd_dissipation(rng: RngHandle) -> Result<Vec<CheckRecord>> {
    let spec = DatasetSpec::new(DatasetName::EightGaussians);
    let target = sample_dataset(&spec, 64, rng.substream(0))?;
    let init = uniform_batch(64, 2, -0.5, 0.5, rng.substream(1), Role::Model);
    let cfg = FlowConfig {
        drift: DriftConfig::new(DriftKind::Mmd, 0.5),
        eta: 0.1,
        n_steps: 100,
        snapshot_every: 100,
        seed: rng.seed,
    };
    let out = run_flow(&cfg, &init, &TargetSource::Fixed(target))?;
    let worst = out
        .records
        .windows(2)
        .map(|w| (w[1].energy_mmd2 - w[0].energy_mmd2) / w[0].energy_mmd2.max(f64::MIN_POSITIVE))
        .fold(f64::NEG_INFINITY, f64::max);
    let first = out.records.first().expect("records").energy_mmd2;
    let last = out.records.last().expect("records").energy_mmd2;
    Ok(vec![
        CheckRecord::new(
            "mmd_dissipation",
            "max relative per-step energy increase over 100 Euler steps",
            worst <= 1e-8,
            worst,
            0.0,
            1e-8,
            "monotonicity of the flow energy",
        ),
        CheckRecord::new(
            "mmd_dissipation",
            "final / initial MMD^2 energy",
            last < first,
            last / first,
            1.0,
            0.0,
            "monotonicity of the flow energy",
        ),
    ])
}
