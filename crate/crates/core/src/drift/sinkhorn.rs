//! Entropic optimal transport drifts.
//!
//! * [`sinkhorn_solve`]: log-domain Sinkhorn–Knopp with uniform marginals.
//! * [`sinkhorn_exact_drift`]: velocity of the debiased Sinkhorn divergence,
//!   `Σ_j W⁺_ij y_j − Σ_k W⁻_ik x_k` with converged conditional plans.
//! * [`sinkhorn_proxy_drift`]: the one-shot proxy: geometric mean of the row
//!   and column softmaxes of the affinities, followed by cross-weighting.
//!   Rows are streamed, so memory is linear in the batch sizes.
//! * [`population_proxy_drift`]: the same proxy between weighted atomic measures.
//! * [`iterate_symmetric_normalization`]: repeated geometric-mean scaling of a
//!   square positive matrix.
//!
//! Cost conventions differ between the solver and the proxy. The solver uses
//! `C = ½‖x − y‖²` by default while the proxy always uses `z = −‖x − y‖²/τ`, so
//! a given `τ` means half the effective temperature in the proxy. The factor
//! only rescales the step size.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::batch::{check_same_dim, ParticleBatch};
use crate::error::{Error, Result};
use crate::kernels::WeightedAtoms;
use crate::numeric::{lse, sq_dist, sq_dist_slice, sq_dists};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostConvention {
    /// `C(x, y) = ½‖x − y‖²`
    HalfSq,
    /// `C(x, y) = ‖x − y‖²`
    Sq,
}

impl CostConvention {
    fn scale(&self) -> f64 {
        match self {
            CostConvention::HalfSq => 0.5,
            CostConvention::Sq => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinkhornConfig {
    pub tau: f64,
    pub max_iters: usize,
    pub marginal_tol: f64,
    pub cost: CostConvention,
    /// When set, [`sinkhorn_exact_drift`] refuses plans that did not converge.
    /// Flows and training clear it to run a fixed iteration budget.
    #[serde(default = "default_strict")]
    pub strict: bool,
}

fn default_strict() -> bool {
    true
}

impl SinkhornConfig {
    pub fn new(tau: f64) -> Self {
        Self {
            tau,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("sinkhorn tau must be > 0, got {}", self.tau)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be >= 1".into()));
        }
        if !(self.marginal_tol > 0.0) {
            return Err(Error::Config("marginal_tol must be > 0".into()));
        }
        Ok(())
    }
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            tau: 1.0,
            max_iters: 100,
            marginal_tol: 1e-9,
            cost: CostConvention::HalfSq,
            strict: true,
        }
    }
}

/// A coupling in log space with its marginal diagnostics.
///
/// Marginal errors are measured on the conditional scale: the row error is
/// `max_i |N_rows Σ_j π_ij − 1|` and the column error is the analogue over
/// columns, so a tolerance of `1e-9` bounds the row sums of the conditional
/// plan directly.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub log_plan: Array2<f64>,
    pub row_marginal_err: f64,
    pub col_marginal_err: f64,
    pub iterations_used: usize,
    pub converged: bool,
    /// Row-side dual potential (empty for plans not produced by the solver).
    pub row_potential: Vec<f64>,
    /// Column-side dual potential.
    pub col_potential: Vec<f64>,
}

impl TransportPlan {
    pub fn plan(&self) -> Array2<f64> {
        self.log_plan.mapv(f64::exp)
    }

    /// `W_ij = N_rows · π_ij`, the row-stochastic conditional plan at convergence.
    pub fn conditional(&self) -> Array2<f64> {
        let n = self.log_plan.nrows() as f64;
        self.log_plan.mapv(|v| n * v.exp())
    }

    /// Writes `i,j,log_weight` rows.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["i", "j", "log_weight"])?;
        for ((i, j), v) in self.log_plan.indexed_iter() {
            w.write_record([i.to_string(), j.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn marginal_errors(log_plan: ArrayView2<'_, f64>) -> (f64, f64) {
    let (n, m) = log_plan.dim();
    let row = log_plan
        .rows()
        .into_iter()
        .map(|r| (n as f64 * lse(r.iter().copied()).exp() - 1.0).abs())
        .fold(0.0, f64::max);
    let col = log_plan
        .axis_iter(Axis(1))
        .map(|c| (m as f64 * lse(c.iter().copied()).exp() - 1.0).abs())
        .fold(0.0, f64::max);
    (row, col)
}

/// Entropic OT between the uniform empirical measures on `x_batch` (rows) and
/// `y_batch` (columns).
///
/// Potentials start at zero. Each iteration updates the row potential and then
/// the column potential; one more row update follows the loop so the returned
/// plan has exact row marginals.
pub fn sinkhorn_solve(
    cfg: &SinkhornConfig,
    x_batch: &ParticleBatch,
    y_batch: &ParticleBatch,
) -> Result<TransportPlan> {
    cfg.validate()?;
    check_same_dim(x_batch, y_batch)?;
    let cost = sq_dists(x_batch.positions(), y_batch.positions()).mapv(|v| cfg.cost.scale() * v);
    solve_cost(cfg, cost.view())
}

fn solve_cost(cfg: &SinkhornConfig, cost: ArrayView2<'_, f64>) -> Result<TransportPlan> {
    if let Some(bad) = cost.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("cost matrix entry {bad}")));
    }
    let (n, m) = cost.dim();
    let tau = cfg.tau;
    let log_a = -(n as f64).ln();
    let log_b = -(m as f64).ln();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];

    let c_rows = cost.as_standard_layout().into_owned().into_raw_vec_and_offset().0;
    let c_cols = cost.t().as_standard_layout().into_owned().into_raw_vec_and_offset().0;
    let update_rows = |f: &mut [f64], g: &[f64]| {
        for (fi, c) in f.iter_mut().zip(c_rows.chunks_exact(m)) {
            *fi = -tau * lse(g.iter().zip(c).map(|(gj, cj)| log_b + (gj - cj) / tau));
        }
    };
    let update_cols = |g: &mut [f64], f: &[f64]| {
        for (gj, c) in g.iter_mut().zip(c_cols.chunks_exact(n)) {
            *gj = -tau * lse(f.iter().zip(c).map(|(fi, ci)| log_a + (fi - ci) / tau));
        }
    };
    let row_err = |f: &[f64], g: &[f64]| {
        f.iter()
            .zip(c_rows.chunks_exact(m))
            .map(|(fi, c)| {
                let s = lse(g.iter().zip(c).map(|(gj, cj)| log_b + (fi + gj - cj) / tau));
                (s.exp() - 1.0).abs()
            })
            .fold(0.0, f64::max)
    };

    let mut iterations = 0;
    for _ in 0..cfg.max_iters {
        update_rows(&mut f, &g);
        update_cols(&mut g, &f);
        iterations += 1;
        if row_err(&f, &g) <= cfg.marginal_tol {
            break;
        }
    }
    update_rows(&mut f, &g);

    let mut log_plan = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            log_plan[[i, j]] = log_a + log_b + (f[i] + g[j] - cost[[i, j]]) / tau;
        }
    }
    let (row_marginal_err, col_marginal_err) = marginal_errors(log_plan.view());
    let converged = row_marginal_err <= cfg.marginal_tol && col_marginal_err <= cfg.marginal_tol;
    Ok(TransportPlan {
        log_plan,
        row_marginal_err,
        col_marginal_err,
        iterations_used: iterations,
        converged,
        row_potential: f,
        col_potential: g,
    })
}

/// Regularized OT cost `⟨a, f⟩ + ⟨b, g⟩` read off the dual potentials. The
/// returned plan has exact row marginals, so the dual penalty term vanishes.
pub fn entropic_ot_value(plan: &TransportPlan) -> f64 {
    let n = plan.row_potential.len() as f64;
    let m = plan.col_potential.len() as f64;
    plan.row_potential.iter().sum::<f64>() / n + plan.col_potential.iter().sum::<f64>() / m
}

/// `S_τ(q, p) = OT_τ(q, p) − ½ OT_τ(q, q) − ½ OT_τ(p, p)`.
pub fn sinkhorn_divergence(
    cfg: &SinkhornConfig,
    x_batch: &ParticleBatch,
    y_batch: &ParticleBatch,
) -> Result<f64> {
    let qp = sinkhorn_solve(cfg, x_batch, y_batch)?;
    let qq = sinkhorn_solve(cfg, x_batch, x_batch)?;
    let pp = sinkhorn_solve(cfg, y_batch, y_batch)?;
    for plan in [&qp, &qq, &pp] {
        if cfg.strict && !plan.converged {
            return Err(not_converged(plan));
        }
    }
    Ok(entropic_ot_value(&qp) - 0.5 * entropic_ot_value(&qq) - 0.5 * entropic_ot_value(&pp))
}

fn not_converged(plan: &TransportPlan) -> Error {
    Error::NotConverged {
        iterations: plan.iterations_used,
        row_err: plan.row_marginal_err,
        col_err: plan.col_marginal_err,
    }
}

fn grad_scale(cost: CostConvention) -> f64 {
    match cost {
        CostConvention::HalfSq => 1.0,
        CostConvention::Sq => 2.0,
    }
}

/// Particle velocity of the debiased Sinkhorn divergence,
/// `Σ_j W⁺_ij (y_j − x_i) − Σ_k W⁻_ik (x_k − x_i)`, which equals
/// `Σ_j W⁺_ij y_j − Σ_k W⁻_ik x_k` for row-stochastic plans. Under the
/// `Sq` cost the result is doubled so it stays the negative gradient of the
/// first variation.
pub fn sinkhorn_exact_drift(
    cfg: &SinkhornConfig,
    x_batch: &ParticleBatch,
    y_batch: &ParticleBatch,
) -> Result<Array2<f64>> {
    let plus = sinkhorn_solve(cfg, x_batch, y_batch)?;
    let minus = sinkhorn_solve(cfg, x_batch, x_batch)?;
    if cfg.strict {
        for plan in [&plus, &minus] {
            if !plan.converged {
                return Err(not_converged(plan));
            }
        }
    }
    let x = x_batch.positions();
    let y = y_batch.positions();
    let scale = grad_scale(cfg.cost);
    let mut out = Array2::zeros(x.raw_dim());
    for (i, xi) in x.rows().into_iter().enumerate() {
        let a = crate::numeric::weighted_displacement(plus.log_plan.row(i), y, xi);
        let r = crate::numeric::weighted_displacement(minus.log_plan.row(i), x, xi);
        for k in 0..xi.len() {
            out[[i, k]] = scale * (a[k] - r[k]);
        }
    }
    Ok(out)
}

/// Converged potentials of `OT(q, p)` and `OT(q, q)`, reusable to evaluate the
/// exact Sinkhorn velocity at arbitrary points.
#[derive(Debug, Clone)]
pub struct SinkhornField {
    cfg: SinkhornConfig,
    x: Array2<f64>,
    y: Array2<f64>,
    plus_col_potential: Vec<f64>,
    minus_col_potential: Vec<f64>,
}

impl SinkhornField {
    pub fn new(cfg: &SinkhornConfig, x_batch: &ParticleBatch, y_batch: &ParticleBatch) -> Result<Self> {
        let plus = sinkhorn_solve(cfg, x_batch, y_batch)?;
        let minus = sinkhorn_solve(cfg, x_batch, x_batch)?;
        if cfg.strict {
            for plan in [&plus, &minus] {
                if !plan.converged {
                    return Err(not_converged(plan));
                }
            }
        }
        Ok(Self {
            cfg: cfg.clone(),
            x: x_batch.positions().to_owned(),
            y: y_batch.positions().to_owned(),
            plus_col_potential: plus.col_potential,
            minus_col_potential: minus.col_potential,
        })
    }

    /// `−∇(g_{q,p} − g_{q,q})(x)` using the smooth extension of the row
    /// potentials off the support.
    pub fn velocity(&self, x: ArrayView1<'_, f64>) -> Vec<f64> {
        let tau = self.cfg.tau;
        let c = self.cfg.cost.scale();
        let logits = |pts: ArrayView2<'_, f64>, pot: &[f64]| -> Vec<f64> {
            pts.rows()
                .into_iter()
                .zip(pot)
                .map(|(z, h)| (h - c * sq_dist(x, z)) / tau)
                .collect()
        };
        let lp = logits(self.y.view(), &self.plus_col_potential);
        let lm = logits(self.x.view(), &self.minus_col_potential);
        let a = crate::numeric::weighted_displacement(ArrayView1::from(&lp), self.y.view(), x);
        let r = crate::numeric::weighted_displacement(ArrayView1::from(&lm), self.x.view(), x);
        let s = grad_scale(self.cfg.cost);
        a.iter().zip(&r).map(|(a, r)| s * (a - r)).collect()
    }
}

/// Row normalization scope of the one-shot proxy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxyVariant {
    /// Positive and negative affinities normalized over their own columns.
    Ours,
    /// Positive and negative logits concatenated and row-normalized jointly.
    Da2,
}

#[derive(Clone, Copy)]
struct OnlineLse {
    max: f64,
    sum: f64,
}

impl OnlineLse {
    fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    fn push(&mut self, v: f64) {
        if v == f64::NEG_INFINITY {
            return;
        }
        if v <= self.max {
            self.sum += (v - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - v).exp() + 1.0;
            self.max = v;
        }
    }

    fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

/// Per-row quantities of the proxy, exposed for diagnostics and tests.
#[derive(Debug, Clone)]
pub struct ProxyRow {
    /// `log A⁺_ij` over data columns.
    pub log_a_plus: Vec<f64>,
    /// `log A⁻_ik` over model columns.
    pub log_a_minus: Vec<f64>,
    pub s_plus: f64,
    pub s_minus: f64,
}

struct ProxyNormalizers {
    row_plus: Vec<f64>,
    row_minus: Vec<f64>,
    col_plus: Vec<f64>,
    col_minus: Vec<f64>,
}

fn proxy_normalizers(x: &[f64], y: &[f64], d: usize, tau: f64, ignore_self: bool) -> ProxyNormalizers {
    let n = x.len() / d;
    let m = y.len() / d;
    let mut col_plus = vec![OnlineLse::new(); m];
    let mut col_minus = vec![OnlineLse::new(); n];
    let mut row_plus = Vec::with_capacity(n);
    let mut row_minus = Vec::with_capacity(n);
    for (i, xi) in x.chunks_exact(d).enumerate() {
        let mut rp = OnlineLse::new();
        for (j, yj) in y.chunks_exact(d).enumerate() {
            let z = -sq_dist_slice(xi, yj) / tau;
            rp.push(z);
            col_plus[j].push(z);
        }
        let mut rm = OnlineLse::new();
        for (k, xk) in x.chunks_exact(d).enumerate() {
            let z = if ignore_self && k == i {
                f64::NEG_INFINITY
            } else {
                -sq_dist_slice(xi, xk) / tau
            };
            rm.push(z);
            col_minus[k].push(z);
        }
        row_plus.push(rp.value());
        row_minus.push(rm.value());
    }
    ProxyNormalizers {
        row_plus,
        row_minus,
        col_plus: col_plus.iter().map(OnlineLse::value).collect(),
        col_minus: col_minus.iter().map(OnlineLse::value).collect(),
    }
}

/// Row-major copy of a batch's positions.
fn flat(b: &ParticleBatch) -> Vec<f64> {
    b.positions().as_standard_layout().into_owned().into_raw_vec_and_offset().0
}

fn proxy_row(
    x: &[f64],
    y: &[f64],
    d: usize,
    tau: f64,
    ignore_self: bool,
    variant: ProxyVariant,
    norms: &ProxyNormalizers,
    i: usize,
) -> ProxyRow {
    let xi = &x[i * d..(i + 1) * d];
    let (rp, rm) = match variant {
        ProxyVariant::Ours => (norms.row_plus[i], norms.row_minus[i]),
        ProxyVariant::Da2 => {
            let joint = lse([norms.row_plus[i], norms.row_minus[i]]);
            (joint, joint)
        }
    };
    let log_a_plus: Vec<f64> = y
        .chunks_exact(d)
        .enumerate()
        .map(|(j, yj)| -sq_dist_slice(xi, yj) / tau - 0.5 * rp - 0.5 * norms.col_plus[j])
        .collect();
    let log_a_minus: Vec<f64> = x
        .chunks_exact(d)
        .enumerate()
        .map(|(k, xk)| {
            if ignore_self && k == i {
                f64::NEG_INFINITY
            } else {
                -sq_dist_slice(xi, xk) / tau - 0.5 * rm - 0.5 * norms.col_minus[k]
            }
        })
        .collect();
    let s_plus = log_a_plus.iter().map(|v| v.exp()).sum();
    let s_minus = log_a_minus.iter().map(|v| v.exp()).sum();
    ProxyRow {
        log_a_plus,
        log_a_minus,
        s_plus,
        s_minus,
    }
}

fn check_proxy_inputs(tau: f64, x: &ParticleBatch, y: &ParticleBatch, ignore_self: bool) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Config(format!("proxy tau must be > 0, got {tau}")));
    }
    check_same_dim(x, y)?;
    if ignore_self && x.len() < 2 {
        return Err(Error::Config("ignore_self needs at least two model particles".into()));
    }
    Ok(())
}

/// Pseudo-plan rows for the listed model particles.
pub fn sinkhorn_proxy_rows(
    tau: f64,
    x_batch: &ParticleBatch,
    y_batch: &ParticleBatch,
    variant: ProxyVariant,
    ignore_self: bool,
    rows: &[usize],
) -> Result<Vec<ProxyRow>> {
    check_proxy_inputs(tau, x_batch, y_batch, ignore_self)?;
    let (x, y, d) = (flat(x_batch), flat(y_batch), x_batch.dim());
    let norms = proxy_normalizers(&x, &y, d, tau, ignore_self);
    rows.iter()
        .map(|&i| {
            if i >= x_batch.len() {
                return Err(Error::Argument(format!("row {i} out of range")));
            }
            Ok(proxy_row(&x, &y, d, tau, ignore_self, variant, &norms, i))
        })
        .collect()
}

/// One-shot Sinkhorn-proxy drift at the listed model particles.
pub fn sinkhorn_proxy_drift_rows(
    tau: f64,
    x_batch: &ParticleBatch,
    y_batch: &ParticleBatch,
    variant: ProxyVariant,
    ignore_self: bool,
    rows: &[usize],
) -> Result<Array2<f64>> {
    check_proxy_inputs(tau, x_batch, y_batch, ignore_self)?;
    let (x, y, d) = (flat(x_batch), flat(y_batch), x_batch.dim());
    let norms = proxy_normalizers(&x, &y, d, tau, ignore_self);
    let mut out = Array2::zeros((rows.len(), d));
    for (r, &i) in rows.iter().enumerate() {
        if i >= x_batch.len() {
            return Err(Error::Argument(format!("row {i} out of range")));
        }
        let pr = proxy_row(&x, &y, d, tau, ignore_self, variant, &norms, i);
        let xi = &x[i * d..(i + 1) * d];
        let mut attract = vec![0.0; d];
        for (la, yj) in pr.log_a_plus.iter().zip(y.chunks_exact(d)) {
            let a = la.exp();
            for k in 0..d {
                attract[k] += a * (yj[k] - xi[k]);
            }
        }
        let mut repel = vec![0.0; d];
        for (la, xk) in pr.log_a_minus.iter().zip(x.chunks_exact(d)) {
            let a = la.exp();
            for k in 0..d {
                repel[k] += a * (xk[k] - xi[k]);
            }
        }
        // cross-weighting: W⁺ = A⁺ s⁻, W⁻ = A⁻ s⁺
        for k in 0..d {
            out[[r, k]] = pr.s_minus * attract[k] - pr.s_plus * repel[k];
        }
    }
    Ok(out)
}

/// One-shot Sinkhorn-proxy drift at every model particle. Batch-size factors
/// are omitted; multiplying by `sqrt(N⁻/N⁺)` recovers the population-scaled
/// field (see [`proxy_population_scale`]).
pub fn sinkhorn_proxy_drift(
    tau: f64,
    x_batch: &ParticleBatch,
    y_batch: &ParticleBatch,
    variant: ProxyVariant,
    ignore_self: bool,
) -> Result<Array2<f64>> {
    let rows: Vec<usize> = (0..x_batch.len()).collect();
    sinkhorn_proxy_drift_rows(tau, x_batch, y_batch, variant, ignore_self, &rows)
}

/// Factor mapping the unscaled empirical proxy onto the batch-size-normalized
/// one whose large-sample limit is [`population_proxy_drift`].
pub fn proxy_population_scale(n_model: usize, n_data: usize) -> f64 {
    (n_model as f64 / n_data as f64).sqrt()
}

/// Population proxy drift and its pre-conditioner `Z(x) = s⁺(x) s⁻(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationProxy {
    pub drift: Vec<f64>,
    pub z: f64,
    pub s_plus: f64,
    pub s_minus: f64,
}

/// Sinkhorn-proxy velocity between weighted atomic measures `p` (data) and
/// `q` (model) under the Gibbs kernel `exp(−‖x − y‖²/τ)`.
pub fn population_proxy_drift(
    x: ArrayView1<'_, f64>,
    p_atoms: &WeightedAtoms,
    q_atoms: &WeightedAtoms,
    tau: f64,
) -> Result<PopulationProxy> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Config(format!("tau must be > 0, got {tau}")));
    }
    let d = x.len();
    if p_atoms.dim() != d || q_atoms.dim() != d {
        return Err(Error::Shape("atom dimension differs from query".into()));
    }
    if p_atoms.is_empty() || q_atoms.is_empty() {
        return Err(Error::Argument("empty atom set".into()));
    }
    let log_k = |a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>| -sq_dist(a, b) / tau;
    let log_conv = |at: ArrayView1<'_, f64>, atoms: &WeightedAtoms| {
        lse(atoms
            .positions()
            .rows()
            .into_iter()
            .zip(atoms.log_weights())
            .map(|(z, lw)| lw + log_k(at, z)))
    };
    let singular = |pt: ArrayView1<'_, f64>, what: &str| Error::Singularity {
        point: pt.to_vec(),
        context: format!("{what} underflows"),
    };

    let log_p_x = log_conv(x, p_atoms);
    let log_q_x = log_conv(x, q_atoms);
    if !log_p_x.is_finite() {
        return Err(singular(x, "data convolution at the query"));
    }
    if !log_q_x.is_finite() {
        return Err(singular(x, "model convolution at the query"));
    }

    let mut s_plus = 0.0;
    let mut attract = vec![0.0; d];
    for (yj, lw) in p_atoms.positions().rows().into_iter().zip(p_atoms.log_weights()) {
        let log_q_y = log_conv(yj, q_atoms);
        if !log_q_y.is_finite() {
            return Err(singular(yj, "model convolution at a data atom"));
        }
        let w = (lw + log_k(x, yj) - 0.5 * log_q_y - 0.5 * log_p_x).exp();
        s_plus += w;
        for k in 0..d {
            attract[k] += w * (yj[k] - x[k]);
        }
    }
    let mut s_minus = 0.0;
    let mut repel = vec![0.0; d];
    for (xk, lw) in q_atoms.positions().rows().into_iter().zip(q_atoms.log_weights()) {
        let log_q_xk = log_conv(xk, q_atoms);
        if !log_q_xk.is_finite() {
            return Err(singular(xk, "model convolution at a model atom"));
        }
        let w = (lw + log_k(x, xk) - 0.5 * log_q_xk - 0.5 * log_q_x).exp();
        s_minus += w;
        for k in 0..d {
            repel[k] += w * (xk[k] - x[k]);
        }
    }
    let drift = (0..d)
        .map(|k| s_minus * attract[k] - s_plus * repel[k])
        .collect();
    Ok(PopulationProxy {
        drift,
        z: s_plus * s_minus,
        s_plus,
        s_minus,
    })
}

/// Plan after repeated symmetric scaling plus per-iteration marginal errors.
#[derive(Debug, Clone)]
pub struct SymmetricNormalization {
    pub plan: TransportPlan,
    /// `(row_err, col_err)` after each iteration, measured against unit sums.
    pub history: Vec<(f64, f64)>,
}

/// Applies `P_ij ← P_ij / sqrt(r_i c_j)` `iters` times, starting from `K`.
pub fn iterate_symmetric_normalization(
    k: ArrayView2<'_, f64>,
    iters: usize,
) -> Result<SymmetricNormalization> {
    let (n, m) = k.dim();
    if n != m || n == 0 {
        return Err(Error::Shape(format!("expected a non-empty square matrix, got {n}x{m}")));
    }
    if k.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Argument("matrix entries must be finite and strictly positive".into()));
    }
    let mut log_p = k.mapv(f64::ln);
    let unit_errors = |lp: &Array2<f64>| {
        let row = lp
            .rows()
            .into_iter()
            .map(|r| (lse(r.iter().copied()).exp() - 1.0).abs())
            .fold(0.0, f64::max);
        let col = lp
            .axis_iter(Axis(1))
            .map(|c| (lse(c.iter().copied()).exp() - 1.0).abs())
            .fold(0.0, f64::max);
        (row, col)
    };
    let mut history = Vec::with_capacity(iters);
    for _ in 0..iters {
        let r = crate::numeric::row_lse(log_p.view());
        let c = crate::numeric::col_lse(log_p.view());
        for ((i, j), v) in log_p.indexed_iter_mut() {
            *v -= 0.5 * (r[i] + c[j]);
        }
        history.push(unit_errors(&log_p));
    }
    let (row_err, col_err) = history.last().copied().unwrap_or_else(|| unit_errors(&log_p));
    Ok(SymmetricNormalization {
        plan: TransportPlan {
            log_plan: log_p,
            row_marginal_err: row_err,
            col_marginal_err: col_err,
            iterations_used: iters,
            converged: false,
            row_potential: Vec::new(),
            col_potential: Vec::new(),
        },
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::batch::Role;
    use crate::rng::RngHandle;
    use ndarray::array;
    use rand::Rng;

    fn batch(rows: &[Vec<f64>], role: Role) -> ParticleBatch {
        ParticleBatch::from_rows(rows, role).unwrap()
    }

    fn random_batch(n: usize, d: usize, seed: u64, role: Role) -> ParticleBatch {
        let mut r = RngHandle::new(seed, 0).rng();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect();
        batch(&rows, role)
    }

    #[test]
    fn two_point_plan_is_diagonal_at_small_tau() {
        let x = batch(&[vec![0.0], vec![1.0]], Role::Model);
        let y = batch(&[vec![0.0], vec![1.0]], Role::Data);
        let plan = sinkhorn_solve(&SinkhornConfig::new(1e-3), &x, &y).unwrap();
        assert!(plan.converged);
        let p = plan.plan();
        assert!(p[[0, 1]] < 1e-6 && p[[1, 0]] < 1e-6);
        assert!((p[[0, 0]] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn converged_plan_rows_are_stochastic() {
        let x = random_batch(7, 2, 1, Role::Model);
        let y = random_batch(5, 2, 2, Role::Data);
        let cfg = SinkhornConfig {
            max_iters: 5000,
            ..SinkhornConfig::new(0.3)
        };
        let plan = sinkhorn_solve(&cfg, &x, &y).unwrap();
        assert!(plan.converged);
        for row in plan.conditional().rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn self_transport_potentials_agree_up_to_constant() {
        let x = random_batch(6, 2, 3, Role::Model);
        let cfg = SinkhornConfig {
            max_iters: 10_000,
            marginal_tol: 1e-12,
            ..SinkhornConfig::new(0.5)
        };
        let plan = sinkhorn_solve(&cfg, &x, &x).unwrap();
        let p = plan.plan();
        for i in 0..6 {
            for j in 0..6 {
                assert!((p[[i, j]] - p[[j, i]]).abs() < 1e-10);
            }
        }
        let shift = plan.row_potential[0] - plan.col_potential[0];
        for (f, g) in plan.row_potential.iter().zip(&plan.col_potential) {
            assert!((f - g - shift).abs() < 1e-9);
        }
    }

    #[test]
    fn exact_drift_special_cases() {
        let x = random_batch(9, 2, 4, Role::Model);
        let cfg = SinkhornConfig {
            max_iters: 5000,
            ..SinkhornConfig::new(0.4)
        };
        let v = sinkhorn_exact_drift(&cfg, &x, &x.with_role(Role::Data)).unwrap();
        assert!(v.iter().all(|&e| e == 0.0));

        let a = batch(&[vec![0.2, -0.1]], Role::Model);
        let b = batch(&[vec![1.0, 2.0]], Role::Data);
        let v = sinkhorn_exact_drift(&cfg, &a, &b).unwrap();
        assert!((v[[0, 0]] - 0.8).abs() < 1e-15 && (v[[0, 1]] - 2.1).abs() < 1e-15);
    }

    #[test]
    fn strict_mode_reports_non_convergence() {
        let x = random_batch(20, 2, 5, Role::Model);
        let y = random_batch(20, 2, 6, Role::Data);
        let cfg = SinkhornConfig {
            max_iters: 1,
            ..SinkhornConfig::new(0.01)
        };
        assert!(matches!(
            sinkhorn_exact_drift(&cfg, &x, &y),
            Err(Error::NotConverged { .. })
        ));
        let lenient = SinkhornConfig { strict: false, ..cfg };
        assert!(sinkhorn_exact_drift(&lenient, &x, &y).is_ok());
    }

    #[test]
    fn field_matches_drift_at_particles() {
        let x = random_batch(6, 2, 7, Role::Model);
        let y = random_batch(8, 2, 8, Role::Data);
        let cfg = SinkhornConfig {
            max_iters: 5000,
            ..SinkhornConfig::new(0.5)
        };
        let v = sinkhorn_exact_drift(&cfg, &x, &y).unwrap();
        let field = SinkhornField::new(&cfg, &x, &y).unwrap();
        for (i, xi) in x.positions().rows().into_iter().enumerate() {
            let f = field.velocity(xi);
            for k in 0..2 {
                assert!((f[k] - v[[i, k]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn proxy_zero_on_identical_batches() {
        let x = random_batch(12, 2, 9, Role::Model);
        for variant in [ProxyVariant::Ours, ProxyVariant::Da2] {
            let v = sinkhorn_proxy_drift(0.3, &x, &x.with_role(Role::Data), variant, false).unwrap();
            assert!(v.iter().all(|&e| e == 0.0), "{variant:?}");
        }
    }

    #[test]
    fn proxy_invariant_to_common_translation() {
        let x = random_batch(6, 2, 10, Role::Model);
        let y = random_batch(7, 2, 11, Role::Data);
        let shifted = |b: &ParticleBatch| {
            ParticleBatch::new(b.positions().mapv(|v| v + 2.5), b.role(), 0).unwrap()
        };
        for variant in [ProxyVariant::Ours, ProxyVariant::Da2] {
            let v = sinkhorn_proxy_drift(0.5, &x, &y, variant, false).unwrap();
            let w = sinkhorn_proxy_drift(0.5, &shifted(&x), &shifted(&y), variant, false).unwrap();
            for (a, b) in v.iter().zip(w.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn proxy_row_sums_and_cross_weights() {
        let x = random_batch(4, 2, 12, Role::Model);
        let y = random_batch(5, 2, 13, Role::Data);
        let rows = sinkhorn_proxy_rows(0.7, &x, &y, ProxyVariant::Ours, false, &[0, 1, 2, 3]).unwrap();
        for r in &rows {
            let sp: f64 = r.log_a_plus.iter().map(|v| v.exp()).sum();
            assert!((sp - r.s_plus).abs() < 1e-15);
            assert!(r.s_plus > 0.0 && r.s_minus > 0.0);
        }
    }

    #[test]
    fn population_toy_example() {
        let p = WeightedAtoms::new(&[vec![1.0, 0.0]], &[1.0]).unwrap();
        let q = WeightedAtoms::new(&[vec![-1.0, 0.0]], &[1.0]).unwrap();
        let out = population_proxy_drift(array![0.0, 1.0].view(), &p, &q, 1.0).unwrap();
        assert!((out.z - 1.0).abs() < 1e-12);
        assert!((out.drift[0] - 2.0).abs() < 1e-12);
        assert!(out.drift[1].abs() < 1e-12);
    }

    #[test]
    fn population_equal_measures_give_zero() {
        let a = WeightedAtoms::new(&[vec![0.0], vec![0.7], vec![-1.2]], &[0.2, 0.5, 0.3]).unwrap();
        for x in [-2.0, -0.3, 0.0, 0.9] {
            let out = population_proxy_drift(array![x].view(), &a, &a, 0.6).unwrap();
            assert_eq!(out.drift, vec![0.0]);
        }
    }

    #[test]
    fn symmetric_normalization_keeps_doubly_stochastic_input() {
        let k = array![[0.5, 0.25, 0.25], [0.25, 0.5, 0.25], [0.25, 0.25, 0.5]];
        let out = iterate_symmetric_normalization(k.view(), 1).unwrap();
        let (r, c) = out.history[0];
        assert!(r < 1e-15 && c < 1e-15);
        for (a, b) in out.plan.plan().iter().zip(k.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(iterate_symmetric_normalization(array![[1.0, 2.0]].view(), 3).is_err());
    }

    #[test]
    fn plan_csv_has_header() {
        let x = random_batch(2, 1, 14, Role::Model);
        let plan = sinkhorn_solve(&SinkhornConfig::new(0.5), &x, &x).unwrap();
        let mut buf = Vec::new();
        plan.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("i,j,log_weight\n"));
        assert_eq!(text.lines().count(), 5);
    }
}
