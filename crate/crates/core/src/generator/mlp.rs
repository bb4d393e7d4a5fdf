//! Residual MLP with a flat parameter vector and a hand-written reverse pass.
//!
//! Residual layout: `h₀ = W_in ε + b_in`, then per block
//! `h ← h + W₂ act(W₁ h + b₁) + b₂`, and finally `x = W_out act(h) + b_out`.
//! The linear layout is a single affine map `x = W ε + b`.
//!
//! Parameters are stored row-major in one `Vec<f64>` in the order
//! `W_in, b_in, [W₁, b₁, W₂, b₂]*, W_out, b_out`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::batch::{ParticleBatch, Role};
use crate::error::{Error, Result};
use crate::rng::RngHandle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(&self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
        }
    }

    /// Derivative from pre-activation `z` and output `a`.
    fn grad(&self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    ResidualMlp {
        input_dim: usize,
        width: usize,
        blocks: usize,
        output_dim: usize,
        activation: Activation,
    },
    Linear {
        input_dim: usize,
        output_dim: usize,
    },
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture::ResidualMlp {
            input_dim: 2,
            width: 128,
            blocks: 2,
            output_dim: 2,
            activation: Activation::Tanh,
        }
    }
}

impl Architecture {
    pub fn input_dim(&self) -> usize {
        match self {
            Architecture::ResidualMlp { input_dim, .. } | Architecture::Linear { input_dim, .. } => *input_dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Architecture::ResidualMlp { output_dim, .. } | Architecture::Linear { output_dim, .. } => {
                *output_dim
            }
        }
    }

    /// `(rows, cols)` of each weight matrix, each followed by its bias of length `rows`.
    fn layers(&self) -> Vec<(usize, usize)> {
        match *self {
            Architecture::Linear { input_dim, output_dim } => vec![(output_dim, input_dim)],
            Architecture::ResidualMlp {
                input_dim,
                width,
                blocks,
                output_dim,
                ..
            } => {
                let mut v = vec![(width, input_dim)];
                for _ in 0..blocks {
                    v.push((width, width));
                    v.push((width, width));
                }
                v.push((output_dim, width));
                v
            }
        }
    }

    pub fn n_params(&self) -> usize {
        self.layers().iter().map(|(r, c)| r * c + r).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers().iter().any(|&(r, c)| r == 0 || c == 0) {
            return Err(Error::Config("all layer sizes must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorModel {
    pub arch: Architecture,
    pub params: Vec<f64>,
}

struct Layer<'a> {
    w: ArrayView2<'a, f64>,
    b: ArrayView1<'a, f64>,
}

/// Activations kept for the reverse pass.
pub(crate) struct Tape {
    /// Residual stream before each block and after the last one.
    h: Vec<Array2<f64>>,
    /// Pre-activations and activations inside each block.
    inner: Vec<(Array2<f64>, Array2<f64>)>,
    /// Pre-activation and activation before the output layer.
    last: Option<(Array2<f64>, Array2<f64>)>,
}

fn affine(input: ArrayView2<'_, f64>, l: &Layer<'_>) -> Array2<f64> {
    input.dot(&l.w.t()) + &l.b
}

impl GeneratorModel {
    /// Uniform `±1/sqrt(fan_in)` initialization drawn from `rng`.
    pub fn init(arch: Architecture, rng: RngHandle) -> Result<Self> {
        arch.validate()?;
        let mut r = rng.rng();
        let mut params = Vec::with_capacity(arch.n_params());
        for (rows, cols) in arch.layers() {
            let bound = 1.0 / (cols as f64).sqrt();
            for _ in 0..(rows * cols + rows) {
                params.push(r.random_range(-bound..bound));
            }
        }
        Ok(Self { arch, params })
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.n_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                arch.n_params(),
                params.len()
            )));
        }
        Ok(Self { arch, params })
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Sets the output layer's weights and bias to zero.
    pub fn zero_output_layer(&mut self) {
        let (rows, cols) = *self.arch.layers().last().expect("at least one layer");
        let n = self.params.len();
        for p in &mut self.params[n - rows * cols - rows..] {
            *p = 0.0;
        }
    }

    fn layer_views(&self) -> Vec<Layer<'_>> {
        let mut off = 0;
        let mut out = Vec::new();
        for (rows, cols) in self.arch.layers() {
            let w = ArrayView2::from_shape((rows, cols), &self.params[off..off + rows * cols]).expect("layout");
            off += rows * cols;
            let b = ArrayView1::from(&self.params[off..off + rows]);
            off += rows;
            out.push(Layer { w, b });
        }
        out
    }

    fn check_input(&self, noise: ArrayView2<'_, f64>) -> Result<()> {
        if noise.ncols() != self.arch.input_dim() {
            return Err(Error::Shape(format!(
                "noise has {} columns, model expects {}",
                noise.ncols(),
                self.arch.input_dim()
            )));
        }
        Ok(())
    }

    fn forward_tape(&self, noise: ArrayView2<'_, f64>) -> (Array2<f64>, Tape) {
        let layers = self.layer_views();
        match self.arch {
            Architecture::Linear { .. } => (
                affine(noise, &layers[0]),
                Tape {
                    h: Vec::new(),
                    inner: Vec::new(),
                    last: None,
                },
            ),
            Architecture::ResidualMlp { blocks, activation, .. } => {
                let mut h = affine(noise, &layers[0]);
                let mut tape = Tape {
                    h: Vec::with_capacity(blocks + 1),
                    inner: Vec::with_capacity(blocks),
                    last: None,
                };
                for b in 0..blocks {
                    let z = affine(h.view(), &layers[1 + 2 * b]);
                    let a = z.mapv(|v| activation.apply(v));
                    let next = &h + &affine(a.view(), &layers[2 + 2 * b]);
                    tape.h.push(h);
                    tape.inner.push((z, a));
                    h = next;
                }
                let a = h.mapv(|v| activation.apply(v));
                let out = affine(a.view(), &layers[layers.len() - 1]);
                tape.h.push(h.clone());
                tape.last = Some((h, a));
                (out, tape)
            }
        }
    }

    /// `f_θ(ε)` row by row.
    pub fn forward(&self, noise: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(noise)?;
        Ok(self.forward_tape(noise).0)
    }

    /// Forward pass wrapped as a model batch.
    pub fn sample(&self, noise: ArrayView2<'_, f64>) -> Result<ParticleBatch> {
        ParticleBatch::new(self.forward(noise)?, Role::Model, 0)
    }

    /// Parameter gradient of `Σ_i ⟨d_out_i, f_θ(ε_i)⟩`.
    pub fn backward(&self, noise: ArrayView2<'_, f64>, d_out: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        self.check_input(noise)?;
        if d_out.dim() != (noise.nrows(), self.arch.output_dim()) {
            return Err(Error::Shape("output gradient has the wrong shape".into()));
        }
        let (_, tape) = self.forward_tape(noise);
        Ok(self.backward_tape(noise, d_out, &tape))
    }

    fn backward_tape(&self, noise: ArrayView2<'_, f64>, d_out: ArrayView2<'_, f64>, tape: &Tape) -> Vec<f64> {
        let layers = self.layer_views();
        let mut grads: Vec<(Array2<f64>, Array1<f64>)> = Vec::with_capacity(layers.len());
        match self.arch {
            Architecture::Linear { .. } => {
                grads.push((d_out.t().dot(&noise), d_out.sum_axis(Axis(0))));
            }
            Architecture::ResidualMlp { blocks, activation, .. } => {
                let (z_last, a_last) = tape.last.as_ref().expect("residual tape");
                let out_layer = &layers[layers.len() - 1];
                let g_out = (d_out.t().dot(a_last), d_out.sum_axis(Axis(0)));
                let mut dh = d_out.dot(&out_layer.w);
                ndarray::Zip::from(&mut dh)
                    .and(z_last)
                    .and(a_last)
                    .for_each(|g, &z, &a| *g *= activation.grad(z, a));
                let mut block_grads = Vec::with_capacity(blocks);
                for b in (0..blocks).rev() {
                    let (z, a) = &tape.inner[b];
                    let h_in = &tape.h[b];
                    let g2 = (dh.t().dot(a), dh.sum_axis(Axis(0)));
                    let mut dz = dh.dot(&layers[2 + 2 * b].w);
                    ndarray::Zip::from(&mut dz)
                        .and(z)
                        .and(a)
                        .for_each(|g, &zv, &av| *g *= activation.grad(zv, av));
                    let g1 = (dz.t().dot(h_in), dz.sum_axis(Axis(0)));
                    dh = dh + dz.dot(&layers[1 + 2 * b].w);
                    block_grads.push((g1, g2));
                }
                grads.push((dh.t().dot(&noise), dh.sum_axis(Axis(0))));
                for (g1, g2) in block_grads.into_iter().rev() {
                    grads.push(g1);
                    grads.push(g2);
                }
                grads.push(g_out);
            }
        }
        let mut flat = Vec::with_capacity(self.params.len());
        for (w, b) in grads {
            flat.extend(w.iter());
            flat.extend(b.iter());
        }
        flat
    }

    /// Forward pass that keeps the activations for [`Self::mse_from_tape`].
    pub(crate) fn forward_cached(&self, noise: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Tape)> {
        self.check_input(noise)?;
        Ok(self.forward_tape(noise))
    }

    pub(crate) fn mse_from_tape(
        &self,
        noise: ArrayView2<'_, f64>,
        out: &Array2<f64>,
        tape: &Tape,
        targets: ArrayView2<'_, f64>,
    ) -> Result<(f64, Vec<f64>)> {
        if targets.dim() != (noise.nrows(), self.arch.output_dim()) {
            return Err(Error::Shape("targets have the wrong shape".into()));
        }
        let n = noise.nrows() as f64;
        let resid = out - &targets;
        let loss = resid.iter().map(|r| r * r).sum::<f64>() / n;
        let d_out = resid.mapv(|r| 2.0 * r / n);
        Ok((loss, self.backward_tape(noise, d_out.view(), tape)))
    }

    /// Loss `(1/N) Σ_i ‖f_θ(ε_i) − t_i‖²` and its parameter gradient. Targets
    /// are plain numbers; nothing flows through them.
    pub fn backward_mse(&self, noise: ArrayView2<'_, f64>, targets: ArrayView2<'_, f64>) -> Result<(f64, Vec<f64>)> {
        let (out, tape) = self.forward_cached(noise)?;
        self.mse_from_tape(noise, &out, &tape, targets)
    }
}
