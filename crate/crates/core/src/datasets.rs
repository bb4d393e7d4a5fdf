//! Synthetic 2D toy datasets and the 1D two-atom mixture.
//!
//! Shape constants (all recorded in run manifests through [`DatasetSpec`]):
//!
//! | dataset           | construction                                                        | default noise |
//! |-------------------|---------------------------------------------------------------------|---------------|
//! | `moons`           | upper arc `(cos t, sin t)`, lower arc `(1 − cos t, 0.5 − sin t)`, `t ~ U[0, π]` | 0.05 |
//! | `circles`         | radius 1 and radius 0.5 rings, angle `~ U[0, 2π)`                   | 0.05          |
//! | `eight_gaussians` | centers at radius [`EIGHT_GAUSSIANS_RADIUS`], angles `kπ/4`          | 0.1 (std)     |
//! | `pinwheel`        | 5 arms, radial std 0.3, tangential std 0.1, spiral rate 0.25         | scale of extra isotropic noise, 0 |
//! | `swiss_roll`      | `t = 1.5π(1 + 2u)`, point `(t cos t, t sin t) / 5`                   | 0.05          |
//! | `two_delta_mixture` | atoms at `−D` (weight α) and `+D` (weight 1 − α), d = 1            | jitter 0      |
//!
//! Additive noise is isotropic Gaussian with standard deviation `noise_scale`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::batch::{ParticleBatch, Role};
use crate::error::{Error, Result};
use crate::rng::RngHandle;

pub const EIGHT_GAUSSIANS_RADIUS: f64 = 2.0;
pub const PINWHEEL_ARMS: usize = 5;
pub const PINWHEEL_RADIAL_STD: f64 = 0.3;
pub const PINWHEEL_TANGENTIAL_STD: f64 = 0.1;
pub const PINWHEEL_RATE: f64 = 0.25;
pub const CIRCLES_INNER_FACTOR: f64 = 0.5;
pub const SWISS_ROLL_SCALE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetName {
    Moons,
    Circles,
    EightGaussians,
    Pinwheel,
    SwissRoll,
    TwoDeltaMixture,
}

impl DatasetName {
    pub const ALL: [DatasetName; 6] = [
        DatasetName::Moons,
        DatasetName::Circles,
        DatasetName::EightGaussians,
        DatasetName::Pinwheel,
        DatasetName::SwissRoll,
        DatasetName::TwoDeltaMixture,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DatasetName::Moons => "moons",
            DatasetName::Circles => "circles",
            DatasetName::EightGaussians => "eight_gaussians",
            DatasetName::Pinwheel => "pinwheel",
            DatasetName::SwissRoll => "swiss_roll",
            DatasetName::TwoDeltaMixture => "two_delta_mixture",
        }
    }

    pub fn default_noise(&self) -> f64 {
        match self {
            DatasetName::Moons | DatasetName::Circles | DatasetName::SwissRoll => 0.05,
            DatasetName::EightGaussians => 0.1,
            DatasetName::Pinwheel | DatasetName::TwoDeltaMixture => 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DatasetName::TwoDeltaMixture => 1,
            _ => 2,
        }
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        DatasetName::ALL
            .iter()
            .copied()
            .find(|d| d.as_str() == norm)
            .ok_or_else(|| {
                let names: Vec<&str> = DatasetName::ALL.iter().map(|d| d.as_str()).collect();
                Error::Config(format!(
                    "unknown dataset '{s}'; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

/// Parameters of the two-atom mixture `α δ_{−D} + (1 − α) δ_{+D}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoDeltaParams {
    pub half_gap: f64,
    pub weight_left: f64,
}

impl Default for TwoDeltaParams {
    fn default() -> Self {
        Self {
            half_gap: 1.0,
            weight_left: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: DatasetName,
    /// Standard deviation of the additive Gaussian noise (atom jitter for
    /// `two_delta_mixture`).
    pub noise_scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub two_delta: Option<TwoDeltaParams>,
}

impl DatasetSpec {
    pub fn new(name: DatasetName) -> Self {
        Self {
            name,
            noise_scale: name.default_noise(),
            two_delta: (name == DatasetName::TwoDeltaMixture).then(TwoDeltaParams::default),
        }
    }

    pub fn two_delta(half_gap: f64, weight_left: f64, jitter: f64) -> Self {
        Self {
            name: DatasetName::TwoDeltaMixture,
            noise_scale: jitter,
            two_delta: Some(TwoDeltaParams {
                half_gap,
                weight_left,
            }),
        }
    }

    pub fn with_noise(mut self, noise_scale: f64) -> Self {
        self.noise_scale = noise_scale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::Config(format!(
                "noise_scale must be nonnegative, got {}",
                self.noise_scale
            )));
        }
        if let Some(p) = self.two_delta {
            if !(p.half_gap > 0.0) || !(0.0..=1.0).contains(&p.weight_left) {
                return Err(Error::Config(format!(
                    "two_delta_mixture needs D > 0 and weight in [0, 1], got {p:?}"
                )));
            }
        }
        Ok(())
    }
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Draws `n` i.i.d. points from the named family.
pub fn sample_dataset(spec: &DatasetSpec, n: usize, rng: RngHandle) -> Result<ParticleBatch> {
    if n == 0 {
        return Err(Error::Argument("sample_dataset needs n >= 1".into()));
    }
    spec.validate()?;
    let mut r = rng.rng();
    let d = spec.name.dim();
    let mut out = Array2::zeros((n, d));
    let sigma = spec.noise_scale;
    for mut row in out.rows_mut() {
        match spec.name {
            DatasetName::Moons => {
                let t = r.random::<f64>() * PI;
                let (x, y) = if r.random::<bool>() {
                    (t.cos(), t.sin())
                } else {
                    (1.0 - t.cos(), 0.5 - t.sin())
                };
                row[0] = x + sigma * normal(&mut r);
                row[1] = y + sigma * normal(&mut r);
            }
            DatasetName::Circles => {
                let t = r.random::<f64>() * 2.0 * PI;
                let radius = if r.random::<bool>() {
                    1.0
                } else {
                    CIRCLES_INNER_FACTOR
                };
                row[0] = radius * t.cos() + sigma * normal(&mut r);
                row[1] = radius * t.sin() + sigma * normal(&mut r);
            }
            DatasetName::EightGaussians => {
                let k = r.random_range(0..8usize);
                let (cx, cy) = eight_gaussians_center(k);
                row[0] = cx + sigma * normal(&mut r);
                row[1] = cy + sigma * normal(&mut r);
            }
            DatasetName::Pinwheel => {
                let arm = r.random_range(0..PINWHEEL_ARMS);
                let radial = normal(&mut r) * PINWHEEL_RADIAL_STD + 1.0;
                let tangential = normal(&mut r) * PINWHEEL_TANGENTIAL_STD;
                let angle =
                    arm as f64 * 2.0 * PI / PINWHEEL_ARMS as f64 + PINWHEEL_RATE * radial.exp();
                let (s, c) = angle.sin_cos();
                row[0] = c * radial - s * tangential + sigma * normal(&mut r);
                row[1] = s * radial + c * tangential + sigma * normal(&mut r);
            }
            DatasetName::SwissRoll => {
                let t = 1.5 * PI * (1.0 + 2.0 * r.random::<f64>());
                row[0] = SWISS_ROLL_SCALE * t * t.cos() + sigma * normal(&mut r);
                row[1] = SWISS_ROLL_SCALE * t * t.sin() + sigma * normal(&mut r);
            }
            DatasetName::TwoDeltaMixture => {
                let p = spec.two_delta.unwrap_or_default();
                let left = r.random::<f64>() < p.weight_left;
                let atom = if left { -p.half_gap } else { p.half_gap };
                row[0] = if sigma > 0.0 {
                    atom + sigma * normal(&mut r)
                } else {
                    atom
                };
            }
        }
    }
    ParticleBatch::new(out, Role::Data, rng.seed)
}

pub fn eight_gaussians_center(k: usize) -> (f64, f64) {
    let a = k as f64 * PI / 4.0;
    (EIGHT_GAUSSIANS_RADIUS * a.cos(), EIGHT_GAUSSIANS_RADIUS * a.sin())
}
