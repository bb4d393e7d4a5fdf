//! Drift fields, Euler particle flows and drifted-target generator training
//! for Wasserstein gradient flows on small synthetic problems.
//!
//! Every velocity field maps a model batch `x` and a data batch `y` to one
//! displacement per model particle; [`drift::compute_drift`] dispatches on
//! [`drift::DriftKind`]. [`flow::run_flow`] integrates a field with explicit
//! Euler steps and [`generator::train`] regresses a residual MLP onto drifted
//! targets `x + η V(x)`.

pub mod batch;
pub mod datasets;
pub mod drift;
pub mod error;
pub mod eval;
pub mod flow;
pub mod generator;
pub mod kernels;
pub mod numeric;
pub mod rng;
pub mod verify;

pub use batch::{ParticleBatch, Role};
pub use datasets::{sample_dataset, DatasetName, DatasetSpec};
pub use drift::{compute_drift, DriftConfig, DriftKind};
pub use error::{Error, Result};
pub use kernels::{KernelFamily, KernelSpec, WeightedAtoms};
pub use rng::RngHandle;

/// Stream ids used by the flow, training and evaluation drivers.
pub mod streams {
    pub const DATA: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const DRIFT: u64 = 3;
    pub const INIT: u64 = 4;
    pub const HOLDOUT: u64 = 5;
    pub const EVAL: u64 = 6;
}
