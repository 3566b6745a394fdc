//! Off-the-grid sparse spike estimation from (possibly compressive) Fourier
//! measurements.
//!
//! A spike train `x = Σ a_r δ_{t_r}` over `ℝ^d` is observed through weighted
//! Fourier samples `y = A x + e`. Recovery minimizes `‖A φ(θ) − y‖²` over the
//! flattened parameters `θ = (a, t)` with two ingredients:
//!
//! - an overparametrized spectral initialization that backprojects `y` onto
//!   a grid and keeps the `k_in` strongest grid points ([`initializer`]);
//! - projected gradient descent where every step is followed by a greedy
//!   merge of spikes closer than the separation `ε` ([`projector`],
//!   [`solver`]).
//!
//! [`harness`] wires these into reproducible experiments that write traces,
//! reports and figures.

pub mod error;
pub mod harness;
pub mod initializer;
pub mod model;
pub mod objective;
pub mod projector;
pub mod solver;

pub use error::{Error, Result, Stage};
pub use initializer::{
    build_grid, hard_threshold, initialize, spectral_image, DomainBox, Grid, InitConfig,
    SpectralImage,
};
pub use model::{
    forward, make_gaussian_scheme, make_regular_scheme, phi, phi_inverse, FourierScheme,
    MeasurementVector, ParamVector, Spike, SpikeTrain,
};
pub use objective::{
    fd_gradient, objective_and_gradient, objective_gradient, objective_value, GradientVector,
    ObjectiveContext,
};
pub use projector::{project_separation, MergeEvent, MergeReport};
pub use solver::{
    descent_step, solve, Scaling, SolverConfig, StepOutcome, StepRule, StopStatus, Trace,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic generator for `seed`, with independent streams per use.
pub(crate) fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
