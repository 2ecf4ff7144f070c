//! Diffusion noise schedules parameterized by total variance (TV) and
//! signal-to-noise ratio (SNR).
//!
//! The crate covers the schedule catalog, conversions between perturbation
//! kernels and forward SDEs, reverse ODE/SDE solvers driven by an exact
//! mixture score, and trajectory diagnostics (curvature, marginal support,
//! density shadows, peak capture).

pub mod analysis;
pub mod error;
pub mod io;
pub mod quadrature;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod score;
pub mod sde;

pub use error::{Error, Result};
pub use sampler::{GridSpec, ReverseField, Solver, TimeGrid, Trajectory};
pub use schedule::{eval_point, to_kernel, Family, KernelCoeffs, SchedulePoint, ScheduleSpec};
pub use score::{MixtureData, ScoreSource};
pub use sde::SdeCoeffs;
