//! Semi-sparsity smoothing.
//!
//! An edge-preserving smoothing filter that places an L0 penalty on the
//! highest-order gradient of the output and quadratic penalties on the lower
//! orders, so piecewise-polynomial regions are fitted without staircasing
//! while sharp edges and spikes survive. The problem is solved by
//! half-quadratic splitting with an FFT-diagonalized linear step.
//!
//! Modules:
//! - [`field`] and [`operator`]: sample grids and periodic difference operators.
//! - [`solver`]: the splitting loop ([`smooth`]).
//! - [`priors`]: higher-order gradient statistics of image corpora.
//! - [`pipelines`]: detail enhancement, multi-scale decomposition, HDR tone
//!   mapping and stylization.
//! - [`metrics`], [`imageio`], [`synth`]: evaluation, file formats, and
//!   synthetic data with brute-force oracles.

pub mod error;
pub mod field;
pub mod imageio;
pub mod metrics;
pub mod operator;
pub mod pipelines;
pub mod priors;
pub mod solver;
pub mod spectral;
pub mod synth;

pub use error::{Error, Result};
pub use field::{Field, Shape};
pub use operator::{
    apply_adjoint, apply_diff, crop, mirror_pad, transfer_magnitude, OperatorSpec, StackedField,
    StencilForm,
};
pub use solver::{
    energy, smooth, u_step, w_step, Grouping, IterationRecord, Solver, SolverConfig, SolverTrace,
    SpectralSystem,
};
