//! Optimal control of the mean-field Kuramoto–Sakaguchi equation on the circle.
//!
//! The crate integrates the nonlocal Fokker–Planck equation for the oscillator
//! density forward in time, its adjoint backward in time, assembles reduced
//! gradients for velocity, interaction-strength and additive-source controls,
//! and drives them with an Armijo line-search descent. [`runner`] wires the
//! pieces into the `simulate` / `optimize` / `check` batch commands.

pub mod config;
pub mod coupling;
pub mod density;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod io;
pub mod ocp;
pub mod oracles;
pub mod runner;

pub use coupling::{moments, order_parameter, w_of, w_star_of, CouplingParams, PolarOrder};
pub use dynamics::{
    adjoint_rhs, solve_adjoint, solve_state, state_rhs_advective, ControlKind, ControlMode,
    ControlShape, Controls, SolverOptions, TimeGrid, Trajectory,
};
pub use error::{Error, Result};
pub use grid::{CircleGrid, Field};
pub use ocp::{
    cost, gradient_check, optimize, reduced_gradient, CostBreakdown, CostWeights, OcpProblem,
    OptResult, OptStatus, OptimizerConfig,
};
