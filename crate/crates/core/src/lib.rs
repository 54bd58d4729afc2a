//! Markov perfect equilibrium of a two-trader optimal execution game with
//! transient price impact and an AR(1) market environment.
//!
//! Two risk-averse (CARA) large traders must each complete an order of
//! `initial_inventory` shares over `T` periods. Their trades move the quoted
//! price through a temporary/transient/permanent impact decomposition, and an
//! exogenous autoregressive signal feeds the price trend. The equilibrium
//! execution volume of each trader is affine in the remaining inventories, the
//! residual impact and the previous environment value; this crate computes
//! those affine coefficients by backward induction and provides the tools to
//! check them:
//!
//! * [`market`]: parameters, validation and the exact state transition.
//! * [`gaussian`]: closed-form expectations of exponential-quadratic
//!   functionals of a bivariate Gaussian.
//! * [`solver`]: backward recursion for policy and value coefficients.
//! * [`simulate`]: counter-based Monte Carlo of equilibrium paths and box-plot
//!   statistics.
//! * [`oracle`]: brute-force verification routes (Gauss–Hermite quadrature,
//!   numeric best responses, fixed-point equilibria, Monte Carlo).
//!
//! The crate is `no_std` and only needs `alloc`.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![warn(missing_debug_implementations)]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod error;
pub mod gaussian;
pub mod market;
pub mod oracle;
mod quadform;
pub mod rng;
pub mod simulate;
pub mod solver;

pub use error::{Error, Result};
pub use gaussian::{mgf_linear, quad_exp_expectation, BivariateGaussian, QuadExpResult};
pub use market::{
    decay_kernel, step_state, validate, EnvParams, Game, MarketParams, MarketState, Shocks,
    TraderSpec,
};
pub use oracle::{mc_check_quad_exp, McCheck, Oracle, QuadratureRule};
pub use rng::{draw_shocks, NormalStream};
pub use simulate::{
    simulate_path, simulate_paths, summarize, summarize_paths, BoxStats, ExecutionPolicy,
    MeanStd, PathRecord, SimulationConfig, SimulationOutput, SimulationSummary,
};
pub use solver::{
    backward_step, solve_equilibrium, solve_single_trader, terminal_coefficients, EquilibriumSolution,
    PolicyCoefficients, StageCoefficients, StepOutput, ValueCoefficients,
};
