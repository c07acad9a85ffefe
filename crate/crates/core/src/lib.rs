//! Closed-form optimal dividend and risk control for a diffusion reserve
//! model, with three independent verification routes.
//!
//! A firm holds a reserve that earns `a mu` and bears volatility `a sigma`
//! per unit of retained risk `a in [alpha, beta]`, pays debt service at rate
//! `delta`, and distributes dividends at a rate `c in [0, M]` until ruin.
//! The objective is the expected discounted dividend stream. This crate
//! evaluates the exact value function and optimal feedback policy for every
//! admissible parameter set, and checks them three independent ways:
//!
//! * [`verify`]: analytic identities, smooth-fit and shape diagnostics, and
//!   the pointwise dynamic-programming residual of the candidate solution.
//! * [`grid`]: a monotone finite-difference solver for the same dynamic
//!   program, sharing no code with the closed form.
//! * [`simulate`]: Monte Carlo evaluation of the candidate policy and of
//!   deliberately suboptimal competitors.
//!
//! Construction runs in two stages. [`model`] classifies the parameters into
//! one of fifteen qualitative regimes and [`feedback`] builds the optimal
//! risk curve `a(x)`; [`value`] then assembles the piecewise value function
//! segment by segment, matching value and slope at each breakpoint.

pub mod feedback;
pub mod grid;
pub mod model;
pub mod simulate;
#[cfg(test)]
pub(crate) mod test_sets;
pub mod value;
pub mod verify;

pub use feedback::FeedbackCurve;
pub use model::{
    classify_regime, derived_constants, DebtCase, DerivedConstants, MSubcase, ModelParams,
    ParamError, Regime,
};
pub use value::{solve, PiecewiseValue, Solution};
