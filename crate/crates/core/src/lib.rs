//! Constrained multinomial-logit pricing.
//!
//! Static prices come from Dinkelbach bisection over piecewise-linear MILP
//! approximations; dynamic prices from a per-resource decomposition of the
//! network dynamic program. Baseline methods and a Monte-Carlo simulator
//! support comparison studies.

#![allow(clippy::needless_range_loop)]

pub mod baselines;
pub mod dynamic;
pub mod error;
pub mod experiments;
pub mod fractional;
pub mod instance;
pub mod lpsolve;
pub mod milp_builder;
pub mod mnl;
pub mod pwla;
pub mod sim;
pub mod static_solver;

pub use dynamic::{solve_dpd, solve_exact_dp, DecompositionPolicy, ValueFunctionSet};
pub use error::{Error, Result};
pub use instance::{FeasiblePriceRegion, Feasibility, Instance, RegionMode};
pub use milp_builder::{BoptEncoding, PricingProblem, RelaxMode};
pub use mnl::{MnlModel, NULL_PRICE};
pub use pwla::{ErrorConstants, PwlaGrid};
pub use static_solver::{solve_sp_dmip, solve_sp_star, PricingSolution, SolveOptions};
