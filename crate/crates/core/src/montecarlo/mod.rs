//! Monte-Carlo verification of the equilibria.
//!
//! Strategies and coefficients are constant, so wealth increments over a
//! grid step are exactly Gaussian and are sampled without discretization
//! bias. Every path owns an independent random stream keyed by
//! `(seed, path)`, so results do not depend on the thread schedule or on how
//! many paths are requested.

mod cohort;
mod drift;
mod generic;
mod paths;
pub mod rng;
mod stats;

pub use cohort::{mf_cohort_simulate, CohortPathResult, CohortReport};
pub use drift::drift_residual_n;
pub use generic::{simulate_generic_agent, GenericAgentPaths};
pub use paths::{
    log_utility_paths, relative_metric_paths, simulate_wealth, utility_paths, wealth_summary,
    PathBundle, PathMatrix, SimGrid, SummaryRow,
};
pub use stats::{
    martingale_test, supermartingale_test, test_points, MartingaleReport, TestKind,
    DEFAULT_Z_CRIT, MAX_TEST_POINTS, MIN_TEST_PATHS,
};
