//! Solvers for CARA forward-utility portfolio games with relative performance
//! concerns.
//!
//! Each agent trades a stock driven by an idiosyncratic Brownian motion and a
//! common one, and values its wealth relative to the average of the others
//! through a time-monotone exponential forward utility
//! `U(x, t) = -exp(-x/delta + lambda t)`. The crate provides
//!
//! * [`market`]: agent types, populations, type distributions and the utility
//!   itself, plus the consistency-PDE residual for the n-player game;
//! * [`nplayer`]: the closed-form constant Nash equilibrium, best responses and
//!   an iterative best-response oracle;
//! * [`mfg`]: the mean-field counterpart over a finite-support type law;
//! * [`montecarlo`]: exact Gaussian simulation of wealth paths and statistical
//!   (super)martingale checks;
//! * [`convergence`]: n-player to mean-field convergence sweeps;
//! * [`rolling`]: forward utilities concatenated over re-specified horizons.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod convergence;
pub mod error;
pub mod market;
pub mod mfg;
pub mod montecarlo;
pub mod nplayer;
pub mod rolling;

pub use error::{Error, Result};
pub use market::{AgentType, CaraForwardUtility, PopulationSpec, TypeDistribution};
pub use mfg::{AggregatesMF, EquilibriumMF};
pub use nplayer::{AggregatesN, EquilibriumN};

/// Thresholds shared by the n-player and mean-field solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverTolerances {
    /// `|1 - psi_sigma|` at or below this value has no constant equilibrium.
    pub degeneracy: f64,
    /// `|1 - psi_sigma|` at or below this value is flagged as ill-conditioned.
    pub ill_conditioning: f64,
}

impl Default for SolverTolerances {
    fn default() -> Self {
        Self {
            degeneracy: 1e-10,
            ill_conditioning: 1e-3,
        }
    }
}
