use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::paths::{PathMatrix, SimGrid};
use super::rng::{self, GENERIC_AGENT};
use crate::error::{Error, Result};
use crate::market::AgentType;
use crate::mfg::EquilibriumMF;

/// Generic-agent wealth `X` and population average `Xbar = E[X | B]` on a
/// segment starting at `start_time`.
#[derive(Debug, Clone, PartialEq)]
pub struct GenericAgentPaths {
    pub start_time: f64,
    pub grid: SimGrid,
    pub wealth: PathMatrix,
    pub population_average: PathMatrix,
}

impl GenericAgentPaths {
    /// Absolute times of the grid columns.
    pub fn times(&self) -> Vec<f64> {
        self.grid.times().iter().map(|t| self.start_time + t).collect()
    }

    /// `X - theta Xbar` pathwise.
    pub fn relative(&self, theta: f64) -> PathMatrix {
        let avg = &self.population_average;
        let n = self.wealth.n_points();
        let data = (0..self.wealth.n_paths())
            .flat_map(|p| {
                let (x, m) = (self.wealth.path(p), avg.path(p));
                (0..n).map(move |k| x[k] - theta * m[k])
            })
            .collect();
        PathMatrix::from_vec(self.wealth.n_paths(), n, data)
    }

    /// `(X, Xbar)` at the last grid point of every path.
    pub fn terminal_states(&self) -> Vec<(f64, f64)> {
        let last = self.grid.n_steps();
        (0..self.wealth.n_paths())
            .map(|p| (self.wealth.get(p, last), self.population_average.get(p, last)))
            .collect()
    }
}

/// Simulates the generic agent `zeta` holding `strategy` while the
/// population average follows `dXbar = E[mu pi] dt + E[sigma pi] dB` from
/// `eq`.
///
/// `start` holds `(X, Xbar)` either once (shared by all paths) or per path.
/// `stream_offset` separates the random streams of consecutive segments.
#[allow(clippy::too_many_arguments)]
pub fn simulate_generic_agent(
    zeta: &AgentType,
    strategy: f64,
    eq: &EquilibriumMF,
    start: &[(f64, f64)],
    start_time: f64,
    grid: SimGrid,
    n_paths: usize,
    seed: u64,
    stream_offset: u64,
) -> Result<GenericAgentPaths> {
    if start.len() != 1 && start.len() != n_paths {
        return Err(Error::DimensionMismatch {
            expected: n_paths,
            found: start.len(),
        });
    }
    if n_paths == 0 {
        return Err(Error::Domain("n_paths must be at least 1".into()));
    }
    let points = grid.n_points();
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let mut wealth = vec![0.0; n_paths * points];
    let mut average = vec![0.0; n_paths * points];
    wealth
        .par_chunks_mut(points)
        .zip(average.par_chunks_mut(points))
        .enumerate()
        .for_each(|(p, (x, m))| {
            let id = (stream_offset << 40) | p as u64;
            let mut rng = rng::stream(seed, GENERIC_AGENT, id);
            let (x0, m0) = start[if start.len() == 1 { 0 } else { p }];
            x[0] = x0;
            m[0] = m0;
            for k in 0..grid.n_steps() {
                let db = sqrt_dt * rng.sample::<f64, _>(StandardNormal);
                let dw = sqrt_dt * rng.sample::<f64, _>(StandardNormal);
                x[k + 1] = x[k] + strategy * (zeta.mu() * dt + zeta.nu() * dw + zeta.sigma() * db);
                m[k + 1] = m[k] + eq.mu_pi_bar * dt + eq.sigma_pi_bar * db;
            }
        });
    Ok(GenericAgentPaths {
        start_time,
        grid,
        wealth: PathMatrix::from_vec(n_paths, points, wealth),
        population_average: PathMatrix::from_vec(n_paths, points, average),
    })
}
