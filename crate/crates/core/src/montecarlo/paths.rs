use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::rng::{self, WEALTH};
use crate::error::{Error, Result};
use crate::market::{check_index, CaraForwardUtility, PopulationSpec};

/// Uniform time grid `t_k = k T / n_steps`, `k = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimGrid {
    horizon: f64,
    n_steps: usize,
}

impl SimGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Domain("horizon must be positive".into()));
        }
        if n_steps == 0 {
            return Err(Error::Domain("n_steps must be at least 1".into()));
        }
        Ok(Self { horizon, n_steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }
    pub fn n_points(&self) -> usize {
        self.n_steps + 1
    }
    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }
    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }
    pub fn times(&self) -> Vec<f64> {
        (0..self.n_points()).map(|k| self.time(k)).collect()
    }
}

/// Dense `n_paths x n_points` matrix, one row per path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathMatrix {
    n_paths: usize,
    n_points: usize,
    data: Vec<f64>,
}

impl PathMatrix {
    pub fn from_vec(n_paths: usize, n_points: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n_paths * n_points, "path matrix shape");
        Self {
            n_paths,
            n_points,
            data,
        }
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }
    pub fn n_points(&self) -> usize {
        self.n_points
    }
    pub fn path(&self, p: usize) -> &[f64] {
        &self.data[p * self.n_points..(p + 1) * self.n_points]
    }
    pub fn get(&self, p: usize, k: usize) -> f64 {
        self.data[p * self.n_points + k]
    }
    pub fn column(&self, k: usize) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().skip(k).step_by(self.n_points).copied()
    }
    pub fn map<F: Fn(usize, f64) -> f64 + Sync>(&self, f: F) -> Self {
        let n_points = self.n_points;
        let data = self
            .data
            .par_iter()
            .enumerate()
            .map(|(idx, v)| f(idx % n_points, *v))
            .collect();
        Self { data, ..*self }
    }
}

/// Simulated wealth of every agent together with the driving noises.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    seed: u64,
    grid: SimGrid,
    strategies: Vec<f64>,
    n_agents: usize,
    n_paths: usize,
    wealth: Vec<f64>,
    idiosyncratic: Vec<f64>,
    common_noise: Vec<f64>,
}

impl PathBundle {
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn grid(&self) -> &SimGrid {
        &self.grid
    }
    pub fn strategies(&self) -> &[f64] {
        &self.strategies
    }
    pub fn n_agents(&self) -> usize {
        self.n_agents
    }
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    fn offset(&self, i: usize, p: usize) -> usize {
        (p * self.n_agents + i) * self.grid.n_points()
    }

    /// `X^i` along path `p`.
    pub fn wealth(&self, i: usize, p: usize) -> &[f64] {
        let o = self.offset(i, p);
        &self.wealth[o..o + self.grid.n_points()]
    }
    /// `W^i` along path `p`.
    pub fn idiosyncratic(&self, i: usize, p: usize) -> &[f64] {
        let o = self.offset(i, p);
        &self.idiosyncratic[o..o + self.grid.n_points()]
    }
    /// `B` along path `p`.
    pub fn common_noise(&self, p: usize) -> &[f64] {
        let n = self.grid.n_points();
        &self.common_noise[p * n..(p + 1) * n]
    }

    /// Wealth of agent `i` as a path matrix.
    pub fn wealth_matrix(&self, i: usize) -> PathMatrix {
        let n = self.grid.n_points();
        let mut data = Vec::with_capacity(self.n_paths * n);
        for p in 0..self.n_paths {
            data.extend_from_slice(self.wealth(i, p));
        }
        PathMatrix::from_vec(self.n_paths, n, data)
    }
}

/// Simulates `X^i_{k+1} = X^i_k + pi^i (mu_i dt + nu_i dW^i + sigma_i dB)`
/// for constant strategies.
pub fn simulate_wealth(
    pop: &PopulationSpec,
    strategies: &[f64],
    grid: SimGrid,
    n_paths: usize,
    seed: u64,
) -> Result<PathBundle> {
    let n = pop.len();
    if strategies.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: strategies.len(),
        });
    }
    if n_paths == 0 {
        return Err(Error::Domain("n_paths must be at least 1".into()));
    }
    let points = grid.n_points();
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let mut wealth = vec![0.0; n_paths * n * points];
    let mut idiosyncratic = vec![0.0; n_paths * n * points];
    let mut common_noise = vec![0.0; n_paths * points];

    wealth
        .par_chunks_mut(n * points)
        .zip(idiosyncratic.par_chunks_mut(n * points))
        .zip(common_noise.par_chunks_mut(points))
        .enumerate()
        .for_each(|(p, ((x, w), b))| {
            let mut rng = rng::stream(seed, WEALTH, p as u64);
            for (i, a) in pop.agents().iter().enumerate() {
                x[i * points] = a.x0();
            }
            for k in 0..grid.n_steps() {
                let db = sqrt_dt * rng.sample::<f64, _>(StandardNormal);
                b[k + 1] = b[k] + db;
                for (i, (a, pi)) in pop.agents().iter().zip(strategies).enumerate() {
                    let dw = sqrt_dt * rng.sample::<f64, _>(StandardNormal);
                    let at = i * points + k;
                    w[at + 1] = w[at] + dw;
                    x[at + 1] = x[at] + pi * (a.mu() * dt + a.nu() * dw + a.sigma() * db);
                }
            }
        });

    Ok(PathBundle {
        seed,
        grid,
        strategies: strategies.to_vec(),
        n_agents: n,
        n_paths,
        wealth,
        idiosyncratic,
        common_noise,
    })
}

/// Paths of `X^i - theta_i (1/(n-1)) sum_{k != i} X^k`.
pub fn relative_metric_paths(
    bundle: &PathBundle,
    pop: &PopulationSpec,
    i: usize,
) -> Result<PathMatrix> {
    let n = pop.len();
    if bundle.n_agents() != n {
        return Err(Error::DimensionMismatch {
            expected: bundle.n_agents(),
            found: n,
        });
    }
    check_index(i, n)?;
    let theta = pop.agent(i).theta();
    let points = bundle.grid().n_points();
    let mut data = vec![0.0; bundle.n_paths() * points];
    data.par_chunks_mut(points).enumerate().for_each(|(p, row)| {
        let own = bundle.wealth(i, p);
        for (k, slot) in row.iter_mut().enumerate() {
            let others: f64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| bundle.wealth(j, p)[k])
                .sum();
            *slot = own[k] - theta * others / (n as f64 - 1.0);
        }
    });
    Ok(PathMatrix::from_vec(bundle.n_paths(), points, data))
}

/// `U(Z_t, t)` pathwise; `times[k]` is the absolute time of column `k`.
pub fn utility_paths(rel: &PathMatrix, u: &CaraForwardUtility, times: &[f64]) -> PathMatrix {
    assert_eq!(times.len(), rel.n_points(), "one time per column");
    rel.map(|k, z| u.value(z, times[k]))
}

/// `log(-U(Z_t, t))` pathwise.
pub fn log_utility_paths(rel: &PathMatrix, u: &CaraForwardUtility, times: &[f64]) -> PathMatrix {
    assert_eq!(times.len(), rel.n_points(), "one time per column");
    rel.map(|k, z| u.log_abs(z, times[k]))
}

/// Per grid point, the sample mean and standard error of each agent's wealth.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub t: f64,
    pub means: Vec<f64>,
    pub std_errors: Vec<f64>,
}

pub fn wealth_summary(bundle: &PathBundle) -> Vec<SummaryRow> {
    let grid = bundle.grid();
    let np = bundle.n_paths() as f64;
    (0..grid.n_points())
        .into_par_iter()
        .map(|k| {
            let mut means = Vec::with_capacity(bundle.n_agents());
            let mut std_errors = Vec::with_capacity(bundle.n_agents());
            for i in 0..bundle.n_agents() {
                let values = (0..bundle.n_paths()).map(|p| bundle.wealth(i, p)[k]);
                let (mean, var) = super::stats::mean_var(values);
                means.push(mean);
                std_errors.push((var / np).sqrt());
            }
            SummaryRow {
                t: grid.time(k),
                means,
                std_errors,
            }
        })
        .collect()
}
