use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::paths::SimGrid;
use super::rng::{self, COHORT_AGENT, COMMON_NOISE};
use crate::error::{Error, Result};
use crate::market::TypeDistribution;
use crate::mfg::EquilibriumMF;

#[derive(Debug, Clone, PartialEq)]
pub struct CohortPathResult {
    /// `max_t |cohort average - (xi_bar + E[mu pi] t + E[sigma pi] B_t)|`
    pub max_abs_deviation: f64,
    /// `max_t` of the deviation in units of `SD_t / sqrt(M)`.
    pub max_z: f64,
    pub within_band: bool,
}

/// Finite-cohort check of `Xbar_t = E[X*_t | B]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortReport {
    pub cohort_size: usize,
    pub band: f64,
    pub times: Vec<f64>,
    pub paths: Vec<CohortPathResult>,
}

impl CohortReport {
    pub fn paths_within_band(&self) -> usize {
        self.paths.iter().filter(|p| p.within_band).count()
    }
}

/// Standard deviation of `X*_t` given `B_t = b`: mixture over atoms of
/// `x0 + pi (mu t + sigma b)` plus the idiosyncratic `E[pi^2 nu^2] t`.
fn conditional_sd(dist: &TypeDistribution, eq: &EquilibriumMF, t: f64, b: f64) -> f64 {
    let (mut m1, mut m2, mut idio) = (0.0, 0.0, 0.0);
    for ((a, w), pi) in dist.atoms().iter().zip(&eq.strategies) {
        let g = a.x0() + pi * (a.mu() * t + a.sigma() * b);
        m1 += w * g;
        m2 += w * g * g;
        idio += w * (pi * a.nu()).powi(2) * t;
    }
    (m2 - m1 * m1 + idio).max(0.0).sqrt()
}

/// For each of `n_common_paths` common-noise paths, simulates a cohort of
/// `cohort_size` agents with i.i.d. types from `dist` and independent
/// idiosyncratic noise, all playing `pi*(zeta)` from `eq`, and compares the
/// cohort average with the predicted conditional mean. A path is within the
/// band when the deviation never exceeds `band * SD_t / sqrt(M)`.
pub fn mf_cohort_simulate(
    dist: &TypeDistribution,
    eq: &EquilibriumMF,
    cohort_size: usize,
    grid: SimGrid,
    n_common_paths: usize,
    band: f64,
    seed: u64,
) -> Result<CohortReport> {
    if eq.strategies.len() != dist.len() {
        return Err(Error::DimensionMismatch {
            expected: dist.len(),
            found: eq.strategies.len(),
        });
    }
    if cohort_size == 0 || n_common_paths == 0 {
        return Err(Error::Domain("cohort size and path count must be positive".into()));
    }
    let points = grid.n_points();
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let times = grid.times();

    let paths = (0..n_common_paths)
        .into_par_iter()
        .map(|b_idx| {
            let mut rng = rng::stream(seed, COMMON_NOISE, b_idx as u64);
            let mut b = vec![0.0; points];
            for k in 0..grid.n_steps() {
                b[k + 1] = b[k] + sqrt_dt * rng.sample::<f64, _>(StandardNormal);
            }

            let mut sums = vec![0.0; points];
            for m in 0..cohort_size {
                let id = ((b_idx as u64) << 32) | m as u64;
                let mut rng = rng::stream(seed, COHORT_AGENT, id);
                let atom = dist.atom_for_uniform(rng.random::<f64>());
                let a = &dist.atoms()[atom].0;
                let pi = eq.strategies[atom];
                let mut x = a.x0();
                sums[0] += x;
                for k in 0..grid.n_steps() {
                    let dw = sqrt_dt * rng.sample::<f64, _>(StandardNormal);
                    x += pi * (a.mu() * dt + a.nu() * dw + a.sigma() * (b[k + 1] - b[k]));
                    sums[k + 1] += x;
                }
            }

            let scale = (cohort_size as f64).sqrt();
            let (mut max_dev, mut max_z) = (0.0f64, 0.0f64);
            for k in 0..points {
                let avg = sums[k] / cohort_size as f64;
                let predicted = eq.conditional_mean_wealth(times[k], b[k]);
                let dev = (avg - predicted).abs();
                let sd = conditional_sd(dist, eq, times[k], b[k]);
                let z = if sd > 0.0 {
                    dev * scale / sd
                } else if dev <= 1e-12 * (1.0 + predicted.abs()) {
                    0.0
                } else {
                    f64::INFINITY
                };
                max_dev = max_dev.max(dev);
                max_z = max_z.max(z);
            }
            CohortPathResult {
                max_abs_deviation: max_dev,
                max_z,
                within_band: max_z <= band,
            }
        })
        .collect();

    Ok(CohortReport {
        cohort_size,
        band,
        times,
        paths,
    })
}
