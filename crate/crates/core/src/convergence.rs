//! Empirical n-player to mean-field convergence.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::market::{PopulationSpec, TypeDistribution};
use crate::mfg::{mf_equilibrium, EquilibriumMF};
use crate::montecarlo::rng::{self, POPULATION};
use crate::nplayer::equilibrium_n;

/// `n` i.i.d. draws from `dist`. Draws are sequential on one stream, so the
/// sample of size `n` is the prefix of any larger sample with the same seed.
pub fn sample_population(dist: &TypeDistribution, n: usize, seed: u64) -> Result<PopulationSpec> {
    let mut rng = rng::stream(seed, POPULATION, 0);
    let agents = (0..n)
        .map(|_| dist.atoms()[dist.atom_for_uniform(rng.random::<f64>())].0)
        .collect();
    PopulationSpec::new(agents)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    /// `max_i |pi_n^i - pi_MF(zeta_i)|`
    pub strategy_gap: f64,
    pub phi_sigma_gap: f64,
    pub psi_sigma_gap: f64,
    /// `max_i |lambda_n^i - lambda_MF(zeta_i)|`
    pub lambda_gap: f64,
    /// `max_i theta_i^2/(2 delta_i^2) (1/(n-1)^2) sum_{k != i} (pi^k nu_k)^2`,
    /// the idiosyncratic part of `lambda_i` that has no mean-field analogue.
    pub idiosyncratic_term: f64,
    /// The n-player game had no constant equilibrium; gaps are NaN.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub seed: u64,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceReport {
    /// `max_n n * idiosyncratic_term`, the constant `K` in the `K/n` bound.
    pub fn idiosyncratic_constant(&self) -> f64 {
        self.rows
            .iter()
            .filter(|r| !r.degenerate)
            .map(|r| r.n as f64 * r.idiosyncratic_term)
            .fold(0.0, f64::max)
    }

    /// `sqrt(n) * strategy_gap` at the largest `n`.
    pub fn rate_constant(&self) -> Option<f64> {
        self.rows
            .iter()
            .rev()
            .find(|r| !r.degenerate)
            .map(|r| (r.n as f64).sqrt() * r.strategy_gap)
    }
}

fn compare(pop: &PopulationSpec, mf: &EquilibriumMF) -> ConvergenceRow {
    let n = pop.len();
    let eq = match equilibrium_n(pop) {
        Ok(eq) => eq,
        Err(_) => {
            return ConvergenceRow {
                n,
                strategy_gap: f64::NAN,
                phi_sigma_gap: f64::NAN,
                psi_sigma_gap: f64::NAN,
                lambda_gap: f64::NAN,
                idiosyncratic_term: f64::NAN,
                degenerate: true,
            }
        }
    };
    let nf = n as f64;
    let total_nu: f64 = pop
        .agents()
        .iter()
        .zip(&eq.strategies)
        .map(|(a, p)| (p * a.nu()).powi(2))
        .sum();
    let (mut strategy_gap, mut lambda_gap, mut idio) = (0.0f64, 0.0f64, 0.0f64);
    for (i, a) in pop.agents().iter().enumerate() {
        let p = eq.strategies[i];
        strategy_gap = strategy_gap.max((p - mf.strategy_for(a)).abs());
        lambda_gap = lambda_gap.max((eq.lambdas[i] - crate::mfg::mf_lambda(a, mf)).abs());
        let others = total_nu - (p * a.nu()).powi(2);
        let k = a.theta() / a.delta();
        idio = idio.max(0.5 * k * k * others / ((nf - 1.0) * (nf - 1.0)));
    }
    ConvergenceRow {
        n,
        strategy_gap,
        phi_sigma_gap: (eq.aggregates.phi_sigma - mf.aggregates.phi_sigma).abs(),
        psi_sigma_gap: (eq.aggregates.psi_sigma - mf.aggregates.psi_sigma).abs(),
        lambda_gap,
        idiosyncratic_term: idio,
        degenerate: false,
    }
}

/// Solves the n-player game on nested samples of `dist` (the first `n`
/// agents of one population of size `max(n_list)`) and records the gaps to
/// the mean-field equilibrium. Rows are sorted by `n`.
pub fn convergence_sweep(
    dist: &TypeDistribution,
    n_list: &[usize],
    seed: u64,
) -> Result<ConvergenceReport> {
    if n_list.is_empty() {
        return Err(Error::Precondition("empty n list".into()));
    }
    if let Some(&n) = n_list.iter().find(|&&n| n < 2) {
        return Err(Error::Precondition(format!("n = {n} is below 2")));
    }
    let mf = mf_equilibrium(dist)?;
    let mut ns = n_list.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let largest = sample_population(dist, *ns.last().expect("non-empty"), seed)?;
    let rows = ns
        .par_iter()
        .map(|&n| Ok(compare(&largest.prefix(n)?, &mf)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceReport { seed, rows })
}
