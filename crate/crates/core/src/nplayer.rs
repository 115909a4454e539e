//! Constant forward Nash equilibrium of the n-player game.
//!
//! With exponential forward utilities every agent's best response to constant
//! strategies of the others is the constant
//! `(theta_i sigma_i avg_sigma^(-i) + mu_i delta_i) / (nu_i^2 + sigma_i^2)`,
//! so the equilibrium is the solution of a linear system whose only coupling
//! is the cross-sectional average `avg(pi sigma)`. It is solved in closed
//! form through the aggregates `phi_sigma_n`, `psi_sigma_n`.

use log::warn;

use crate::error::{Error, Result};
use crate::market::{check_index, OthersAverages, PopulationSpec};
use crate::SolverTolerances;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregatesN {
    pub phi_sigma: f64,
    pub psi_sigma: f64,
    pub phi_mu: f64,
    pub psi_mu: f64,
}

/// Whole-population averages `(1/n) sum pi sigma`, `(1/n) sum pi mu` and
/// `(1/n) sum (pi nu)^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationAverages {
    pub sigma_pi: f64,
    pub mu_pi: f64,
    pub nu_pi_sq: f64,
}

impl PopulationAverages {
    pub fn from_profile(pop: &PopulationSpec, strategies: &[f64]) -> Result<Self> {
        check_len(pop, strategies)?;
        let n = pop.len() as f64;
        let (mut s, mut m, mut v) = (0.0, 0.0, 0.0);
        for (a, p) in pop.agents().iter().zip(strategies) {
            s += p * a.sigma();
            m += p * a.mu();
            v += (p * a.nu()).powi(2);
        }
        Ok(Self {
            sigma_pi: s / n,
            mu_pi: m / n,
            nu_pi_sq: v / n,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumN {
    pub strategies: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub aggregates: AggregatesN,
    pub averages: PopulationAverages,
    pub max_nash_residual: f64,
    /// `|1 - psi_sigma_n|` is below the ill-conditioning threshold.
    pub ill_conditioned: bool,
}

/// `nu_i^2 + sigma_i^2 (1 + theta_i/(n-1))`.
fn effective_variance(nu: f64, sigma: f64, theta: f64, n: usize) -> f64 {
    nu * nu + sigma * sigma * (1.0 + theta / (n as f64 - 1.0))
}

fn check_len(pop: &PopulationSpec, v: &[f64]) -> Result<()> {
    if v.len() != pop.len() {
        return Err(Error::DimensionMismatch {
            expected: pop.len(),
            found: v.len(),
        });
    }
    Ok(())
}

pub fn aggregates_n(pop: &PopulationSpec) -> AggregatesN {
    let n = pop.len();
    let (mut phi_s, mut psi_s, mut phi_m, mut psi_m) = (0.0, 0.0, 0.0, 0.0);
    for a in pop.agents() {
        let d = effective_variance(a.nu(), a.sigma(), a.theta(), n);
        phi_s += a.delta() * a.mu() * a.sigma() / d;
        psi_s += a.theta() * a.sigma() * a.sigma() / d;
        phi_m += a.delta() * a.mu() * a.mu() / d;
        psi_m += a.theta() * a.mu() * a.sigma() / d;
    }
    let nf = n as f64;
    AggregatesN {
        phi_sigma: phi_s / nf,
        psi_sigma: psi_s / (nf - 1.0),
        phi_mu: phi_m / nf,
        psi_mu: psi_m / nf,
    }
}

fn check_solvable(psi_sigma: f64, tol: &SolverTolerances) -> Result<bool> {
    let gap = (1.0 - psi_sigma).abs();
    if gap <= tol.degeneracy {
        return Err(Error::DegenerateEquilibrium { psi_sigma });
    }
    let ill = gap <= tol.ill_conditioning;
    if ill {
        warn!("ill-conditioned equilibrium: |1 - psi_sigma| = {gap:e}");
    }
    Ok(ill)
}

/// Closed-form constant forward Nash equilibrium with default tolerances.
pub fn equilibrium_n(pop: &PopulationSpec) -> Result<EquilibriumN> {
    equilibrium_n_with(pop, &SolverTolerances::default())
}

pub fn equilibrium_n_with(pop: &PopulationSpec, tol: &SolverTolerances) -> Result<EquilibriumN> {
    let n = pop.len();
    let nf = n as f64;
    let aggregates = aggregates_n(pop);
    let ill_conditioned = check_solvable(aggregates.psi_sigma, tol)?;

    let sigma_pi = aggregates.phi_sigma / (1.0 - aggregates.psi_sigma);
    let scale = nf / (nf - 1.0);
    let strategies: Vec<f64> = pop
        .agents()
        .iter()
        .map(|a| {
            (a.theta() * a.sigma() * scale * sigma_pi + a.mu() * a.delta())
                / effective_variance(a.nu(), a.sigma(), a.theta(), n)
        })
        .collect();

    let nu_pi_sq = pop
        .agents()
        .iter()
        .zip(&strategies)
        .map(|(a, p)| (a.nu() * p).powi(2))
        .sum::<f64>()
        / nf;
    let averages = PopulationAverages {
        sigma_pi,
        mu_pi: scale * sigma_pi * aggregates.psi_mu + aggregates.phi_mu,
        nu_pi_sq,
    };

    finish(pop, strategies, aggregates, averages, ill_conditioned)
}

fn finish(
    pop: &PopulationSpec,
    strategies: Vec<f64>,
    aggregates: AggregatesN,
    averages: PopulationAverages,
    ill_conditioned: bool,
) -> Result<EquilibriumN> {
    let lambdas = (0..pop.len())
        .map(|i| lambda_from_others(i, &without(&strategies, i), pop))
        .collect::<Result<Vec<_>>>()?;
    let max_nash_residual = nash_residual(&strategies, pop)?
        .into_iter()
        .fold(0.0, |m: f64, r| m.max(r.abs()));
    Ok(EquilibriumN {
        strategies,
        lambdas,
        aggregates,
        averages,
        max_nash_residual,
        ill_conditioned,
    })
}

/// Copy of `v` with entry `i` removed.
pub fn without(v: &[f64], i: usize) -> Vec<f64> {
    v.iter()
        .enumerate()
        .filter(|(k, _)| *k != i)
        .map(|(_, x)| *x)
        .collect()
}

/// Optimal constant strategy of agent `i` against constant `others`
/// (population order, `i` skipped).
pub fn best_response(i: usize, others: &[f64], pop: &PopulationSpec) -> Result<f64> {
    let avg = OthersAverages::from_others(pop, i, others)?;
    let a = pop.agent(i);
    Ok((a.theta() * a.sigma() * avg.sigma_pi + a.mu() * a.delta()) / a.total_variance())
}

fn simultaneous_best_response(pop: &PopulationSpec, profile: &[f64]) -> Result<Vec<f64>> {
    let n = pop.len() as f64;
    let total: f64 = pop
        .agents()
        .iter()
        .zip(profile)
        .map(|(a, p)| p * a.sigma())
        .sum();
    Ok(pop
        .agents()
        .iter()
        .zip(profile)
        .map(|(a, p)| {
            let others_sigma = (total - p * a.sigma()) / (n - 1.0);
            (a.theta() * a.sigma() * others_sigma + a.mu() * a.delta()) / a.total_variance()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestResponseRun {
    pub strategies: Vec<f64>,
    /// Number of damped updates applied.
    pub iterations: usize,
    /// `max_i |BR(pi)_i - pi_i|` before each update, plus the final check.
    pub log: Vec<f64>,
}

/// Damped simultaneous (Jacobi) best-response iteration
/// `pi <- (1 - damping) pi + damping BR(pi)`, stopped once
/// `max |BR(pi) - pi| <= tol`.
pub fn best_response_iteration(
    pop: &PopulationSpec,
    start: &[f64],
    damping: f64,
    tol: f64,
    max_iter: usize,
) -> Result<BestResponseRun> {
    check_len(pop, start)?;
    if !(damping > 0.0 && damping <= 1.0) {
        return Err(Error::Precondition("damping must lie in (0, 1]".into()));
    }
    if start.iter().any(|x| !x.is_finite()) {
        return Err(Error::Precondition("start profile must be finite".into()));
    }
    let mut profile = start.to_vec();
    let mut log = Vec::new();
    for iteration in 0..=max_iter {
        let response = simultaneous_best_response(pop, &profile)?;
        let step = response
            .iter()
            .zip(&profile)
            .fold(0.0, |m: f64, (r, p)| m.max((r - p).abs()));
        log.push(step);
        if step <= tol {
            return Ok(BestResponseRun {
                strategies: profile,
                iterations: iteration,
                log,
            });
        }
        if !step.is_finite() || iteration == max_iter {
            return Err(Error::NoConvergence {
                iterations: iteration,
                last_step: step,
            });
        }
        for (p, r) in profile.iter_mut().zip(&response) {
            *p = (1.0 - damping) * *p + damping * r;
        }
    }
    unreachable!("loop returns on its last iteration")
}

/// Time slope `lambda_i` of agent `i`'s exponential forward utility when the
/// others play the constants `others`:
///
/// `-theta/delta avg_mu + (mu + theta/delta sigma avg_sigma)^2 / (2a)
///  - theta^2/(2 delta^2) [avg_sigma^2 + avg_nu_sq/(n-1)]`.
pub fn lambda_from_others(i: usize, others: &[f64], pop: &PopulationSpec) -> Result<f64> {
    let avg = OthersAverages::from_others(pop, i, others)?;
    let a = pop.agent(i);
    let n = pop.len() as f64;
    let k = a.theta() / a.delta();
    let drift = a.mu() + k * a.sigma() * avg.sigma_pi;
    Ok(-k * avg.mu_pi + drift * drift / (2.0 * a.total_variance())
        - 0.5 * k * k * (avg.sigma_pi.powi(2) + avg.nu_pi_sq / (n - 1.0)))
}

/// `lambda_i` at equilibrium, written with whole-population averages via
/// `avg^(-i) = n/(n-1) avg - pi^i x_i/(n-1)`.
pub fn lambda_equilibrium(pop: &PopulationSpec, eq: &EquilibriumN, i: usize) -> Result<f64> {
    check_len(pop, &eq.strategies)?;
    check_index(i, pop.len())?;
    let n = pop.len() as f64;
    let a = pop.agent(i);
    let p = eq.strategies[i];
    let av = &eq.averages;
    let others_sigma = n / (n - 1.0) * av.sigma_pi - p * a.sigma() / (n - 1.0);
    let others_mu = n / (n - 1.0) * av.mu_pi - p * a.mu() / (n - 1.0);
    let idio = n / (n - 1.0).powi(2) * av.nu_pi_sq - (p * a.nu()).powi(2) / (n - 1.0).powi(2);
    let var = a.total_variance();
    let k = a.theta() / a.delta();
    Ok(-k * (others_mu - a.mu() * a.sigma() / var * others_sigma)
        + a.mu() * a.mu() / (2.0 * var)
        + 0.5 * k * k * (others_sigma.powi(2) * (a.sigma() * a.sigma() / var - 1.0) - idio))
}

/// Residuals of the equilibrium system
/// `pi^i (nu_i^2 + sigma_i^2) - theta_i sigma_i avg_sigma^(-i) - mu_i delta_i`.
pub fn nash_residual(strategies: &[f64], pop: &PopulationSpec) -> Result<Vec<f64>> {
    check_len(pop, strategies)?;
    (0..pop.len())
        .map(|i| {
            let avg = OthersAverages::from_profile(pop, i, strategies)?;
            let a = pop.agent(i);
            Ok(strategies[i] * a.total_variance()
                - a.theta() * a.sigma() * avg.sigma_pi
                - a.mu() * a.delta())
        })
        .collect()
}

/// True when every agent shares `(mu, sigma)` with `sigma > 0` and `nu = 0`.
pub fn is_single_stock(pop: &PopulationSpec) -> bool {
    let first = pop.agent(0);
    first.sigma() > 0.0
        && pop
            .agents()
            .iter()
            .all(|a| a.nu() == 0.0 && a.mu() == first.mu() && a.sigma() == first.sigma())
}

/// Equilibrium for a single common stock through the simplified aggregates
/// `phi = (1/n) sum delta_i/(1 + theta_i/(n-1))` and
/// `psi = (1/(n-1)) sum theta_i/(1 + theta_i/(n-1))`.
pub fn single_stock_equilibrium_n(pop: &PopulationSpec) -> Result<EquilibriumN> {
    single_stock_equilibrium_n_with(pop, &SolverTolerances::default())
}

pub fn single_stock_equilibrium_n_with(
    pop: &PopulationSpec,
    tol: &SolverTolerances,
) -> Result<EquilibriumN> {
    if !is_single_stock(pop) {
        return Err(Error::Precondition(
            "single-stock solver needs common (mu, sigma), sigma > 0 and nu = 0".into(),
        ));
    }
    let n = pop.len();
    let nf = n as f64;
    let (mu, sigma) = (pop.agent(0).mu(), pop.agent(0).sigma());
    let damp = |theta: f64| 1.0 + theta / (nf - 1.0);
    let phi = pop.agents().iter().map(|a| a.delta() / damp(a.theta())).sum::<f64>() / nf;
    let psi = pop.agents().iter().map(|a| a.theta() / damp(a.theta())).sum::<f64>() / (nf - 1.0);
    let ill_conditioned = check_solvable(psi, tol)?;

    let ratio = phi / (1.0 - psi);
    let strategies: Vec<f64> = pop
        .agents()
        .iter()
        .map(|a| {
            mu / (sigma * sigma * damp(a.theta()))
                * (a.theta() * (1.0 + 1.0 / (nf - 1.0)) * ratio + a.delta())
        })
        .collect();
    let aggregates = AggregatesN {
        phi_sigma: mu / sigma * phi,
        psi_sigma: psi,
        phi_mu: mu * mu / (sigma * sigma) * phi,
        psi_mu: mu / sigma * psi,
    };
    let averages = PopulationAverages::from_profile(pop, &strategies)?;
    finish(pop, strategies, aggregates, averages, ill_conditioned)
}
