//! Constant mean-field equilibrium for a generic agent drawn from a
//! finite-support type law.
//!
//! The population only enters through `E[sigma pi*]` and `E[mu pi*]`, which
//! solve the consistency identities
//! `E[sigma pi*] = phi_sigma / (1 - psi_sigma)` and
//! `E[mu pi*] = E[sigma pi*] psi_mu + phi_mu`.

use log::warn;

use crate::error::{Error, Result};
use crate::market::{AgentType, CaraForwardUtility, TypeDistribution};
use crate::SolverTolerances;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregatesMF {
    /// `E[theta sigma^2 / (nu^2 + sigma^2)]`
    pub psi_sigma: f64,
    /// `E[delta mu sigma / (nu^2 + sigma^2)]`
    pub phi_sigma: f64,
    /// `E[theta mu sigma / (nu^2 + sigma^2)]`
    pub psi_mu: f64,
    /// `E[delta mu^2 / (nu^2 + sigma^2)]`
    pub phi_mu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumMF {
    pub aggregates: AggregatesMF,
    /// `E[sigma pi*]`
    pub sigma_pi_bar: f64,
    /// `E[mu pi*]`
    pub mu_pi_bar: f64,
    /// `E[x0]`
    pub xi_bar: f64,
    /// `pi*` per atom, in the distribution's atom order.
    pub strategies: Vec<f64>,
    /// `lambda` per atom.
    pub lambdas: Vec<f64>,
    pub ill_conditioned: bool,
}

impl EquilibriumMF {
    /// `pi*(zeta)` for any type facing this population.
    pub fn strategy_for(&self, zeta: &AgentType) -> f64 {
        (zeta.theta() * zeta.sigma() * self.sigma_pi_bar + zeta.mu() * zeta.delta())
            / zeta.total_variance()
    }

    /// Predicted population average wealth `E[X*_t | B]` given `B_t`.
    pub fn conditional_mean_wealth(&self, t: f64, common_noise: f64) -> f64 {
        self.xi_bar + self.mu_pi_bar * t + self.sigma_pi_bar * common_noise
    }

    /// Forward utility of `zeta` at this equilibrium.
    pub fn utility_for(&self, zeta: &AgentType) -> CaraForwardUtility {
        CaraForwardUtility::new(zeta.delta(), mf_lambda(zeta, self))
            .expect("validated types give finite lambda")
    }
}

pub fn mf_aggregates(dist: &TypeDistribution) -> AggregatesMF {
    AggregatesMF {
        psi_sigma: dist.expectation(|a| a.theta() * a.sigma() * a.sigma() / a.total_variance()),
        phi_sigma: dist.expectation(|a| a.delta() * a.mu() * a.sigma() / a.total_variance()),
        psi_mu: dist.expectation(|a| a.theta() * a.mu() * a.sigma() / a.total_variance()),
        phi_mu: dist.expectation(|a| a.delta() * a.mu() * a.mu() / a.total_variance()),
    }
}

pub fn mf_equilibrium(dist: &TypeDistribution) -> Result<EquilibriumMF> {
    mf_equilibrium_with(dist, &SolverTolerances::default())
}

pub fn mf_equilibrium_with(
    dist: &TypeDistribution,
    tol: &SolverTolerances,
) -> Result<EquilibriumMF> {
    let aggregates = mf_aggregates(dist);
    let ill_conditioned = check_solvable(aggregates.psi_sigma, tol)?;
    let sigma_pi_bar = aggregates.phi_sigma / (1.0 - aggregates.psi_sigma);
    let mut eq = EquilibriumMF {
        aggregates,
        sigma_pi_bar,
        mu_pi_bar: sigma_pi_bar * aggregates.psi_mu + aggregates.phi_mu,
        xi_bar: dist.expectation(|a| a.x0()),
        strategies: Vec::with_capacity(dist.len()),
        lambdas: Vec::with_capacity(dist.len()),
        ill_conditioned,
    };
    for (a, _) in dist.atoms() {
        eq.strategies.push(eq.strategy_for(a));
        eq.lambdas.push(mf_lambda(a, &eq));
    }
    Ok(eq)
}

fn check_solvable(psi_sigma: f64, tol: &SolverTolerances) -> Result<bool> {
    let gap = (1.0 - psi_sigma).abs();
    if gap <= tol.degeneracy {
        return Err(Error::NoConstantEquilibrium { psi_sigma });
    }
    let ill = gap <= tol.ill_conditioning;
    if ill {
        warn!("ill-conditioned MF-equilibrium: |1 - psi_sigma| = {gap:e}");
    }
    Ok(ill)
}

/// `lambda = -theta/delta E[mu pi] + (mu + theta/delta sigma E[sigma pi])^2 / (2a)
///  - theta^2/(2 delta^2) E[sigma pi]^2`.
pub fn mf_lambda(zeta: &AgentType, eq: &EquilibriumMF) -> f64 {
    let k = zeta.theta() / zeta.delta();
    let drift = zeta.mu() + k * zeta.sigma() * eq.sigma_pi_bar;
    -k * eq.mu_pi_bar + drift * drift / (2.0 * zeta.total_variance())
        - 0.5 * k * k * eq.sigma_pi_bar.powi(2)
}

/// Same slope, expanded in the aggregates:
/// `-theta/delta (r psi_mu + phi_mu - mu sigma/a r) + mu^2/(2a)
///  + theta^2/(2 delta^2) r^2 (sigma^2/a - 1)` with `r = phi_sigma/(1 - psi_sigma)`.
pub fn mf_lambda_expanded(zeta: &AgentType, agg: &AggregatesMF) -> f64 {
    let r = agg.phi_sigma / (1.0 - agg.psi_sigma);
    let a = zeta.total_variance();
    let k = zeta.theta() / zeta.delta();
    -k * (r * agg.psi_mu + agg.phi_mu - zeta.mu() * zeta.sigma() / a * r)
        + zeta.mu() * zeta.mu() / (2.0 * a)
        + 0.5 * k * k * r * r * (zeta.sigma() * zeta.sigma() / a - 1.0)
}

/// `RHS - U_t` of the mean-field consistency PDE for the generic agent
/// `zeta`, with coefficients taken from the aggregates of `eq`.
pub fn mf_spde_residual(
    zeta: &AgentType,
    eq: &EquilibriumMF,
    u: &CaraForwardUtility,
    x: f64,
    t: f64,
) -> f64 {
    let agg = &eq.aggregates;
    let r = agg.phi_sigma / (1.0 - agg.psi_sigma);
    let a = zeta.total_variance();
    let (theta, mu, sigma) = (zeta.theta(), zeta.mu(), zeta.sigma());
    let ux = u.dx(x, t);
    let uxx = u.dxx(x, t);
    // U_x^2/U_xx = -delta U_x; the ratio form is 0/0 once U underflows.
    let rhs = theta * (r * agg.psi_mu + agg.phi_mu - mu * sigma / a * r) * ux
        + mu * mu / (2.0 * a) * ux * -u.risk_tolerance()
        + 0.5 * uxx * theta * theta * r * r * (sigma * sigma / a - 1.0);
    rhs - u.dt(x, t)
}

/// True when all atoms share `(mu, sigma)` with `sigma > 0` and `nu = 0`.
pub fn is_single_stock(dist: &TypeDistribution) -> bool {
    let first = &dist.atoms()[0].0;
    first.sigma() > 0.0
        && dist
            .atoms()
            .iter()
            .all(|(a, _)| a.nu() == 0.0 && a.mu() == first.mu() && a.sigma() == first.sigma())
}

/// Single-stock equilibrium `pi*(zeta) = mu/sigma^2 (theta E[delta]/(1 - E[theta]) + delta)`.
pub fn single_stock_equilibrium_mf(dist: &TypeDistribution) -> Result<EquilibriumMF> {
    single_stock_equilibrium_mf_with(dist, &SolverTolerances::default())
}

pub fn single_stock_equilibrium_mf_with(
    dist: &TypeDistribution,
    tol: &SolverTolerances,
) -> Result<EquilibriumMF> {
    if !is_single_stock(dist) {
        return Err(Error::Precondition(
            "single-stock solver needs common (mu, sigma), sigma > 0 and nu = 0".into(),
        ));
    }
    let (mu, sigma) = (dist.atoms()[0].0.mu(), dist.atoms()[0].0.sigma());
    let phi = dist.expectation(|a| a.delta());
    let psi = dist.expectation(|a| a.theta());
    let ill_conditioned = check_solvable(psi, tol)?;
    let ratio = phi / (1.0 - psi);
    let strategies: Vec<f64> = dist
        .atoms()
        .iter()
        .map(|(a, _)| mu / (sigma * sigma) * (a.theta() * ratio + a.delta()))
        .collect();

    let aggregates = AggregatesMF {
        psi_sigma: psi,
        phi_sigma: mu / sigma * phi,
        psi_mu: mu / sigma * psi,
        phi_mu: mu * mu / (sigma * sigma) * phi,
    };
    let weights = dist.atoms().iter().map(|(_, w)| *w);
    let sigma_pi_bar: f64 = weights.clone().zip(&strategies).map(|(w, p)| w * sigma * p).sum();
    let mu_pi_bar: f64 = weights.zip(&strategies).map(|(w, p)| w * mu * p).sum();
    let mut eq = EquilibriumMF {
        aggregates,
        sigma_pi_bar,
        mu_pi_bar,
        xi_bar: dist.expectation(|a| a.x0()),
        strategies,
        lambdas: Vec::new(),
        ill_conditioned,
    };
    eq.lambdas = dist.atoms().iter().map(|(a, _)| mf_lambda(a, &eq)).collect();
    Ok(eq)
}
