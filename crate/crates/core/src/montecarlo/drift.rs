use crate::error::Result;
use crate::market::{CaraForwardUtility, OthersAverages, PopulationSpec};

/// Drift of `dU^i(Xhat^i_t, t)` once `U^i` solves its consistency PDE:
///
/// `U_xx / (2a) * (pi^i a - (theta_i sigma_i avg_sigma^(-i) - mu_i U_x/U_xx))^2`
///
/// with `a = nu_i^2 + sigma_i^2`. It is never positive and vanishes exactly
/// at the best response to the others' strategies.
pub fn drift_residual_n(
    i: usize,
    pop: &PopulationSpec,
    strategies: &[f64],
    u: &CaraForwardUtility,
    x: f64,
    t: f64,
) -> Result<f64> {
    let avg = OthersAverages::from_profile(pop, i, strategies)?;
    let a = pop.agent(i);
    let var = a.total_variance();
    let uxx = u.dxx(x, t);
    // -U_x/U_xx is the risk tolerance; the closed form avoids inf/inf.
    let target = a.theta() * a.sigma() * avg.sigma_pi + a.mu() * u.risk_tolerance();
    let gap = strategies[i] * var - target;
    Ok(0.5 * uxx / var * gap * gap)
}
