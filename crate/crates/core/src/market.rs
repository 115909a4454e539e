//! Agent types, populations, type laws and the CARA forward utility.

use crate::error::{Error, Result};

/// Type vector `(x0, delta, theta, mu, nu, sigma)` of a single agent.
///
/// The agent's stock follows `dS/S = mu dt + nu dW + sigma dB` where `W` is
/// idiosyncratic and `B` is shared by every agent. Construct through
/// [`AgentType::new`] (or [`validate_type`]), which enforces
///
/// * `delta > 0`, `mu > 0`, `theta` in `[0, 1]`;
/// * `nu >= 0`, `sigma >= 0` and `nu^2 + sigma^2 > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentType {
    x0: f64,
    delta: f64,
    theta: f64,
    mu: f64,
    nu: f64,
    sigma: f64,
}

impl AgentType {
    pub fn new(x0: f64, delta: f64, theta: f64, mu: f64, nu: f64, sigma: f64) -> Result<Self> {
        let named = [
            ("x0", x0),
            ("delta", delta),
            ("theta", theta),
            ("mu", mu),
            ("nu", nu),
            ("sigma", sigma),
        ];
        for (name, value) in named {
            if !value.is_finite() {
                return Err(Error::Domain(format!("{name} must be finite")));
            }
        }
        if delta <= 0.0 {
            return Err(Error::Domain("delta must be positive".into()));
        }
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::Domain("theta must lie in [0,1]".into()));
        }
        if mu <= 0.0 {
            return Err(Error::Domain("mu must be positive".into()));
        }
        if nu < 0.0 {
            return Err(Error::Domain("nu must be non-negative".into()));
        }
        if sigma < 0.0 {
            return Err(Error::Domain("sigma must be non-negative".into()));
        }
        if nu * nu + sigma * sigma <= 0.0 {
            return Err(Error::Domain("degenerate volatility: nu²+sigma²=0".into()));
        }
        Ok(Self {
            x0,
            delta,
            theta,
            mu,
            nu,
            sigma,
        })
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn theta(&self) -> f64 {
        self.theta
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn nu(&self) -> f64 {
        self.nu
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `nu^2 + sigma^2`, always positive.
    pub fn total_variance(&self) -> f64 {
        self.nu * self.nu + self.sigma * self.sigma
    }

    /// Same type with a different initial wealth.
    pub fn with_x0(mut self, x0: f64) -> Result<Self> {
        if !x0.is_finite() {
            return Err(Error::Domain("x0 must be finite".into()));
        }
        self.x0 = x0;
        Ok(self)
    }

    /// `mu^2 / (2 (nu^2 + sigma^2))`: the time slope without competition.
    pub fn sharpe_lambda(&self) -> f64 {
        self.mu * self.mu / (2.0 * self.total_variance())
    }
}

/// Checks the six raw parameters `(x0, delta, theta, mu, nu, sigma)`.
pub fn validate_type(raw: [f64; 6]) -> Result<AgentType> {
    AgentType::new(raw[0], raw[1], raw[2], raw[3], raw[4], raw[5])
}

/// Ordered list of `n >= 2` agents of the finite game.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSpec {
    agents: Vec<AgentType>,
}

impl PopulationSpec {
    pub fn new(agents: Vec<AgentType>) -> Result<Self> {
        if agents.len() < 2 {
            return Err(Error::Domain(format!(
                "a population needs at least 2 agents, got {}",
                agents.len()
            )));
        }
        Ok(Self { agents })
    }

    /// `n` copies of the same agent.
    pub fn homogeneous(agent: AgentType, n: usize) -> Result<Self> {
        Self::new(vec![agent; n])
    }

    pub fn agents(&self) -> &[AgentType] {
        &self.agents
    }

    pub fn agent(&self, i: usize) -> &AgentType {
        &self.agents[i]
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    /// First `n` agents as a population of their own.
    pub fn prefix(&self, n: usize) -> Result<Self> {
        if n > self.agents.len() {
            return Err(Error::DimensionMismatch {
                expected: self.agents.len(),
                found: n,
            });
        }
        Self::new(self.agents[..n].to_vec())
    }
}

/// Finite-support law of agent types for the mean-field game.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeDistribution {
    atoms: Vec<(AgentType, f64)>,
}

const WEIGHT_SUM_TOL: f64 = 1e-12;

impl TypeDistribution {
    pub fn new(atoms: Vec<(AgentType, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Domain("a type distribution needs at least one atom".into()));
        }
        for (k, (_, w)) in atoms.iter().enumerate() {
            if !(w.is_finite() && *w > 0.0) {
                return Err(Error::Domain(format!("weight of atom {k} must be positive")));
            }
        }
        let total: f64 = atoms.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Domain(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { atoms })
    }

    /// Point mass at `agent`.
    pub fn single(agent: AgentType) -> Self {
        Self {
            atoms: vec![(agent, 1.0)],
        }
    }

    /// Empirical law of a population (equal weights `1/n`).
    pub fn empirical(pop: &PopulationSpec) -> Self {
        let w = 1.0 / pop.len() as f64;
        Self {
            atoms: pop.agents().iter().map(|a| (*a, w)).collect(),
        }
    }

    pub fn atoms(&self) -> &[(AgentType, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `E[f(zeta)]` as an exact weighted sum.
    pub fn expectation<F: Fn(&AgentType) -> f64>(&self, f: F) -> f64 {
        self.atoms.iter().map(|(a, w)| w * f(a)).sum()
    }

    /// Index of the atom hit by a uniform draw `u` in `[0, 1)`.
    pub fn atom_for_uniform(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (k, (_, w)) in self.atoms.iter().enumerate() {
            acc += w;
            if u < acc {
                return k;
            }
        }
        self.atoms.len() - 1
    }
}

/// Exponential forward utility `U(x, t) = -exp(-x/delta + lambda t + c)`.
///
/// `c` is a constant log-offset (zero for the plain `-e^{-x/delta}` start).
/// The sign is always negative, so the utility is stored through its log
/// magnitude; [`CaraForwardUtility::log_abs`] never overflows where
/// [`CaraForwardUtility::value`] would.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaraForwardUtility {
    delta: f64,
    lambda: f64,
    log_offset: f64,
}

impl CaraForwardUtility {
    pub fn new(delta: f64, lambda: f64) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::Domain("delta must be positive".into()));
        }
        if !lambda.is_finite() {
            return Err(Error::Domain("lambda must be finite".into()));
        }
        Ok(Self {
            delta,
            lambda,
            log_offset: 0.0,
        })
    }

    pub fn with_log_offset(mut self, log_offset: f64) -> Self {
        self.log_offset = log_offset;
        self
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn log_offset(&self) -> f64 {
        self.log_offset
    }

    /// `log(-U(x, t))`.
    pub fn log_abs(&self, x: f64, t: f64) -> f64 {
        -x / self.delta + self.lambda * t + self.log_offset
    }

    pub fn value(&self, x: f64, t: f64) -> f64 {
        -self.log_abs(x, t).exp()
    }

    /// `U_x = exp(.)/delta > 0`.
    pub fn dx(&self, x: f64, t: f64) -> f64 {
        self.log_abs(x, t).exp() / self.delta
    }

    /// `U_xx = -exp(.)/delta^2 < 0`.
    pub fn dxx(&self, x: f64, t: f64) -> f64 {
        -self.log_abs(x, t).exp() / (self.delta * self.delta)
    }

    /// `U_t = lambda U`.
    pub fn dt(&self, x: f64, t: f64) -> f64 {
        self.lambda * self.value(x, t)
    }

    /// Closed-form local risk tolerance `-U_x/U_xx`, which is `delta`.
    pub fn risk_tolerance(&self) -> f64 {
        self.delta
    }
}

/// Relative error `|r_fd - delta| / delta` of the local risk tolerance
/// `-U_x/U_xx` formed from central differences of `U` in `x`.
///
/// `h` defaults to `1e-4 * max(1, |x|)`.
///
/// # Panics
/// If an explicit `h` is not positive.
pub fn risk_tolerance_check(u: &CaraForwardUtility, x: f64, t: f64, h: Option<f64>) -> f64 {
    let h = h.unwrap_or_else(|| 1e-4 * x.abs().max(1.0));
    assert!(h > 0.0, "finite-difference step must be positive");
    let up = u.value(x + h, t);
    let mid = u.value(x, t);
    let down = u.value(x - h, t);
    let first = (up - down) / (2.0 * h);
    let second = (up - 2.0 * mid + down) / (h * h);
    let r_fd = -first / second;
    (r_fd - u.delta()).abs() / u.delta()
}

/// Averages over all agents except `i`, each normalized by `n - 1`:
/// `(1/(n-1)) sum_{k != i} pi^k sigma_k`, `... pi^k mu_k` and
/// `... (pi^k nu_k)^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OthersAverages {
    pub sigma_pi: f64,
    pub mu_pi: f64,
    pub nu_pi_sq: f64,
}

impl OthersAverages {
    /// From a full strategy profile of length `n`.
    pub fn from_profile(pop: &PopulationSpec, i: usize, strategies: &[f64]) -> Result<Self> {
        let n = pop.len();
        if strategies.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: strategies.len(),
            });
        }
        check_index(i, n)?;
        let others = pop
            .agents()
            .iter()
            .zip(strategies)
            .enumerate()
            .filter(|(k, _)| *k != i)
            .map(|(_, (a, p))| (a, *p));
        Ok(Self::accumulate(others, n))
    }

    /// From the `n - 1` strategies of the other agents, in population order
    /// with agent `i` skipped.
    pub fn from_others(pop: &PopulationSpec, i: usize, others: &[f64]) -> Result<Self> {
        let n = pop.len();
        if others.len() != n - 1 {
            return Err(Error::DimensionMismatch {
                expected: n - 1,
                found: others.len(),
            });
        }
        check_index(i, n)?;
        let agents = pop
            .agents()
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != i)
            .map(|(_, a)| a);
        Ok(Self::accumulate(agents.zip(others.iter().copied()), n))
    }

    fn accumulate<'a, I: Iterator<Item = (&'a AgentType, f64)>>(others: I, n: usize) -> Self {
        let (mut s, mut m, mut v) = (0.0, 0.0, 0.0);
        for (a, p) in others {
            s += p * a.sigma();
            m += p * a.mu();
            v += (p * a.nu()).powi(2);
        }
        let scale = 1.0 / (n as f64 - 1.0);
        Self {
            sigma_pi: s * scale,
            mu_pi: m * scale,
            nu_pi_sq: v * scale,
        }
    }
}

pub(crate) fn check_index(i: usize, n: usize) -> Result<()> {
    if i >= n {
        return Err(Error::Precondition(format!(
            "agent index {i} out of range for {n} agents"
        )));
    }
    Ok(())
}

/// `RHS - U_t` of the best-response consistency PDE for agent `i`, with the
/// other agents' constant strategies taken from `strategies`.
///
/// The right-hand side is
/// `(theta avg_mu - mu theta sigma avg_sigma / a) U_x + mu^2/(2a) U_x^2/U_xx
///  + U_xx/2 [ (theta avg_sigma)^2 (sigma^2/a - 1) - theta^2/(n-1) avg_nu_sq ]`
/// with `a = nu^2 + sigma^2`. For `u.lambda()` equal to
/// [`crate::nplayer::lambda_from_others`] it vanishes for every `(x, t)`.
pub fn spde_residual_n(
    i: usize,
    pop: &PopulationSpec,
    strategies: &[f64],
    u: &CaraForwardUtility,
    x: f64,
    t: f64,
) -> Result<f64> {
    let avg = OthersAverages::from_profile(pop, i, strategies)?;
    let agent = pop.agent(i);
    let (theta, mu, sigma) = (agent.theta(), agent.mu(), agent.sigma());
    let a = agent.total_variance();
    let n = pop.len() as f64;

    let ux = u.dx(x, t);
    let uxx = u.dxx(x, t);
    // U_x^2/U_xx = -delta U_x; the ratio form is 0/0 once U underflows.
    let rhs = (theta * avg.mu_pi - mu * theta * sigma * avg.sigma_pi / a) * ux
        + mu * mu / (2.0 * a) * ux * -u.risk_tolerance()
        + 0.5
            * uxx
            * ((theta * avg.sigma_pi).powi(2) * (sigma * sigma / a - 1.0)
                - theta * theta / (n - 1.0) * avg.nu_pi_sq);
    Ok(rhs - u.dt(x, t))
}
