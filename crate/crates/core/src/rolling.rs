//! Forward utilities rolled over a sequence of re-specified horizons.
//!
//! On `[T_j, T_{j+1})` the market and the generic agent's type are fixed and
//! the mean-field game is solved afresh, giving a slope `lambda_j`. The
//! utility at `T_j` becomes the initial datum of the next segment, so
//!
//! `U(x, t) = u0(x) exp(c_j + (t - T_j) lambda_j)`,
//! `c_j = sum_{k=1..j} (T_k - T_{k-1}) lambda_{k-1}`.
//!
//! `u0(x) = -exp(-x/delta_0)` keeps the first segment's risk tolerance; a
//! later change of `delta` only enters through `lambda_j`.

use crate::error::{Error, Result};
use crate::market::{AgentType, CaraForwardUtility, TypeDistribution};
use crate::mfg::{mf_equilibrium, mf_lambda, EquilibriumMF};
use crate::montecarlo::{
    martingale_test, simulate_generic_agent, utility_paths, MartingaleReport, SimGrid,
};

const FORM_TOLERANCE: f64 = 1e-12;

/// One horizon: the generic agent's type and the population it faces from
/// `start` on.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonSegment {
    pub start: f64,
    pub agent: AgentType,
    pub population: TypeDistribution,
}

impl HorizonSegment {
    /// The agent faces a population of its own type.
    pub fn homogeneous(start: f64, agent: AgentType) -> Self {
        Self {
            start,
            agent,
            population: TypeDistribution::single(agent),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonSchedule {
    segments: Vec<HorizonSegment>,
}

impl HorizonSchedule {
    /// Requires a first start of 0 and strictly increasing starts.
    pub fn new(segments: Vec<HorizonSegment>) -> Result<Self> {
        let starts: Vec<f64> = segments.iter().map(|s| s.start).collect();
        validate_starts(&starts)?;
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[HorizonSegment] {
        &self.segments
    }

    pub fn starts(&self) -> Vec<f64> {
        self.segments.iter().map(|s| s.start).collect()
    }
}

fn validate_starts(starts: &[f64]) -> Result<()> {
    match starts.first() {
        None => return Err(Error::Domain("schedule has no segments".into())),
        Some(&t0) if t0 != 0.0 => {
            return Err(Error::Domain("first horizon must start at 0".into()))
        }
        _ => {}
    }
    if let Some(j) = starts.windows(2).position(|w| !(w[1] > w[0] && w[1].is_finite())) {
        return Err(Error::Domain(format!(
            "horizon starts must be strictly increasing (segment {})",
            j + 1
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolledUtility {
    delta: f64,
    starts: Vec<f64>,
    lambdas: Vec<f64>,
    offsets: Vec<f64>,
}

impl RolledUtility {
    /// Assembles the offsets and checks that the product and telescoped forms
    /// agree at every junction.
    pub fn from_lambdas(delta: f64, starts: Vec<f64>, lambdas: Vec<f64>) -> Result<Self> {
        CaraForwardUtility::new(delta, 0.0)?;
        validate_starts(&starts)?;
        if lambdas.len() != starts.len() {
            return Err(Error::DimensionMismatch {
                expected: starts.len(),
                found: lambdas.len(),
            });
        }
        if lambdas.iter().any(|l| !l.is_finite()) {
            return Err(Error::Domain("lambda must be finite".into()));
        }
        let mut offsets = Vec::with_capacity(starts.len());
        offsets.push(0.0);
        for j in 1..starts.len() {
            offsets.push(offsets[j - 1] + (starts[j] - starts[j - 1]) * lambdas[j - 1]);
        }
        let u = Self {
            delta,
            starts,
            lambdas,
            offsets,
        };
        for j in 0..u.starts.len() {
            let t = u.starts[j];
            let (p, q) = (u.product_log_factor(t), u.telescoped_log_factor(t));
            if (p - q).abs() > FORM_TOLERANCE * p.abs().max(1.0) {
                return Err(Error::Precondition(format!(
                    "rolled utility forms disagree at T_{j}: {p} vs {q}"
                )));
            }
        }
        Ok(u)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn starts(&self) -> &[f64] {
        &self.starts
    }
    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }
    /// `c_j` per segment.
    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }
    pub fn n_segments(&self) -> usize {
        self.starts.len()
    }

    /// Index `j` with `T_j <= t < T_{j+1}`; the last segment is open-ended
    /// and times before 0 map to segment 0.
    pub fn segment_at(&self, t: f64) -> usize {
        self.starts.partition_point(|&s| s <= t).saturating_sub(1)
    }

    /// `c_j + (t - T_j) lambda_j`.
    pub fn product_log_factor(&self, t: f64) -> f64 {
        self.log_factor_in(self.segment_at(t), t)
    }

    /// The same factor written as `sum_{k=1..j} T_k (lambda_{k-1} - lambda_k) + t lambda_j`.
    pub fn telescoped_log_factor(&self, t: f64) -> f64 {
        let j = self.segment_at(t);
        (1..=j)
            .map(|k| self.starts[k] * (self.lambdas[k - 1] - self.lambdas[k]))
            .sum::<f64>()
            + t * self.lambdas[j]
    }

    /// Log factor from segment `j`'s formula, whether or not `t` lies in it.
    pub fn log_factor_in(&self, j: usize, t: f64) -> f64 {
        self.offsets[j] + (t - self.starts[j]) * self.lambdas[j]
    }

    /// `log(-U(x, t))`.
    pub fn log_abs(&self, x: f64, t: f64) -> f64 {
        -x / self.delta + self.product_log_factor(t)
    }

    /// `U(x, t) = u0(x) exp(c_j + (t - T_j) lambda_j)`.
    pub fn eval_rolled(&self, x: f64, t: f64) -> f64 {
        -self.log_abs(x, t).exp()
    }

    /// Segment `j` as a plain exponential utility in absolute time.
    pub fn segment_utility(&self, j: usize) -> CaraForwardUtility {
        CaraForwardUtility::new(self.delta, self.lambdas[j])
            .expect("validated at construction")
            .with_log_offset(self.offsets[j] - self.lambdas[j] * self.starts[j])
    }

    /// The forward problem restarted at `T_j` from the datum `U(., T_j)`,
    /// in time `s = t - T_j` since the restart.
    pub fn restarted_utility(&self, j: usize) -> CaraForwardUtility {
        CaraForwardUtility::new(self.delta, self.lambdas[j])
            .expect("validated at construction")
            .with_log_offset(self.offsets[j])
    }
}

/// Solves each segment's mean-field game and rolls the generic agent's
/// utility across the schedule. Errors are tagged with the segment index.
pub fn roll_schedule(schedule: &HorizonSchedule) -> Result<RolledUtility> {
    let eqs = segment_equilibria(schedule)?;
    let lambdas = schedule
        .segments()
        .iter()
        .zip(&eqs)
        .map(|(s, eq)| mf_lambda(&s.agent, eq))
        .collect();
    RolledUtility::from_lambdas(schedule.segments()[0].agent.delta(), schedule.starts(), lambdas)
}

fn segment_equilibria(schedule: &HorizonSchedule) -> Result<Vec<EquilibriumMF>> {
    schedule
        .segments()
        .iter()
        .enumerate()
        .map(|(j, s)| {
            mf_equilibrium(&s.population).map_err(|e| Error::Segment {
                segment: j,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Simulates the generic agent at each segment's equilibrium strategy,
/// carrying `(X, Xbar)` across junctions, and runs a martingale test of the
/// rolled utility of `X - theta_j Xbar` on every segment. The last segment
/// runs until `end`.
pub fn simulate_schedule(
    schedule: &HorizonSchedule,
    end: f64,
    steps_per_segment: usize,
    n_paths: usize,
    seed: u64,
    z_crit: f64,
) -> Result<Vec<MartingaleReport>> {
    let rolled = roll_schedule(schedule)?;
    let eqs = segment_equilibria(schedule)?;
    let segments = schedule.segments();
    let last_start = segments.last().expect("non-empty").start;
    if !(end > last_start) {
        return Err(Error::Domain("end must lie after the last horizon start".into()));
    }
    let mut state = vec![(segments[0].agent.x0(), eqs[0].xi_bar)];
    let mut reports = Vec::with_capacity(segments.len());
    for (j, (seg, eq)) in segments.iter().zip(&eqs).enumerate() {
        let stop = segments.get(j + 1).map_or(end, |s| s.start);
        let grid = SimGrid::new(stop - seg.start, steps_per_segment)?;
        let strategy = eq.strategy_for(&seg.agent);
        let paths = simulate_generic_agent(
            &seg.agent, strategy, eq, &state, seg.start, grid, n_paths, seed, j as u64,
        )?;
        let times = paths.times();
        let u = utility_paths(&paths.relative(seg.agent.theta()), &rolled.segment_utility(j), &times);
        reports.push(martingale_test(&u, &times, z_crit)?);
        state = paths.terminal_states();
    }
    Ok(reports)
}
