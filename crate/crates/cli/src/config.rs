//! Run configuration: strict JSON, validated before any computation.

use std::fmt;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use fmfg_core::rolling::{HorizonSchedule, HorizonSegment};
use fmfg_core::{AgentType, PopulationSpec, SolverTolerances, TypeDistribution};
use serde::Deserialize;

/// The config file is not valid JSON or does not match the schema.
#[derive(Debug)]
pub struct ParseError(pub String);

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "parse error: {}", self.0)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    population: Option<Vec<RawAgent>>,
    distribution: Option<Vec<RawAtom>>,
    simulation: Option<RawSimulation>,
    sweep: Option<RawSweep>,
    schedule: Option<RawSchedule>,
    best_response: Option<RawBestResponse>,
    tolerances: Option<RawTolerances>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAgent {
    #[serde(default)]
    x0: f64,
    delta: f64,
    theta: f64,
    mu: f64,
    nu: f64,
    sigma: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAtom {
    weight: f64,
    #[serde(default)]
    x0: f64,
    delta: f64,
    theta: f64,
    mu: f64,
    nu: f64,
    sigma: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulation {
    horizon: f64,
    n_steps: usize,
    n_paths: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_z_crit")]
    z_crit: f64,
    deviation: Option<RawDeviation>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDeviation {
    agent: usize,
    shift: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    n_list: Vec<usize>,
    #[serde(default)]
    seed: u64,
    #[serde(default = "one")]
    repetitions: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchedule {
    segments: Vec<RawSegment>,
    simulation: Option<RawScheduleSimulation>,
    #[serde(default)]
    evaluate: Vec<RawPoint>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSegment {
    start: f64,
    agent: RawAgent,
    distribution: Option<Vec<RawAtom>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScheduleSimulation {
    end: f64,
    steps_per_segment: usize,
    n_paths: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_z_crit")]
    z_crit: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPoint {
    x: f64,
    t: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBestResponse {
    agent: usize,
    profile: Vec<f64>,
    iteration: Option<RawIteration>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIteration {
    #[serde(default = "half")]
    damping: f64,
    #[serde(default = "default_tol")]
    tol: f64,
    #[serde(default = "default_max_iter")]
    max_iter: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTolerances {
    degeneracy: Option<f64>,
    ill_conditioning: Option<f64>,
}

fn default_z_crit() -> f64 {
    fmfg_core::montecarlo::DEFAULT_Z_CRIT
}
fn one() -> usize {
    1
}
fn half() -> f64 {
    0.5
}
fn default_tol() -> f64 {
    1e-12
}
fn default_max_iter() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub horizon: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub z_crit: f64,
    /// Zero-based agent index and additive shift to its equilibrium strategy.
    pub deviation: Option<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub n_list: Vec<usize>,
    pub seed: u64,
    pub repetitions: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleSimulation {
    pub end: f64,
    pub steps_per_segment: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub z_crit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub schedule: HorizonSchedule,
    pub simulation: Option<ScheduleSimulation>,
    pub evaluate: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Iteration {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestResponse {
    /// Zero-based.
    pub agent: usize,
    pub profile: Vec<f64>,
    pub iteration: Option<Iteration>,
}

/// Validated configuration. Sections are optional; each command checks for
/// the ones it needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub population: Option<PopulationSpec>,
    pub distribution: Option<TypeDistribution>,
    pub simulation: Option<Simulation>,
    pub sweep: Option<Sweep>,
    pub schedule: Option<Schedule>,
    pub best_response: Option<BestResponse>,
    pub tolerances: SolverTolerances,
}

impl RunConfig {
    /// Replaces every seed in the config.
    pub fn override_seed(&mut self, seed: u64) {
        if let Some(s) = &mut self.simulation {
            s.seed = seed;
        }
        if let Some(s) = &mut self.sweep {
            s.seed = seed;
        }
        if let Some(Schedule {
            simulation: Some(s),
            ..
        }) = &mut self.schedule
        {
            s.seed = seed;
        }
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| ParseError(e.to_string()))?;
    validate(raw)
}

fn agent(raw: &RawAgent, field: &str) -> Result<AgentType> {
    AgentType::new(raw.x0, raw.delta, raw.theta, raw.mu, raw.nu, raw.sigma)
        .with_context(|| format!("in `{field}`"))
}

fn population(raw: &[RawAgent], field: &str) -> Result<PopulationSpec> {
    let agents = raw
        .iter()
        .enumerate()
        .map(|(i, a)| agent(a, &format!("{field}[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    PopulationSpec::new(agents).with_context(|| format!("in `{field}`"))
}

fn distribution(raw: &[RawAtom], field: &str) -> Result<TypeDistribution> {
    let atoms = raw
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let t = AgentType::new(a.x0, a.delta, a.theta, a.mu, a.nu, a.sigma)
                .with_context(|| format!("in `{field}[{i}]`"))?;
            Ok((t, a.weight))
        })
        .collect::<Result<Vec<_>>>()?;
    TypeDistribution::new(atoms).with_context(|| format!("in `{field}`"))
}

fn validate(raw: RawConfig) -> Result<RunConfig> {
    let population = raw
        .population
        .as_deref()
        .map(|p| population(p, "population"))
        .transpose()?;
    let distribution = raw
        .distribution
        .as_deref()
        .map(|d| distribution(d, "distribution"))
        .transpose()?;

    let simulation = match raw.simulation {
        None => None,
        Some(s) => {
            if !(s.horizon.is_finite() && s.horizon > 0.0) {
                bail!("in `simulation.horizon`: horizon must be positive");
            }
            if s.n_steps == 0 {
                bail!("in `simulation.n_steps`: n_steps must be at least 1");
            }
            if !(s.z_crit > 0.0) {
                bail!("in `simulation.z_crit`: z_crit must be positive");
            }
            let deviation = match s.deviation {
                None => None,
                Some(d) => {
                    if d.agent == 0 {
                        bail!("in `simulation.deviation.agent`: agents are numbered from 1");
                    }
                    if !d.shift.is_finite() {
                        bail!("in `simulation.deviation.shift`: shift must be finite");
                    }
                    Some((d.agent - 1, d.shift))
                }
            };
            Some(Simulation {
                horizon: s.horizon,
                n_steps: s.n_steps,
                n_paths: s.n_paths,
                seed: s.seed,
                z_crit: s.z_crit,
                deviation,
            })
        }
    };

    let sweep = match raw.sweep {
        None => None,
        Some(s) => {
            if s.n_list.is_empty() {
                bail!("in `sweep.n_list`: at least one population size is required");
            }
            if s.n_list.iter().any(|&n| n < 2) {
                bail!("in `sweep.n_list`: population sizes must be at least 2");
            }
            if s.repetitions == 0 {
                bail!("in `sweep.repetitions`: repetitions must be at least 1");
            }
            Some(Sweep {
                n_list: s.n_list,
                seed: s.seed,
                repetitions: s.repetitions,
            })
        }
    };

    let schedule = raw.schedule.map(schedule).transpose()?;

    let best_response = match raw.best_response {
        None => None,
        Some(b) => {
            if b.agent == 0 {
                bail!("in `best_response.agent`: agents are numbered from 1");
            }
            if b.profile.iter().any(|p| !p.is_finite()) {
                bail!("in `best_response.profile`: strategies must be finite");
            }
            let iteration = b.iteration.map(|it| Iteration {
                damping: it.damping,
                tol: it.tol,
                max_iter: it.max_iter,
            });
            Some(BestResponse {
                agent: b.agent - 1,
                profile: b.profile,
                iteration,
            })
        }
    };

    let mut tolerances = SolverTolerances::default();
    if let Some(t) = raw.tolerances {
        if let Some(d) = t.degeneracy {
            if !(d >= 0.0) {
                bail!("in `tolerances.degeneracy`: must be non-negative");
            }
            tolerances.degeneracy = d;
        }
        if let Some(i) = t.ill_conditioning {
            if !(i >= 0.0) {
                bail!("in `tolerances.ill_conditioning`: must be non-negative");
            }
            tolerances.ill_conditioning = i;
        }
    }

    Ok(RunConfig {
        population,
        distribution,
        simulation,
        sweep,
        schedule,
        best_response,
        tolerances,
    })
}

fn schedule(raw: RawSchedule) -> Result<Schedule> {
    let segments = raw
        .segments
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let a = agent(&s.agent, &format!("schedule.segments[{j}].agent"))?;
            let mut seg = HorizonSegment::homogeneous(s.start, a);
            if let Some(d) = &s.distribution {
                seg.population = distribution(d, &format!("schedule.segments[{j}].distribution"))?;
            }
            Ok(seg)
        })
        .collect::<Result<Vec<_>>>()?;
    let schedule = HorizonSchedule::new(segments).context("in `schedule.segments`")?;
    let last = *schedule.starts().last().expect("validated non-empty");
    let simulation = match raw.simulation {
        None => None,
        Some(s) => {
            if !(s.end > last && s.end.is_finite()) {
                bail!("in `schedule.simulation.end`: end must lie after the last segment start");
            }
            if s.steps_per_segment == 0 {
                bail!("in `schedule.simulation.steps_per_segment`: must be at least 1");
            }
            Some(ScheduleSimulation {
                end: s.end,
                steps_per_segment: s.steps_per_segment,
                n_paths: s.n_paths,
                seed: s.seed,
                z_crit: s.z_crit,
            })
        }
    };
    if raw.evaluate.iter().any(|p| !(p.x.is_finite() && p.t >= 0.0)) {
        bail!("in `schedule.evaluate`: points need finite x and t >= 0");
    }
    Ok(Schedule {
        schedule,
        simulation,
        evaluate: raw.evaluate.iter().map(|p| (p.x, p.t)).collect(),
    })
}
