use std::fmt;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use fmfg_core::convergence::convergence_sweep;
use fmfg_core::market::CaraForwardUtility;
use fmfg_core::mfg::mf_equilibrium_with;
use fmfg_core::montecarlo::{
    martingale_test, relative_metric_paths, simulate_wealth, utility_paths, wealth_summary,
    SimGrid,
};
use fmfg_core::nplayer::{
    best_response, best_response_iteration, equilibrium_n_with, lambda_from_others,
    nash_residual, without,
};
use fmfg_core::rolling::{roll_schedule, simulate_schedule};
use fmfg_core::{PopulationSpec, TypeDistribution};
use log::info;

use crate::config::RunConfig;
use crate::format::{flag, g17};

/// A `verify` run found residuals above tolerance.
#[derive(Debug)]
pub struct VerificationFailed(pub String);

impl fmt::Display for VerificationFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "verification failed: {}", self.0)
    }
}

impl std::error::Error for VerificationFailed {}

/// Largest Nash residual accepted by `verify`, relative to `1 + max |pi|`.
pub const VERIFY_TOLERANCE: f64 = 1e-10;

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

enum Json {
    Num(f64),
    Int(usize),
    Bool(bool),
}

fn write_json(path: &Path, fields: &[(&str, Json)]) -> Result<()> {
    let body: Vec<String> = fields
        .iter()
        .map(|(k, v)| {
            let v = match v {
                Json::Num(x) if x.is_finite() => g17(*x),
                Json::Num(_) => "null".into(),
                Json::Int(n) => n.to_string(),
                Json::Bool(b) => flag(*b).into(),
            };
            format!("  \"{k}\": {v}")
        })
        .collect();
    fs::write(path, format!("{{\n{}\n}}\n", body.join(",\n")))
        .with_context(|| format!("cannot write {}", path.display()))
}

fn need<'a, T>(section: &'a Option<T>, name: &str, command: &str) -> Result<&'a T> {
    section
        .as_ref()
        .ok_or_else(|| anyhow!("`{command}` needs a `{name}` section in the config"))
}

pub fn solve_n(cfg: &RunConfig, out: &Path) -> Result<()> {
    let pop = need(&cfg.population, "population", "solve-n")?;
    let eq = equilibrium_n_with(pop, &cfg.tolerances)?;
    let rows: Vec<Vec<String>> = eq
        .strategies
        .iter()
        .zip(&eq.lambdas)
        .enumerate()
        .map(|(i, (p, l))| vec![(i + 1).to_string(), g17(*p), g17(*l)])
        .collect();
    write_csv(&out.join("equilibrium.csv"), &["i", "pi_star", "lambda"], &rows)?;
    let a = eq.aggregates;
    write_json(
        &out.join("aggregates.json"),
        &[
            ("n", Json::Int(pop.len())),
            ("phi_sigma", Json::Num(a.phi_sigma)),
            ("psi_sigma", Json::Num(a.psi_sigma)),
            ("phi_mu", Json::Num(a.phi_mu)),
            ("psi_mu", Json::Num(a.psi_mu)),
            ("sigma_pi_bar", Json::Num(eq.averages.sigma_pi)),
            ("mu_pi_bar", Json::Num(eq.averages.mu_pi)),
            ("max_nash_residual", Json::Num(eq.max_nash_residual)),
            ("ill_conditioned", Json::Bool(eq.ill_conditioned)),
        ],
    )?;
    println!(
        "solved {} agents, max Nash residual {}",
        pop.len(),
        g17(eq.max_nash_residual)
    );
    Ok(())
}

pub fn solve_mfg(cfg: &RunConfig, out: &Path) -> Result<()> {
    let dist = match (&cfg.distribution, &cfg.population) {
        (Some(d), _) => d.clone(),
        (None, Some(p)) => TypeDistribution::empirical(p),
        (None, None) => bail!("`solve-mfg` needs a `distribution` or `population` section"),
    };
    let eq = mf_equilibrium_with(&dist, &cfg.tolerances)?;
    let rows: Vec<Vec<String>> = dist
        .atoms()
        .iter()
        .enumerate()
        .map(|(k, (_, w))| {
            vec![
                (k + 1).to_string(),
                g17(*w),
                g17(eq.strategies[k]),
                g17(eq.lambdas[k]),
            ]
        })
        .collect();
    write_csv(
        &out.join("mfg_equilibrium.csv"),
        &["atom", "weight", "pi_star", "lambda"],
        &rows,
    )?;
    let a = eq.aggregates;
    write_json(
        &out.join("aggregates.json"),
        &[
            ("atoms", Json::Int(dist.len())),
            ("phi_sigma", Json::Num(a.phi_sigma)),
            ("psi_sigma", Json::Num(a.psi_sigma)),
            ("phi_mu", Json::Num(a.phi_mu)),
            ("psi_mu", Json::Num(a.psi_mu)),
            ("sigma_pi_bar", Json::Num(eq.sigma_pi_bar)),
            ("mu_pi_bar", Json::Num(eq.mu_pi_bar)),
            ("xi_bar", Json::Num(eq.xi_bar)),
            ("ill_conditioned", Json::Bool(eq.ill_conditioned)),
        ],
    )?;
    println!(
        "solved mean-field game over {} atoms, E[sigma pi] = {}",
        dist.len(),
        g17(eq.sigma_pi_bar)
    );
    Ok(())
}

pub fn best_response_cmd(cfg: &RunConfig, out: &Path) -> Result<()> {
    let pop = need(&cfg.population, "population", "best-response")?;
    let br = need(&cfg.best_response, "best_response", "best-response")?;
    if br.profile.len() != pop.len() {
        bail!(
            "in `best_response.profile`: expected {} strategies, found {}",
            pop.len(),
            br.profile.len()
        );
    }
    if br.agent >= pop.len() {
        bail!("in `best_response.agent`: only {} agents", pop.len());
    }
    let others = without(&br.profile, br.agent);
    let value = best_response(br.agent, &others, pop)?;
    let lambda = lambda_from_others(br.agent, &others, pop)?;
    write_csv(
        &out.join("best_response.csv"),
        &["i", "best_response", "lambda"],
        &[vec![(br.agent + 1).to_string(), g17(value), g17(lambda)]],
    )?;
    println!("best response of agent {}: {}", br.agent + 1, g17(value));

    if let Some(it) = &br.iteration {
        let run = best_response_iteration(pop, &br.profile, it.damping, it.tol, it.max_iter)?;
        let log: Vec<Vec<String>> = run
            .log
            .iter()
            .enumerate()
            .map(|(k, s)| vec![k.to_string(), g17(*s)])
            .collect();
        write_csv(
            &out.join("best_response_iteration.csv"),
            &["iteration", "max_step"],
            &log,
        )?;
        let profile: Vec<Vec<String>> = run
            .strategies
            .iter()
            .enumerate()
            .map(|(i, p)| vec![(i + 1).to_string(), g17(*p)])
            .collect();
        write_csv(&out.join("best_response_profile.csv"), &["i", "pi"], &profile)?;
        println!("best-response iteration converged after {} updates", run.iterations);
    }
    Ok(())
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let pop = need(&cfg.population, "population", "simulate")?;
    let sim = need(&cfg.simulation, "simulation", "simulate")?;
    let eq = equilibrium_n_with(pop, &cfg.tolerances)?;
    let mut strategies = eq.strategies.clone();
    if let Some((i, shift)) = sim.deviation {
        if i >= pop.len() {
            bail!("in `simulation.deviation.agent`: only {} agents", pop.len());
        }
        strategies[i] += shift;
    }
    let grid = SimGrid::new(sim.horizon, sim.n_steps)?;
    let times = grid.times();
    let bundle = simulate_wealth(pop, &strategies, grid, sim.n_paths, sim.seed)?;

    let mut rows = Vec::new();
    for i in 0..pop.len() {
        let lambda = lambda_from_others(i, &without(&strategies, i), pop)?;
        let u = CaraForwardUtility::new(pop.agent(i).delta(), lambda)?;
        let paths = utility_paths(&relative_metric_paths(&bundle, pop, i)?, &u, &times);
        let rep = martingale_test(&paths, &times, sim.z_crit)?;
        let mut sup = true;
        for k in 0..rep.times.len() {
            let z = rep.z[k];
            sup &= z <= rep.z_crit;
            rows.push(vec![
                (i + 1).to_string(),
                g17(rep.times[k]),
                g17(rep.mean_utility[k]),
                g17(rep.std_error[k]),
                g17(z),
                flag(z.abs() <= rep.z_crit).into(),
                flag(z <= rep.z_crit).into(),
            ]);
        }
        println!(
            "agent {}: martingale {}, supermartingale {}, max |z| {}",
            i + 1,
            verdict(rep.passed),
            verdict(sup),
            g17(rep.max_abs_z)
        );
    }
    write_csv(
        &out.join("martingale.csv"),
        &[
            "agent",
            "t",
            "mean_utility",
            "std_error",
            "z",
            "martingale",
            "supermartingale",
        ],
        &rows,
    )?;

    let n = pop.len();
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("mean_{i}")));
    header.extend((1..=n).map(|i| format!("se_{i}")));
    let summary: Vec<Vec<String>> = wealth_summary(&bundle)
        .into_iter()
        .map(|r| {
            let mut row = vec![g17(r.t)];
            row.extend(r.means.iter().map(|x| g17(*x)));
            row.extend(r.std_errors.iter().map(|x| g17(*x)));
            row
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(&out.join("summary.csv"), &header, &summary)?;
    Ok(())
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn converge(cfg: &RunConfig, out: &Path) -> Result<()> {
    let dist = need(&cfg.distribution, "distribution", "converge")?;
    let sweep = need(&cfg.sweep, "sweep", "converge")?;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for r in 0..sweep.repetitions {
        let seed = sweep.seed.wrapping_add(r as u64);
        let rep = convergence_sweep(dist, &sweep.n_list, seed)?;
        for row in &rep.rows {
            rows.push(vec![
                seed.to_string(),
                row.n.to_string(),
                g17(row.strategy_gap),
                g17(row.phi_sigma_gap),
                g17(row.psi_sigma_gap),
                g17(row.lambda_gap),
                g17(row.idiosyncratic_term),
                flag(row.degenerate).into(),
            ]);
        }
        let (first, last) = (&rep.rows[0], &rep.rows[rep.rows.len() - 1]);
        summary.push(vec![
            seed.to_string(),
            g17(rep.idiosyncratic_constant()),
            rep.rate_constant().map_or_else(|| "nan".into(), g17),
            flag(last.strategy_gap < first.strategy_gap).into(),
        ]);
        info!("seed {seed}: {} rows", rep.rows.len());
    }
    write_csv(
        &out.join("convergence.csv"),
        &[
            "seed",
            "n",
            "strategy_gap",
            "phi_sigma_gap",
            "psi_sigma_gap",
            "lambda_gap",
            "idiosyncratic_term",
            "degenerate",
        ],
        &rows,
    )?;
    write_csv(
        &out.join("convergence_summary.csv"),
        &["seed", "k_idiosyncratic", "c_rate", "gap_decreased"],
        &summary,
    )?;
    let improved = summary.iter().filter(|r| r[3] == "true").count();
    println!(
        "strategy gap decreased from smallest to largest n in {improved} of {} seeds",
        summary.len()
    );
    Ok(())
}

pub fn roll(cfg: &RunConfig, out: &Path) -> Result<()> {
    let sched = need(&cfg.schedule, "schedule", "roll")?;
    let rolled = roll_schedule(&sched.schedule)?;
    let rows: Vec<Vec<String>> = (0..rolled.n_segments())
        .map(|j| {
            vec![
                g17(rolled.starts()[j]),
                j.to_string(),
                g17(rolled.lambdas()[j]),
                g17(rolled.offsets()[j]),
            ]
        })
        .collect();
    write_csv(
        &out.join("roll.csv"),
        &["t", "segment", "lambda", "log_offset"],
        &rows,
    )?;
    if !sched.evaluate.is_empty() {
        let rows: Vec<Vec<String>> = sched
            .evaluate
            .iter()
            .map(|&(x, t)| {
                vec![
                    g17(x),
                    g17(t),
                    rolled.segment_at(t).to_string(),
                    g17(rolled.product_log_factor(t)),
                    g17(rolled.eval_rolled(x, t)),
                ]
            })
            .collect();
        write_csv(
            &out.join("rolled_utility.csv"),
            &["x", "t", "segment", "log_factor", "utility"],
            &rows,
        )?;
    }
    if let Some(sim) = &sched.simulation {
        let reports = simulate_schedule(
            &sched.schedule,
            sim.end,
            sim.steps_per_segment,
            sim.n_paths,
            sim.seed,
            sim.z_crit,
        )?;
        let mut rows = Vec::new();
        for (j, rep) in reports.iter().enumerate() {
            for k in 0..rep.times.len() {
                rows.push(vec![
                    j.to_string(),
                    g17(rep.times[k]),
                    g17(rep.mean_utility[k]),
                    g17(rep.std_error[k]),
                    g17(rep.z[k]),
                    flag(rep.z[k].abs() <= rep.z_crit).into(),
                ]);
            }
            println!(
                "segment {j}: martingale {}, max |z| {}",
                verdict(rep.passed),
                g17(rep.max_abs_z)
            );
        }
        write_csv(
            &out.join("roll_martingale.csv"),
            &["segment", "t", "mean_utility", "std_error", "z", "martingale"],
            &rows,
        )?;
    }
    println!("rolled {} segments", rolled.n_segments());
    Ok(())
}

/// Re-reads `equilibrium.csv` from `out` and checks its Nash residuals.
pub fn verify(cfg: &RunConfig, out: &Path) -> Result<()> {
    let pop = need(&cfg.population, "population", "verify")?;
    let path = out.join("equilibrium.csv");
    let strategies = read_strategies(&path, pop)?;
    let residuals = nash_residual(&strategies, pop)?;
    let scale = 1.0 + strategies.iter().fold(0.0f64, |m, p| m.max(p.abs()));
    let worst = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let rows: Vec<Vec<String>> = strategies
        .iter()
        .zip(&residuals)
        .enumerate()
        .map(|(i, (p, r))| vec![(i + 1).to_string(), g17(*p), g17(*r)])
        .collect();
    write_csv(&out.join("verify.csv"), &["i", "pi_star", "residual"], &rows)?;
    if !(worst <= VERIFY_TOLERANCE * scale) {
        return Err(VerificationFailed(format!(
            "max Nash residual {} exceeds {}",
            g17(worst),
            g17(VERIFY_TOLERANCE * scale)
        ))
        .into());
    }
    println!("verified {} strategies, max Nash residual {}", strategies.len(), g17(worst));
    Ok(())
}

fn read_strategies(path: &Path, pop: &PopulationSpec) -> Result<Vec<f64>> {
    let mut reader =
        csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("{} has no `{name}` column", path.display()))
    };
    let (i_col, pi_col) = (col("i")?, col("pi_star")?);
    let mut strategies = vec![f64::NAN; pop.len()];
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let i: usize = record[i_col]
            .parse()
            .with_context(|| format!("{} row {}: bad index", path.display(), line + 1))?;
        let pi: f64 = record[pi_col]
            .parse()
            .with_context(|| format!("{} row {}: bad pi_star", path.display(), line + 1))?;
        if i == 0 || i > pop.len() {
            bail!("{} row {}: agent {i} out of range", path.display(), line + 1);
        }
        strategies[i - 1] = pi;
    }
    if let Some(i) = strategies.iter().position(|p| p.is_nan()) {
        bail!("{}: no strategy for agent {}", path.display(), i + 1);
    }
    Ok(strategies)
}
