//! Independent oracles for the integration tests.
//!
//! Nothing here calls the crate's solvers: equilibria come from a dense
//! linear solve, slopes and best responses from maximizing the certainty
//! drift of the relative wealth directly.
#![allow(dead_code)]

use fmfg_core::{AgentType, PopulationSpec, TypeDistribution};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random admissible type; `sigma` is kept away from zero half the time so
/// the common-noise coupling is exercised.
pub fn random_agent(rng: &mut ChaCha8Rng) -> AgentType {
    let nu = if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..1.5) };
    let sigma = if nu > 0.0 && rng.random_bool(0.1) {
        0.0
    } else {
        rng.random_range(0.05..1.5)
    };
    AgentType::new(
        rng.random_range(-2.0..2.0),
        rng.random_range(0.2..3.0),
        rng.random_range(0.0..=1.0),
        rng.random_range(0.05..2.0),
        nu,
        sigma,
    )
    .unwrap()
}

pub fn random_population(rng: &mut ChaCha8Rng, n: usize) -> PopulationSpec {
    PopulationSpec::new((0..n).map(|_| random_agent(rng)).collect()).unwrap()
}

pub fn random_distribution(rng: &mut ChaCha8Rng, atoms: usize) -> TypeDistribution {
    let raw: Vec<f64> = (0..atoms).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let head: f64 = weights[..atoms - 1].iter().sum();
    weights[atoms - 1] = 1.0 - head;
    TypeDistribution::new((0..atoms).map(|k| (random_agent(rng), weights[k])).collect()).unwrap()
}

/// `psi_sigma_n` recomputed from its definition.
pub fn psi_sigma_n(pop: &PopulationSpec) -> f64 {
    let n = pop.len() as f64;
    pop.agents()
        .iter()
        .map(|a| {
            let d = a.nu().powi(2) + a.sigma().powi(2) * (1.0 + a.theta() / (n - 1.0));
            a.theta() * a.sigma().powi(2) / d
        })
        .sum::<f64>()
        / (n - 1.0)
}

/// Gaussian elimination with partial pivoting.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        let (top, rest) = a.split_at_mut(col + 1);
        let pivot_row = &top[col];
        for (k, row) in rest.iter_mut().enumerate() {
            let f = row[col] / pivot_row[col];
            for (x, p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= f * p;
            }
            b[col + 1 + k] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Equilibrium as the solution of
/// `pi_i (nu_i^2 + sigma_i^2) - theta_i sigma_i/(n-1) sum_{k != i} sigma_k pi_k = mu_i delta_i`.
pub fn nash_by_linear_solve(pop: &PopulationSpec) -> Vec<f64> {
    let n = pop.len();
    let ag = pop.agents();
    let m = (0..n)
        .map(|i| {
            (0..n)
                .map(|k| {
                    if k == i {
                        ag[i].nu().powi(2) + ag[i].sigma().powi(2)
                    } else {
                        -ag[i].theta() * ag[i].sigma() * ag[k].sigma() / (n as f64 - 1.0)
                    }
                })
                .collect()
        })
        .collect();
    let rhs = ag.iter().map(|a| a.mu() * a.delta()).collect();
    solve_dense(m, rhs)
}

/// Sums over the other agents of `sigma pi`, `mu pi`, `(nu pi)^2`.
pub fn others_sums(pop: &PopulationSpec, i: usize, profile: &[f64]) -> (f64, f64, f64) {
    let mut s = (0.0, 0.0, 0.0);
    for (k, (a, p)) in pop.agents().iter().zip(profile).enumerate() {
        if k != i {
            s.0 += a.sigma() * p;
            s.1 += a.mu() * p;
            s.2 += (a.nu() * p).powi(2);
        }
    }
    s
}

/// Quadratic variation rate of `Xhat^i` when agent `i` plays `pi`.
pub fn relative_quadratic_variation(pop: &PopulationSpec, i: usize, profile: &[f64], pi: f64) -> f64 {
    let a = pop.agent(i);
    let m = pop.len() as f64 - 1.0;
    let (s, _, v) = others_sums(pop, i, profile);
    (pi * a.nu()).powi(2) + a.theta().powi(2) * v / (m * m) + (pi * a.sigma() - a.theta() * s / m).powi(2)
}

/// `h(pi) = drift(Xhat)/delta - QV(Xhat)/(2 delta^2)`; `U = -exp(-x/delta + lambda t)`
/// has drift `U (lambda - h(pi))` along `Xhat`.
pub fn certainty_rate(pop: &PopulationSpec, i: usize, profile: &[f64], pi: f64) -> f64 {
    let a = pop.agent(i);
    let m = pop.len() as f64 - 1.0;
    let (_, mu_sum, _) = others_sums(pop, i, profile);
    let drift = pi * a.mu() - a.theta() * mu_sum / m;
    drift / a.delta() - relative_quadratic_variation(pop, i, profile, pi) / (2.0 * a.delta().powi(2))
}

/// Vertex of the concave quadratic through three samples of `f`.
pub fn quadratic_max<F: Fn(f64) -> f64>(f: F, scale: f64) -> (f64, f64) {
    let (l, c, r) = (f(-scale), f(0.0), f(scale));
    let curv = (l - 2.0 * c + r) / (2.0 * scale * scale);
    let slope = (r - l) / (2.0 * scale);
    let arg = -slope / (2.0 * curv);
    (arg, c + slope * arg + curv * arg * arg)
}

/// `(best response, lambda)` of agent `i` against `profile`.
pub fn best_response_and_lambda(pop: &PopulationSpec, i: usize, profile: &[f64]) -> (f64, f64) {
    quadratic_max(|p| certainty_rate(pop, i, profile, p), 1.0)
}

/// The same optimization against a mean-field population with
/// `E[sigma pi] = s` and `E[mu pi] = m`.
pub fn mf_best_response_and_lambda(zeta: &AgentType, s: f64, m: f64) -> (f64, f64) {
    let h = |p: f64| {
        let qv = (p * zeta.nu()).powi(2) + (p * zeta.sigma() - zeta.theta() * s).powi(2);
        (p * zeta.mu() - zeta.theta() * m) / zeta.delta() - qv / (2.0 * zeta.delta().powi(2))
    };
    quadratic_max(h, 1.0)
}

/// Drift of `U(Xhat^i_t, t)` assembled term by term from Ito's formula:
/// `U_t + U_x drift(Xhat) + U_xx/2 QV(Xhat)`.
pub fn brute_force_drift(
    pop: &PopulationSpec,
    i: usize,
    profile: &[f64],
    delta: f64,
    lambda: f64,
    x: f64,
    t: f64,
) -> f64 {
    let e = (-x / delta + lambda * t).exp();
    let (u, ux, uxx) = (-e, e / delta, -e / (delta * delta));
    let a = pop.agent(i);
    let m = pop.len() as f64 - 1.0;
    let (_, mu_sum, _) = others_sums(pop, i, profile);
    let drift = profile[i] * a.mu() - a.theta() * mu_sum / m;
    lambda * u + ux * drift + 0.5 * uxx * relative_quadratic_variation(pop, i, profile, profile[i])
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
