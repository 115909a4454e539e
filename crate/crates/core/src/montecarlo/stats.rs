use rayon::prelude::*;

use super::paths::PathMatrix;
use crate::error::{Error, Result};

/// Per-point rejection threshold for the standardized drift.
pub const DEFAULT_Z_CRIT: f64 = 3.0;
/// Grids finer than this are thinned to this many equally spaced test points.
pub const MAX_TEST_POINTS: usize = 32;
pub const MIN_TEST_PATHS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestKind {
    Martingale,
    Supermartingale,
}

/// Outcome of a (super)martingale check on simulated utility paths.
///
/// The statistic at each tested grid point is the pathwise increment
/// `D = U_t - U_0`: `z = mean(D) / SE(D)`. When `U_0` is the same on every
/// path this is `(mean(U_t) - U_0) / SE(U_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleReport {
    pub kind: TestKind,
    /// Tested grid columns (column 0 is the initial value).
    pub columns: Vec<usize>,
    pub times: Vec<f64>,
    pub mean_utility: Vec<f64>,
    pub std_error: Vec<f64>,
    pub z: Vec<f64>,
    pub initial_value: f64,
    pub max_abs_z: f64,
    pub z_crit: f64,
    pub passed: bool,
}

impl MartingaleReport {
    /// `z` at the last tested point.
    pub fn terminal_z(&self) -> f64 {
        *self.z.last().expect("at least one tested point")
    }
}

/// Columns `1..=n_steps`, thinned to [`MAX_TEST_POINTS`] equally spaced
/// columns that always include the last one.
pub fn test_points(n_steps: usize) -> Vec<usize> {
    if n_steps <= MAX_TEST_POINTS {
        (1..=n_steps).collect()
    } else {
        (1..=MAX_TEST_POINTS)
            .map(|j| (j * n_steps + MAX_TEST_POINTS / 2) / MAX_TEST_POINTS)
            .collect()
    }
}

/// Sample mean and unbiased variance.
pub(crate) fn mean_var<I: Iterator<Item = f64>>(values: I) -> (f64, f64) {
    // Welford
    let (mut count, mut mean, mut m2) = (0.0, 0.0, 0.0);
    for v in values {
        count += 1.0;
        let d = v - mean;
        mean += d / count;
        m2 += d * (v - mean);
    }
    let var = if count > 1.0 { m2 / (count - 1.0) } else { 0.0 };
    (mean, var)
}

fn standardized(mean: f64, se: f64) -> f64 {
    if se > 0.0 {
        mean / se
    } else if mean == 0.0 {
        0.0
    } else {
        mean.signum() * f64::INFINITY
    }
}

fn run(paths: &PathMatrix, times: &[f64], z_crit: f64, kind: TestKind) -> Result<MartingaleReport> {
    if paths.n_paths() < MIN_TEST_PATHS {
        return Err(Error::Precondition(format!(
            "martingale tests need at least {MIN_TEST_PATHS} paths, got {}",
            paths.n_paths()
        )));
    }
    if times.len() != paths.n_points() {
        return Err(Error::DimensionMismatch {
            expected: paths.n_points(),
            found: times.len(),
        });
    }
    let columns = test_points(paths.n_points() - 1);
    let np = paths.n_paths() as f64;
    let (initial_value, _) = mean_var(paths.column(0));
    let stats: Vec<(f64, f64)> = columns
        .par_iter()
        .map(|&k| {
            let (mean, var) = mean_var((0..paths.n_paths()).map(|p| paths.get(p, k) - paths.get(p, 0)));
            (mean, (var / np).sqrt())
        })
        .collect();

    let z: Vec<f64> = stats.iter().map(|&(m, se)| standardized(m, se)).collect();
    let passed = stats.iter().all(|&(m, se)| match kind {
        TestKind::Martingale => m.abs() <= z_crit * se,
        TestKind::Supermartingale => m <= z_crit * se,
    });
    Ok(MartingaleReport {
        kind,
        times: columns.iter().map(|&k| times[k]).collect(),
        columns,
        mean_utility: stats.iter().map(|&(m, _)| initial_value + m).collect(),
        std_error: stats.iter().map(|&(_, se)| se).collect(),
        max_abs_z: z.iter().fold(0.0, |a: f64, v| a.max(v.abs())),
        z,
        initial_value,
        z_crit,
        passed,
    })
}

/// Passes iff `|mean(U_t) - U_0| <= z_crit SE` at every tested point.
pub fn martingale_test(paths: &PathMatrix, times: &[f64], z_crit: f64) -> Result<MartingaleReport> {
    run(paths, times, z_crit, TestKind::Martingale)
}

/// Passes iff `mean(U_t) <= U_0 + z_crit SE` at every tested point.
pub fn supermartingale_test(
    paths: &PathMatrix,
    times: &[f64],
    z_crit: f64,
) -> Result<MartingaleReport> {
    run(paths, times, z_crit, TestKind::Supermartingale)
}
