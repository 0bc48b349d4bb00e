//! Resolution checks: the same initial state run at two grid sizes or two
//! step sizes, compared pointwise on the coarse grid.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{Integrator, SimState};
use crate::error::{KseError, Result};
use crate::spectral::{GridSpec, PhysicalField};
use crate::tasks::random_initial_state;

pub const GRID_TOLERANCE: f64 = 1e-6;
pub const DT_MAX_TOLERANCE: f64 = 1e-2;
pub const DT_MEDIAN_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorStats {
    pub max: f64,
    pub median: f64,
}

/// Pointwise |a − b| where `b` lives on a grid `stride` times finer.
pub fn pointwise_error(a: &PhysicalField, b: &PhysicalField, stride: usize) -> Result<ErrorStats> {
    let n = a.grid().n;
    if b.grid().n != n * stride {
        return Err(KseError::GridMismatch(format!(
            "{} is not {stride}×{n}",
            b.grid().n
        )));
    }
    let mut e: Vec<f64> = (0..n * n)
        .map(|k| (a.at(k / n, k % n) - b.at(k / n * stride, k % n * stride)).abs())
        .collect();
    e.sort_by(f64::total_cmp);
    Ok(ErrorStats {
        max: e[e.len() - 1],
        median: e[e.len() / 2],
    })
}

/// The relaxed starting state both checks use.
pub fn check_initial_state(
    grid: GridSpec,
    dt: f64,
    relax_steps: usize,
    seed: u64,
) -> Result<SimState> {
    let integ = Integrator::new(grid, dt)?;
    random_initial_state(&integ, relax_steps, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// `steps` steps on `grid` against the same run on a grid twice as fine.
pub fn grid_independence(start: &SimState, dt: f64, steps: usize) -> Result<ErrorStats> {
    let grid = start.grid();
    let coarse = Integrator::new(grid, dt)?;
    let fine = Integrator::new(GridSpec::new(2 * grid.n, grid.half_length)?, dt)?;
    let a = coarse.advance(start, steps)?;
    let b = fine.advance(&SimState::new(start.spec.resample(2 * grid.n)?), steps)?;
    pointwise_error(&coarse.to_physical(&a.spec), &fine.to_physical(&b.spec), 2)
}

/// A `horizon`-long run at `dt` against the same run at `dt / 2`.
pub fn dt_independence(start: &SimState, dt: f64, horizon: f64) -> Result<ErrorStats> {
    let coarse = Integrator::new(start.grid(), dt)?;
    let fine = Integrator::new(start.grid(), dt / 2.0)?;
    let a = coarse.flow_map(start, horizon)?;
    let b = fine.flow_map(start, horizon)?;
    pointwise_error(&coarse.to_physical(&a.spec), &fine.to_physical(&b.spec), 1)
}

/// Smooth multi-mode field of unit amplitude used for the order check.
pub fn smooth_test_state(grid: GridSpec) -> Result<SimState> {
    let k = std::f64::consts::PI / grid.half_length;
    let field = PhysicalField::from_fn(grid, |x, y| {
        (k * x).sin() * (k * y).cos() + 0.5 * (2.0 * k * x + k * y).cos() + 0.3 * (3.0 * k * y).sin()
    });
    let mut spec = crate::spectral::dft2(&field)?;
    spec.zero_mean();
    Ok(SimState::new(spec))
}

pub const ORDER_DTS: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];

/// Least-squares slope of log error against log dt at time `horizon`,
/// measured against a run with an eighth of the smallest step.
pub fn temporal_order(start: &SimState, horizon: f64, dts: &[f64]) -> Result<(f64, Vec<f64>)> {
    let finest = dts.iter().copied().fold(f64::INFINITY, f64::min) / 8.0;
    let reference = Integrator::new(start.grid(), finest)?.flow_map(start, horizon)?;
    let errors = dts
        .iter()
        .map(|&dt| {
            let end = Integrator::new(start.grid(), dt)?.flow_map(start, horizon)?;
            crate::spectral::spectral_distance(&end.spec, &reference.spec)
        })
        .collect::<Result<Vec<f64>>>()?;
    let xs: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let m = dts.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    Ok((slope, errors))
}
