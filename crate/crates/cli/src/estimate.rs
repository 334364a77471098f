//! Rough runtime model used to gate paper-scale runs.

use qdimer::lindblad::{steps_per_period, Generator, IntegratorConfig};
use qdimer::model::{DimerOperators, ModelParams};

use crate::error::Result;

/// Seconds per density-matrix element per RK4 step.
const LINDBLAD_ELEMENT: f64 = 1.6e-7;
/// Seconds per wave-function component per RK4 step.
const TRAJECTORY_ELEMENT: f64 = 4.5e-8;
/// Seconds per mean-field RK4 step.
const MEANFIELD_STEP: f64 = 2e-7;
/// Seconds per cubed dimension of a dense complex eigenproblem.
const EIGEN_CUBE: f64 = 8e-9;

/// Runs estimated above this many seconds need `--large`.
pub const LARGE_SECONDS: f64 = 3600.0;
/// Lindblad runs at or above this `N` need `--large`.
pub const LARGE_LINDBLAD_N: usize = 500;
/// Trajectory relaxation at or above this many periods needs `--large`.
pub const LARGE_RELAX_PERIODS: usize = 2000;

/// Estimated cost and the reasons a run counts as paper-scale.
#[derive(Debug, Clone, Default)]
pub struct Estimate {
    /// Serial seconds.
    pub seconds: f64,
    pub parallel_fraction: f64,
    pub paper_scale: Vec<String>,
}

impl Estimate {
    pub fn add(&mut self, seconds: f64, parallel: bool) {
        let par = self.parallel_fraction * self.seconds + if parallel { seconds } else { 0.0 };
        self.seconds += seconds;
        self.parallel_fraction = if self.seconds > 0.0 { par / self.seconds } else { 0.0 };
    }

    pub fn wall_seconds(&self, workers: usize) -> f64 {
        let w = workers.max(1) as f64;
        self.seconds * (1.0 - self.parallel_fraction) + self.seconds * self.parallel_fraction / w
    }

    pub fn flag(&mut self, reason: impl Into<String>) {
        self.paper_scale.push(reason.into());
    }
}

fn operators(p: &ModelParams<f64>) -> Result<DimerOperators<f64>> {
    Ok(DimerOperators::build(p.particles)?)
}

pub fn lindblad(p: &ModelParams<f64>, integ: &IntegratorConfig<f64>, periods: usize) -> Result<f64> {
    let ops = operators(p)?;
    let steps = steps_per_period(p, &ops, integ, Generator::Lindblad)? as f64;
    let d = ops.dim as f64;
    Ok(steps * periods as f64 * d * d * LINDBLAD_ELEMENT)
}

pub fn trajectories(p: &ModelParams<f64>, integ: &IntegratorConfig<f64>, count: usize, periods: usize) -> Result<f64> {
    let ops = operators(p)?;
    let steps = steps_per_period(p, &ops, integ, Generator::Trajectory)? as f64;
    Ok(steps * periods as f64 * count as f64 * ops.dim as f64 * TRAJECTORY_ELEMENT)
}

pub fn floquet(p: &ModelParams<f64>, integ: &IntegratorConfig<f64>) -> Result<f64> {
    let d = (p.particles + 1) as f64;
    let columns = d * (d + 1.0) / 2.0;
    Ok(columns * lindblad(p, integ, 1)? + EIGEN_CUBE * (d * d).powi(3))
}

pub fn meanfield(p: &ModelParams<f64>, integ: &IntegratorConfig<f64>, points: usize, periods: usize) -> Result<f64> {
    let steps = integ.requested_steps(p.period)? as f64;
    Ok(steps * periods as f64 * points as f64 * MEANFIELD_STEP)
}
