//! Monte-Carlo reference averages over the unresolved initial data.
//!
//! The measured system is deterministic once its full initial state is known;
//! the ensemble comes from redrawing the unresolved initial coordinates. Each
//! member `i` gets its own RNG stream: `ChaCha8Rng::seed_from_u64(seed)` with
//! `set_stream(i)`, drawing the unresolved entries in order. That recipe is
//! part of the contract, so member trajectories can be reproduced one by one
//! outside this module.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{integrate, ControlLaw, InitDistribution, SystemSpec, TrajectoryGrid};
use crate::error::OpcError;

/// Which pipeline produced an averaged trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    /// Integrated members of the measured system.
    Mc,
    /// Generated members of a fitted model.
    Opc,
}

/// A resolved-coordinate ensemble mean on a sampling grid, column per sample.
#[derive(Clone, Debug)]
pub struct EnsembleAverage {
    mean: DMatrix<f64>,
    count: usize,
    master_seed: u64,
    grid: TrajectoryGrid,
    source: Source,
}

impl EnsembleAverage {
    pub(crate) fn new(
        mean: DMatrix<f64>,
        count: usize,
        master_seed: u64,
        grid: TrajectoryGrid,
        source: Source,
    ) -> Self {
        debug_assert_eq!(mean.ncols(), grid.steps());
        Self {
            mean,
            count,
            master_seed,
            grid,
            source,
        }
    }

    /// Mean resolved trajectory, `d_resolved x steps`.
    pub fn mean(&self) -> &DMatrix<f64> {
        &self.mean
    }

    /// Number of members averaged.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn grid(&self) -> &TrajectoryGrid {
        &self.grid
    }

    pub fn source(&self) -> Source {
        self.source
    }

    /// Keeps every `stride`-th sample of the mean, starting from the first,
    /// on the grid with spacing `stride * dt`. Used to bring a finely
    /// integrated reference onto the coarser sampling grid of a model.
    pub fn subsample(&self, stride: usize) -> Result<EnsembleAverage, OpcError> {
        if stride == 0 {
            return Err(OpcError::InvalidParameter(
                "subsampling stride must be at least 1".into(),
            ));
        }
        let kept = (self.mean.ncols() - 1) / stride + 1;
        let grid = TrajectoryGrid::new(self.grid.dt() * stride as f64, kept)?;
        let mut mean = DMatrix::zeros(self.mean.nrows(), kept);
        for k in 0..kept {
            mean.set_column(k, &self.mean.column(k * stride));
        }
        Ok(EnsembleAverage {
            mean,
            count: self.count,
            master_seed: self.master_seed,
            grid,
            source: self.source,
        })
    }
}

/// Integrates `count` members of the measured system, each from a fresh draw
/// of the unresolved initial data, and averages their resolved rows.
pub fn mc_projection(
    sys: &SystemSpec,
    ctrl: &ControlLaw,
    init: &InitDistribution,
    grid: &TrajectoryGrid,
    count: usize,
    seed: u64,
) -> Result<EnsembleAverage, OpcError> {
    if count == 0 {
        return Err(OpcError::InvalidParameter(
            "ensemble needs at least one member".into(),
        ));
    }
    let d_r = sys.d_resolved();
    let mut sum = DMatrix::<f64>::zeros(d_r, grid.steps());
    for i in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let x0 = init.sample(&mut rng);
        let traj = integrate(sys, ctrl, &x0, grid).map_err(|source| OpcError::EnsembleMember {
            member: i,
            source: Box::new(source),
        })?;
        sum += traj.states().rows(0, d_r);
    }
    let mean = sum / count as f64;
    Ok(EnsembleAverage::new(mean, count, seed, grid.clone(), Source::Mc))
}

/// Largest absolute entry difference between two averages on the same grid.
pub fn resample_check(a: &EnsembleAverage, b: &EnsembleAverage) -> Result<f64, OpcError> {
    if a.grid() != b.grid() {
        return Err(OpcError::ShapeMismatch(format!(
            "grids differ: dt {} x {} samples vs dt {} x {} samples",
            a.grid().dt(),
            a.grid().steps(),
            b.grid().dt(),
            b.grid().steps()
        )));
    }
    if a.mean().nrows() != b.mean().nrows() {
        return Err(OpcError::ShapeMismatch(format!(
            "resolved dimensions differ: {} vs {}",
            a.mean().nrows(),
            b.mean().nrows()
        )));
    }
    Ok((a.mean() - b.mean())
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs())))
}
