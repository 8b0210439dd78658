//! Averaged trajectory generation from a fitted model.
//!
//! A generated member with memory seed `n` evolves as
//!
//! ```text
//! x_{k+1} = A x_k - dt^2 (A - I)^-1 (T^k - E^k) n + forcing_k,
//! ```
//!
//! with `T` and `E` from [`crate::memory`], the same convolution the fit
//! attributes to the unresolved initial data. Members differ only in `n`, so
//! all of them advance together as columns of one state matrix and the powers
//! `T^k n_i`, `E^k n_i` are carried along by two matrix-matrix products per
//! step; nothing is integrated.
//!
//! Seeds follow the ensemble stream recipe: member `i` draws from
//! `ChaCha8Rng::seed_from_u64(seed)` on `set_stream(i)`. Because the member
//! dynamics are affine in `n` and the draws have zero mean, the exact
//! expectation of the generated family is the memory-free rollout; that limit
//! is available directly as [`generate_averaged_analytic`].

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dynamics::TrajectoryGrid;
use crate::ensemble::{EnsembleAverage, Source};
use crate::error::OpcError;
use crate::fit::OpcModel;
use crate::memory::{assert_invertible, memory_operators};

fn check_generation_args(
    model: &OpcModel,
    x0: &DVector<f64>,
    controls: &DMatrix<f64>,
    grid: &TrajectoryGrid,
) -> Result<(), OpcError> {
    let d = model.dim();
    if x0.len() != d {
        return Err(OpcError::ShapeMismatch(format!(
            "initial state has length {}, model is {d}-dimensional",
            x0.len()
        )));
    }
    let rel = ((grid.dt() - model.dt()) / model.dt()).abs();
    if rel > 1e-12 {
        return Err(OpcError::InvalidParameter(format!(
            "grid spacing {} does not match the model step {}",
            grid.dt(),
            model.dt()
        )));
    }
    let expected_rows = match model.b() {
        Some(b) => b.ncols(),
        None => d,
    };
    if grid.steps() > 1
        && (controls.nrows() != expected_rows || controls.ncols() < grid.steps() - 1)
    {
        return Err(OpcError::ShapeMismatch(format!(
            "control record is {}x{}, need {expected_rows}x{}",
            controls.nrows(),
            controls.ncols(),
            grid.steps() - 1
        )));
    }
    Ok(())
}

/// Forcing added to every member at step `k`.
fn forcing_column(model: &OpcModel, controls: &DMatrix<f64>, k: usize) -> DVector<f64> {
    match model.b() {
        Some(b) => b * controls.column(k),
        None => controls.column(k) * model.dt(),
    }
}

/// Memory-free rollout of the model, the exact mean of the generated family.
fn plain_rollout(
    model: &OpcModel,
    x0: &DVector<f64>,
    controls: &DMatrix<f64>,
    grid: &TrajectoryGrid,
) -> DMatrix<f64> {
    let m = grid.steps();
    let mut mean = DMatrix::zeros(model.dim(), m);
    mean.set_column(0, x0);
    let mut x = x0.clone();
    for k in 0..m - 1 {
        x = model.a() * &x + forcing_column(model, controls, k);
        mean.set_column(k + 1, &x);
    }
    mean
}

/// Draws the member seed matrix, column `i` from stream `i`.
fn draw_seeds(d: usize, count: usize, sigma_n: f64, seed: u64) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(d, count);
    for i in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        for r in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            s[(r, i)] = sigma_n * z;
        }
    }
    s
}

/// Generates `n_gen_count` members with freshly drawn memory seeds and
/// returns their resolved mean. A zero seed scale produces the single
/// deterministic trajectory instead.
pub fn generate_averaged(
    model: &OpcModel,
    x0: &DVector<f64>,
    controls: &DMatrix<f64>,
    grid: &TrajectoryGrid,
) -> Result<EnsembleAverage, OpcError> {
    check_generation_args(model, x0, controls, grid)?;
    let cfg = model.seed_cfg();
    if cfg.sigma_n == 0.0 {
        let mean = plain_rollout(model, x0, controls, grid);
        return Ok(EnsembleAverage::new(
            mean,
            1,
            cfg.seed,
            grid.clone(),
            Source::Opc,
        ));
    }

    let d = model.dim();
    let m = grid.steps();
    let count = cfg.n_gen_count;
    let dt_sq = model.dt() * model.dt();

    let ops = memory_operators(model.a())?;
    assert_invertible(&ops.c, "A - I")?;
    let c_lu = ops.c.clone().lu();

    let seeds = draw_seeds(d, count, cfg.sigma_n, cfg.seed);
    // Member states as columns, alongside the running powers T^k S and E^k S.
    let mut states = DMatrix::zeros(d, count);
    for i in 0..count {
        states.set_column(i, x0);
    }
    let mut t_pow = seeds.clone();
    let mut e_pow = seeds;

    let ones = DVector::from_element(count, 1.0);
    let mut mean = DMatrix::zeros(d, m);
    mean.set_column(0, x0);
    for k in 0..m - 1 {
        let kernel = c_lu
            .solve(&(&t_pow - &e_pow))
            .ok_or_else(|| OpcError::SingularMatrix("A - I".into()))?;
        let forcing = forcing_column(model, controls, k);
        states = model.a() * states - kernel * dt_sq + &forcing * ones.transpose();
        mean.set_column(k + 1, &(states.column_sum() / count as f64));
        t_pow = &ops.t * t_pow;
        e_pow = &ops.e * e_pow;
    }

    Ok(EnsembleAverage::new(
        mean,
        count,
        cfg.seed,
        grid.clone(),
        Source::Opc,
    ))
}

/// The exact large-ensemble limit of [`generate_averaged`]: the memory term
/// has zero mean over seeds, so the limit is the memory-free rollout.
pub fn generate_averaged_analytic(
    model: &OpcModel,
    x0: &DVector<f64>,
    controls: &DMatrix<f64>,
    grid: &TrajectoryGrid,
) -> Result<EnsembleAverage, OpcError> {
    check_generation_args(model, x0, controls, grid)?;
    let mean = plain_rollout(model, x0, controls, grid);
    Ok(EnsembleAverage::new(
        mean,
        1,
        model.seed_cfg().seed,
        grid.clone(),
        Source::Opc,
    ))
}
