//! Config-driven assembly of the library pipeline the commands share.
//!
//! Measurement and Monte Carlo averaging integrate on the sampling grid
//! refined by `[grid] oversample` and keep every oversample-th state, so
//! fast unresolved coordinates are stepped accurately while the fitted and
//! generated objects all live on the sampling grid itself.

use nalgebra::{DMatrix, DVector};
use opc::baselines::{dmdc_fit_known_b, dmdc_fit_unknown_b, LinearModel};
use opc::dynamics::{integrate, Trajectory};
use opc::ensemble::{mc_projection, EnsembleAverage};
use opc::fit::{fit_known_b, fit_unknown_b, FitReport, MemorySeedConfig, OpcModel};
use opc::snapshots::{build_known_b, build_unknown_b, extract_resolved, select_inputs, SnapshotSet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ControlKind, ExperimentConfig, FitMode};
use crate::error::CliError;

/// Integrates one realization from the seeded initial draw and returns it on
/// the sampling grid.
pub fn measure(cfg: &ExperimentConfig) -> Result<Trajectory, CliError> {
    let fine = cfg.grid().refined(cfg.oversample)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
    let x0 = cfg.init().sample(&mut rng);
    let traj = integrate(&cfg.system(), &cfg.control_law(), &x0, &fine)?;
    Ok(traj.subsample(cfg.oversample)?)
}

/// Snapshot pairs from the measured trajectory, carrying either the
/// projected forcing or the raw input record depending on the fit mode.
pub fn snapshot_set(cfg: &ExperimentConfig, traj: &Trajectory) -> Result<SnapshotSet, CliError> {
    let resolved = extract_resolved(traj, cfg.system().d_resolved())?;
    let dt = traj.grid().dt();
    match cfg.mode {
        FitMode::KnownB => Ok(build_known_b(&resolved, &cfg.control_law(), traj, dt)?),
        FitMode::UnknownB => {
            let ControlKind::Linear { selector, .. } = &cfg.control else {
                unreachable!("mode checked at load");
            };
            let inputs = select_inputs(traj, selector)?;
            Ok(build_unknown_b(&resolved, &inputs, dt)?)
        }
    }
}

/// The control columns every rollout replays: the forcing record for a
/// known operator, the raw inputs otherwise.
pub fn control_record(cfg: &ExperimentConfig, s: &SnapshotSet) -> Result<DMatrix<f64>, CliError> {
    let record = match cfg.mode {
        FitMode::KnownB => s.projected()?,
        FitMode::UnknownB => s.inputs()?,
    };
    Ok(record.clone())
}

/// Fits the memory-corrected model with the configured optimizer and seeds.
pub fn fit(cfg: &ExperimentConfig, s: &SnapshotSet) -> Result<(OpcModel, FitReport), CliError> {
    let seed_cfg = MemorySeedConfig::draw(
        cfg.system().d_resolved(),
        cfg.sigma_n,
        cfg.n_gen_count,
        cfg.fit_seed,
    )?;
    let opt = cfg.optimizer();
    let fitted = match cfg.mode {
        FitMode::KnownB => fit_known_b(s, &seed_cfg, &opt)?,
        FitMode::UnknownB => fit_unknown_b(s, &seed_cfg, &opt)?,
    };
    Ok(fitted)
}

/// The closed-form one-step baseline on the same snapshots.
pub fn dmdc(cfg: &ExperimentConfig, s: &SnapshotSet) -> Result<LinearModel, CliError> {
    let model = match cfg.mode {
        FitMode::KnownB => dmdc_fit_known_b(s)?,
        FitMode::UnknownB => dmdc_fit_unknown_b(s)?,
    };
    Ok(model)
}

/// Ensemble average over fresh unresolved draws, on the sampling grid.
pub fn monte_carlo(cfg: &ExperimentConfig) -> Result<EnsembleAverage, CliError> {
    let fine = cfg.grid().refined(cfg.oversample)?;
    let mean = mc_projection(
        &cfg.system(),
        &cfg.control_law(),
        &cfg.init(),
        &fine,
        cfg.mc_samples,
        cfg.mc_seed,
    )?;
    Ok(mean.subsample(cfg.oversample)?)
}

/// The resolved initial state rollouts and generation start from.
pub fn resolved_x0(cfg: &ExperimentConfig) -> DVector<f64> {
    DVector::from_vec(cfg.x0.clone())
}
