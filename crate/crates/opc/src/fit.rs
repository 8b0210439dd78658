//! Adam-based fitting of the memory-corrected model.
//!
//! The optimizer minimizes the objectives of [`crate::objective`] over the
//! one-step operator `A` (and the input operator `B` when it is unknown),
//! warm-started by default at the closed-form DMDc solution. The memory seed
//! is one draw `n ~ N(0, sigma_n^2 I)` held fixed for the whole fit; a zero
//! scale reduces everything to plain least squares refined by Adam.

use std::cmp::Ordering;
use std::time::{Duration, Instant};

use nalgebra::{Complex, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::baselines::{dmdc_fit_known_b, dmdc_fit_unknown_b};
use crate::error::OpcError;
use crate::objective::{gradient_known_b, gradient_unknown_b};
use crate::snapshots::SnapshotSet;

/// RNG stream reserved for the training seed draw, so it never collides with
/// the generation streams `0..n_gen_count`.
const FIT_SEED_STREAM: u64 = u64::MAX;

/// How the memory seed was drawn for the fit and how generated ensembles
/// should draw theirs.
#[derive(Clone, Debug, PartialEq)]
pub struct MemorySeedConfig {
    /// Scale of the seed distribution `N(0, sigma_n^2 I)`; zero disables the
    /// memory term.
    pub sigma_n: f64,
    /// The seed vector used during fitting.
    pub n_fit: DVector<f64>,
    /// Ensemble size for generated averages.
    pub n_gen_count: usize,
    /// Master RNG seed shared by the fit draw and the generation draws.
    pub seed: u64,
}

impl MemorySeedConfig {
    /// Draws the training seed from `N(0, sigma_n^2 I)` on a stream of its
    /// own, leaving streams `0..n_gen_count` for generation.
    pub fn draw(
        dim: usize,
        sigma_n: f64,
        n_gen_count: usize,
        seed: u64,
    ) -> Result<Self, OpcError> {
        if dim == 0 {
            return Err(OpcError::InvalidParameter(
                "seed dimension must be positive".into(),
            ));
        }
        if !sigma_n.is_finite() || sigma_n < 0.0 {
            return Err(OpcError::InvalidParameter(format!(
                "seed scale must be finite and non-negative, got {sigma_n}"
            )));
        }
        if n_gen_count == 0 {
            return Err(OpcError::InvalidParameter(
                "generation ensemble size must be positive".into(),
            ));
        }
        let n_fit = if sigma_n == 0.0 {
            DVector::zeros(dim)
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(FIT_SEED_STREAM);
            DVector::from_fn(dim, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                sigma_n * z
            })
        };
        Ok(Self {
            sigma_n,
            n_fit,
            n_gen_count,
            seed,
        })
    }

    /// Configuration with the memory term switched off.
    pub fn memoryless(dim: usize) -> Self {
        Self {
            sigma_n: 0.0,
            n_fit: DVector::zeros(dim),
            n_gen_count: 1,
            seed: 0,
        }
    }
}

/// Adam settings. The defaults are the usual moment decays with a step size
/// suited to warm-started refinement.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Start from the DMDc solution instead of the zero matrix.
    pub warm_start: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            iterations: 150,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            warm_start: true,
        }
    }
}

impl OptimizerConfig {
    fn validate(&self) -> Result<(), OpcError> {
        if self.iterations == 0 {
            return Err(OpcError::InvalidParameter(
                "optimizer needs at least one iteration".into(),
            ));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(OpcError::InvalidParameter(format!(
                "learning rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(OpcError::InvalidParameter(format!(
                    "{name} must lie in [0, 1), got {beta}"
                )));
            }
        }
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err(OpcError::InvalidParameter(format!(
                "epsilon must be positive and finite, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// The fitted one-step model plus everything needed to generate averaged
/// trajectories from it.
#[derive(Clone, Debug, PartialEq)]
pub struct OpcModel {
    a: DMatrix<f64>,
    b: Option<DMatrix<f64>>,
    dt: f64,
    seed_cfg: MemorySeedConfig,
}

impl OpcModel {
    pub fn new(
        a: DMatrix<f64>,
        b: Option<DMatrix<f64>>,
        dt: f64,
        seed_cfg: MemorySeedConfig,
    ) -> Result<Self, OpcError> {
        if a.nrows() != a.ncols() {
            return Err(OpcError::ShapeMismatch(format!(
                "state operator must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if let Some(b) = &b {
            if b.nrows() != a.nrows() {
                return Err(OpcError::ShapeMismatch(format!(
                    "input operator has {} rows, state operator is {}x{}",
                    b.nrows(),
                    a.nrows(),
                    a.ncols()
                )));
            }
        }
        if !dt.is_finite() || dt <= 0.0 {
            return Err(OpcError::InvalidParameter(format!(
                "model step must be positive and finite, got {dt}"
            )));
        }
        if seed_cfg.n_fit.len() != a.nrows() {
            return Err(OpcError::ShapeMismatch(format!(
                "seed has length {}, operator is {}x{}",
                seed_cfg.n_fit.len(),
                a.nrows(),
                a.ncols()
            )));
        }
        Ok(Self {
            a,
            b,
            dt,
            seed_cfg,
        })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> Option<&DMatrix<f64>> {
        self.b.as_ref()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn seed_cfg(&self) -> &MemorySeedConfig {
        &self.seed_cfg
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }
}

/// What the optimizer did: the objective before the first update and after
/// every subsequent one, so `history` has `iterations + 1` entries, plus the
/// eigenvalues of the fitted operator.
#[derive(Clone, Debug)]
pub struct FitReport {
    pub final_objective: f64,
    pub history: Vec<f64>,
    pub wall_time: Duration,
    pub spectrum: Vec<Complex<f64>>,
}

/// Elementwise Adam moments for one parameter matrix.
struct AdamState {
    m: DMatrix<f64>,
    v: DMatrix<f64>,
}

impl AdamState {
    fn new(rows: usize, cols: usize) -> Self {
        Self {
            m: DMatrix::zeros(rows, cols),
            v: DMatrix::zeros(rows, cols),
        }
    }

    /// One Adam update at step `t` (1-based).
    fn step(&mut self, param: &mut DMatrix<f64>, grad: &DMatrix<f64>, cfg: &OptimizerConfig, t: usize) {
        let bc1 = 1.0 - cfg.beta1.powi(t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(t as i32);
        for i in 0..param.nrows() {
            for j in 0..param.ncols() {
                let g = grad[(i, j)];
                let m = cfg.beta1 * self.m[(i, j)] + (1.0 - cfg.beta1) * g;
                let v = cfg.beta2 * self.v[(i, j)] + (1.0 - cfg.beta2) * g * g;
                self.m[(i, j)] = m;
                self.v[(i, j)] = v;
                let m_hat = m / bc1;
                let v_hat = v / bc2;
                param[(i, j)] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
        }
    }
}

fn optimization_error(iteration: usize) -> impl FnOnce(OpcError) -> OpcError {
    move |source| OpcError::Optimization {
        iteration,
        source: Box::new(source),
    }
}

/// Fits the memory-corrected model when the input operator is known and its
/// forcing record is part of the snapshots.
pub fn fit_known_b(
    s: &SnapshotSet,
    seed_cfg: &MemorySeedConfig,
    opt: &OptimizerConfig,
) -> Result<(OpcModel, FitReport), OpcError> {
    opt.validate()?;
    if seed_cfg.n_fit.len() != s.dim() {
        return Err(OpcError::ShapeMismatch(format!(
            "seed has length {}, snapshots have dimension {}",
            seed_cfg.n_fit.len(),
            s.dim()
        )));
    }
    let start = Instant::now();
    let d = s.dim();
    let mut a = if opt.warm_start {
        dmdc_fit_known_b(s)?.a().clone()
    } else {
        DMatrix::zeros(d, d)
    };

    let mut history = Vec::with_capacity(opt.iterations + 1);
    let mut adam = AdamState::new(d, d);
    for t in 1..=opt.iterations {
        let (value, grad) =
            gradient_known_b(&a, s, &seed_cfg.n_fit).map_err(optimization_error(t - 1))?;
        history.push(value);
        adam.step(&mut a, &grad, opt, t);
    }
    let final_objective = crate::objective::objective_known_b(&a, s, &seed_cfg.n_fit)
        .map_err(optimization_error(opt.iterations))?;
    history.push(final_objective);

    let report = FitReport {
        final_objective,
        history,
        wall_time: start.elapsed(),
        spectrum: spectrum(&a)?,
    };
    let model = OpcModel::new(a, None, s.dt(), seed_cfg.clone())?;
    Ok((model, report))
}

/// Fits the memory-corrected model and the input operator jointly from raw
/// input snapshots.
pub fn fit_unknown_b(
    s: &SnapshotSet,
    seed_cfg: &MemorySeedConfig,
    opt: &OptimizerConfig,
) -> Result<(OpcModel, FitReport), OpcError> {
    opt.validate()?;
    if seed_cfg.n_fit.len() != s.dim() {
        return Err(OpcError::ShapeMismatch(format!(
            "seed has length {}, snapshots have dimension {}",
            seed_cfg.n_fit.len(),
            s.dim()
        )));
    }
    let p = s.inputs()?.nrows();
    let start = Instant::now();
    let d = s.dim();
    let (mut a, mut b) = if opt.warm_start {
        let model = dmdc_fit_unknown_b(s)?;
        (model.a().clone(), model.b().unwrap().clone())
    } else {
        (DMatrix::zeros(d, d), DMatrix::zeros(d, p))
    };

    let mut history = Vec::with_capacity(opt.iterations + 1);
    let mut adam_a = AdamState::new(d, d);
    let mut adam_b = AdamState::new(d, p);
    for t in 1..=opt.iterations {
        let (value, grad_a, grad_b) =
            gradient_unknown_b(&a, &b, s, &seed_cfg.n_fit).map_err(optimization_error(t - 1))?;
        history.push(value);
        adam_a.step(&mut a, &grad_a, opt, t);
        adam_b.step(&mut b, &grad_b, opt, t);
    }
    let final_objective = crate::objective::objective_unknown_b(&a, &b, s, &seed_cfg.n_fit)
        .map_err(optimization_error(opt.iterations))?;
    history.push(final_objective);

    let report = FitReport {
        final_objective,
        history,
        wall_time: start.elapsed(),
        spectrum: spectrum(&a)?,
    };
    let model = OpcModel::new(a, Some(b), s.dt(), seed_cfg.clone())?;
    Ok((model, report))
}

/// Eigenvalues of the one-step operator, sorted by decreasing modulus (ties
/// broken by decreasing real then imaginary part). Moduli above 1 mean the
/// discrete model amplifies, below 1 that it dissipates.
pub fn spectrum(a: &DMatrix<f64>) -> Result<Vec<Complex<f64>>, OpcError> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(OpcError::ShapeMismatch(format!(
            "spectrum needs a non-empty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let schur = a
        .clone()
        .try_schur(f64::EPSILON, 0)
        .ok_or_else(|| OpcError::Numerical("eigenvalue iteration did not converge".into()))?;
    let mut eigs: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().copied().collect();
    eigs.sort_by(|x, y| {
        y.norm()
            .partial_cmp(&x.norm())
            .unwrap_or(Ordering::Equal)
            .then(y.re.partial_cmp(&x.re).unwrap_or(Ordering::Equal))
            .then(y.im.partial_cmp(&x.im).unwrap_or(Ordering::Equal))
    });
    Ok(eigs)
}
