//! Test systems, control laws, and a fixed-step RK4 integrator.
//!
//! States are flat `f64` vectors with the resolved coordinates stored first:
//! a system with `d_total` coordinates of which `d_resolved` are observed
//! keeps the observable block in positions `0..d_resolved`. Trajectories are
//! sampled on a uniform grid `t_k = k * dt` and stored column-per-sample, so
//! the integrator takes exactly one RK4 step per stored interval.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::OpcError;

type DriftFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// An autonomous drift field together with its partition into resolved and
/// unresolved coordinates.
#[derive(Clone)]
pub struct SystemSpec {
    name: String,
    d_total: usize,
    d_resolved: usize,
    drift: DriftFn,
}

impl SystemSpec {
    /// Wraps a drift closure. The closure must map a state of length
    /// `d_total` to a derivative of the same length.
    pub fn new(
        name: impl Into<String>,
        d_total: usize,
        d_resolved: usize,
        drift: DriftFn,
    ) -> Result<Self, OpcError> {
        if d_total == 0 || d_resolved == 0 || d_resolved > d_total {
            return Err(OpcError::InvalidParameter(format!(
                "need 1 <= d_resolved <= d_total, got d_resolved = {d_resolved}, d_total = {d_total}"
            )));
        }
        Ok(Self {
            name: name.into(),
            d_total,
            d_resolved,
            drift,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn d_total(&self) -> usize {
        self.d_total
    }

    pub fn d_resolved(&self) -> usize {
        self.d_resolved
    }

    /// Evaluates the drift field at `state`.
    pub fn drift(&self, state: &[f64]) -> Vec<f64> {
        (self.drift)(state)
    }
}

impl fmt::Debug for SystemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemSpec")
            .field("name", &self.name)
            .field("d_total", &self.d_total)
            .field("d_resolved", &self.d_resolved)
            .finish_non_exhaustive()
    }
}

/// Additive forcing `g(y, t)` applied on top of a system's drift.
#[derive(Clone, Debug)]
pub enum ControlLaw {
    /// `g = c`, a fixed vector of length `d_total`.
    Constant(DVector<f64>),
    /// `g = -rate * y`, uniform linear damping of every coordinate.
    Damped { rate: f64 },
    /// `g = gain * y[selector]`: the listed coordinates form the input
    /// vector, `gain` is `d_total x selector.len()`.
    LinearState {
        gain: DMatrix<f64>,
        selector: Vec<usize>,
    },
    /// `g = 0`.
    Zero,
}

impl ControlLaw {
    /// Checks that the law is dimensionally consistent with a `d_total`-state.
    pub fn check_dims(&self, d_total: usize) -> Result<(), OpcError> {
        match self {
            ControlLaw::Constant(c) => {
                if c.len() != d_total {
                    return Err(OpcError::ShapeMismatch(format!(
                        "constant control has length {}, state has length {d_total}",
                        c.len()
                    )));
                }
            }
            ControlLaw::Damped { rate } => {
                if !rate.is_finite() {
                    return Err(OpcError::InvalidParameter(
                        "damping rate must be finite".into(),
                    ));
                }
            }
            ControlLaw::LinearState { gain, selector } => {
                if gain.nrows() != d_total || gain.ncols() != selector.len() {
                    return Err(OpcError::ShapeMismatch(format!(
                        "gain is {}x{}, expected {d_total}x{}",
                        gain.nrows(),
                        gain.ncols(),
                        selector.len()
                    )));
                }
                if let Some(&bad) = selector.iter().find(|&&i| i >= d_total) {
                    return Err(OpcError::InvalidParameter(format!(
                        "selector index {bad} out of range for state length {d_total}"
                    )));
                }
            }
            ControlLaw::Zero => {}
        }
        Ok(())
    }

    /// Evaluates `g(state, t)`.
    pub fn evaluate(&self, state: &[f64], t: f64) -> Result<DVector<f64>, OpcError> {
        self.check_dims(state.len())?;
        let _ = t;
        Ok(self.evaluate_unchecked(state))
    }

    /// The state coordinates this law reads as its input record, if any.
    pub fn selector(&self) -> Option<&[usize]> {
        match self {
            ControlLaw::LinearState { selector, .. } => Some(selector),
            _ => None,
        }
    }

    fn evaluate_unchecked(&self, state: &[f64]) -> DVector<f64> {
        match self {
            ControlLaw::Constant(c) => c.clone(),
            ControlLaw::Damped { rate } => {
                DVector::from_iterator(state.len(), state.iter().map(|y| -rate * y))
            }
            ControlLaw::LinearState { gain, selector } => {
                let v = DVector::from_iterator(selector.len(), selector.iter().map(|&i| state[i]));
                gain * v
            }
            ControlLaw::Zero => DVector::zeros(state.len()),
        }
    }
}

/// Initial condition with deterministic resolved coordinates and centered
/// Gaussian unresolved coordinates.
#[derive(Clone, Debug)]
pub struct InitDistribution {
    resolved: DVector<f64>,
    unresolved_sigma: DVector<f64>,
}

impl InitDistribution {
    /// `resolved` seeds positions `0..d_resolved`; `unresolved_sigma[i]` is
    /// the standard deviation of coordinate `d_resolved + i`.
    pub fn new(resolved: DVector<f64>, unresolved_sigma: DVector<f64>) -> Result<Self, OpcError> {
        if unresolved_sigma.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(OpcError::InvalidParameter(
                "unresolved standard deviations must be finite and >= 0".into(),
            ));
        }
        if resolved.iter().any(|x| !x.is_finite()) {
            return Err(OpcError::InvalidParameter(
                "resolved initial state must be finite".into(),
            ));
        }
        Ok(Self {
            resolved,
            unresolved_sigma,
        })
    }

    pub fn d_total(&self) -> usize {
        self.resolved.len() + self.unresolved_sigma.len()
    }

    pub fn resolved(&self) -> &DVector<f64> {
        &self.resolved
    }

    pub fn unresolved_sigma(&self) -> &DVector<f64> {
        &self.unresolved_sigma
    }

    /// Draws one full initial state. Adding 0.0 turns the negative zero a
    /// zero-sigma coordinate can produce into plain zero, so such draws
    /// serialize identically under every seed.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let mut state = DVector::zeros(self.d_total());
        state.rows_mut(0, self.resolved.len()).copy_from(&self.resolved);
        for (i, sigma) in self.unresolved_sigma.iter().enumerate() {
            let z: f64 = StandardNormal.sample(rng);
            state[self.resolved.len() + i] = sigma * z + 0.0;
        }
        state
    }
}

/// Uniform sampling grid: `steps` stored samples at `t_k = k * dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryGrid {
    dt: f64,
    steps: usize,
}

impl TrajectoryGrid {
    pub fn new(dt: f64, steps: usize) -> Result<Self, OpcError> {
        if !dt.is_finite() || dt <= 0.0 {
            return Err(OpcError::InvalidParameter(format!(
                "grid spacing must be positive and finite, got {dt}"
            )));
        }
        if steps < 2 {
            return Err(OpcError::InvalidParameter(format!(
                "grid needs at least 2 samples, got {steps}"
            )));
        }
        Ok(Self { dt, steps })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of stored samples (trajectory columns).
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.steps).map(|k| self.t(k))
    }

    /// A grid covering the same time span with `oversample` integration steps
    /// per stored interval. Integrating on the refined grid and calling
    /// [`Trajectory::subsample`] with the same factor recovers samples at the
    /// original spacing, with the integration error of the finer step.
    pub fn refined(&self, oversample: usize) -> Result<Self, OpcError> {
        if oversample == 0 {
            return Err(OpcError::InvalidParameter(
                "oversampling factor must be at least 1".into(),
            ));
        }
        TrajectoryGrid::new(
            self.dt / oversample as f64,
            (self.steps - 1) * oversample + 1,
        )
    }
}

/// A sampled solution: column `k` is the full state at `t_k`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    states: DMatrix<f64>,
    grid: TrajectoryGrid,
}

impl Trajectory {
    pub fn states(&self) -> &DMatrix<f64> {
        &self.states
    }

    pub fn grid(&self) -> &TrajectoryGrid {
        &self.grid
    }

    pub fn d_total(&self) -> usize {
        self.states.nrows()
    }

    /// Keeps every `stride`-th sample, starting from the first. The result
    /// lives on the grid with spacing `stride * dt`.
    pub fn subsample(&self, stride: usize) -> Result<Trajectory, OpcError> {
        if stride == 0 {
            return Err(OpcError::InvalidParameter(
                "subsampling stride must be at least 1".into(),
            ));
        }
        let kept = (self.states.ncols() - 1) / stride + 1;
        let grid = TrajectoryGrid::new(self.grid.dt() * stride as f64, kept)?;
        let mut states = DMatrix::zeros(self.d_total(), kept);
        for k in 0..kept {
            states.set_column(k, &self.states.column(k * stride));
        }
        Ok(Trajectory { states, grid })
    }
}

/// One classical Runge-Kutta step of size `dt` for `y' = field(y, t)`.
///
/// Errors if any stage derivative or the combined state is non-finite, so a
/// blow-up surfaces with the time at which it happened instead of silently
/// filling the trajectory with NaNs.
pub fn rk4_step<F>(field: &F, state: &[f64], t: f64, dt: f64) -> Result<Vec<f64>, OpcError>
where
    F: Fn(&[f64], f64) -> Vec<f64>,
{
    let n = state.len();
    let eval = |y: &[f64], tt: f64| -> Result<Vec<f64>, OpcError> {
        let k = field(y, tt);
        if k.len() != n {
            return Err(OpcError::ShapeMismatch(format!(
                "field returned length {}, state has length {n}",
                k.len()
            )));
        }
        if k.iter().any(|v| !v.is_finite()) {
            return Err(OpcError::IntegrationFailure { t: tt });
        }
        Ok(k)
    };

    let half = 0.5 * dt;
    let k1 = eval(state, t)?;
    let y2: Vec<f64> = state.iter().zip(&k1).map(|(y, k)| y + half * k).collect();
    let k2 = eval(&y2, t + half)?;
    let y3: Vec<f64> = state.iter().zip(&k2).map(|(y, k)| y + half * k).collect();
    let k3 = eval(&y3, t + half)?;
    let y4: Vec<f64> = state.iter().zip(&k3).map(|(y, k)| y + dt * k).collect();
    let k4 = eval(&y4, t + dt)?;

    let sixth = dt / 6.0;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        out.push(state[i] + sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(OpcError::IntegrationFailure { t: t + dt });
    }
    Ok(out)
}

/// Integrates `y' = drift(y) + g(y, t)` over the grid, one RK4 step per
/// stored interval. The control law is re-evaluated at every internal stage.
pub fn integrate(
    sys: &SystemSpec,
    ctrl: &ControlLaw,
    init: &DVector<f64>,
    grid: &TrajectoryGrid,
) -> Result<Trajectory, OpcError> {
    if init.len() != sys.d_total() {
        return Err(OpcError::ShapeMismatch(format!(
            "initial state has length {}, system expects {}",
            init.len(),
            sys.d_total()
        )));
    }
    if init.iter().any(|v| !v.is_finite()) {
        return Err(OpcError::InvalidParameter(
            "initial state must be finite".into(),
        ));
    }
    ctrl.check_dims(sys.d_total())?;

    let field = |y: &[f64], _t: f64| -> Vec<f64> {
        let mut dy = sys.drift(y);
        let g = ctrl.evaluate_unchecked(y);
        for (d, gi) in dy.iter_mut().zip(g.iter()) {
            *d += gi;
        }
        dy
    };

    let m = grid.steps();
    let mut states = DMatrix::zeros(sys.d_total(), m);
    states.column_mut(0).copy_from(init);
    let mut y: Vec<f64> = init.as_slice().to_vec();
    for k in 0..m - 1 {
        y = rk4_step(&field, &y, grid.t(k), grid.dt())?;
        states.column_mut(k + 1).copy_from_slice(&y);
    }
    Ok(Trajectory {
        states,
        grid: grid.clone(),
    })
}

/// Two coupled oscillators where each frequency is modulated by the other's
/// displacement: resolved pair `(y1, y2)` and unresolved pair `(y3, y4)` with
///
/// ```text
/// y1' = y2        y2' = -y1 (1 + y3^2)
/// y3' = y4        y4' = -y3 (1 + y1^2)
/// ```
pub fn test_problem_1() -> SystemSpec {
    SystemSpec::new(
        "tp1",
        4,
        2,
        Arc::new(|y: &[f64]| {
            vec![
                y[1],
                -y[0] * (1.0 + y[2] * y[2]),
                y[3],
                -y[2] * (1.0 + y[0] * y[0]),
            ]
        }),
    )
    .expect("static dimensions are valid")
}

/// Scale-separated variant of [`test_problem_1`]: the unresolved pair runs a
/// factor `eps` faster and couples with strength `eps` into the resolved
/// frequency. `eps = 1` recovers [`test_problem_1`] exactly.
pub fn test_problem_2(eps: f64) -> Result<SystemSpec, OpcError> {
    if !eps.is_finite() || eps <= 0.0 {
        return Err(OpcError::InvalidParameter(format!(
            "scale separation must be positive and finite, got {eps}"
        )));
    }
    SystemSpec::new(
        "tp2",
        4,
        2,
        Arc::new(move |y: &[f64]| {
            vec![
                y[1],
                -y[0] * (1.0 + eps * y[2] * y[2]),
                eps * y[3],
                -eps * y[2] * (1.0 + y[0] * y[0]),
            ]
        }),
    )
}

/// Initial spread for the fast pair of [`test_problem_2`] that keeps its
/// energy comparable to the slow pair: `1 / sqrt(eps)`.
pub fn tp2_init_sigma(eps: f64) -> f64 {
    eps.sqrt().recip()
}
