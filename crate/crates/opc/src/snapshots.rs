//! Snapshot matrices for one-step regression.
//!
//! A measured trajectory with `m` samples yields `m - 1` consecutive pairs in
//! forward order: column `j` of `x_minus` is the resolved state at `t_j` and
//! column `j` of `x_plus` is the resolved state at `t_{j+1}`. The control
//! record comes in one of two kinds, matching the two regression modes:
//!
//! - projected forcing `W` (known input operator): `W[:, j]` is the resolved
//!   block of `g` evaluated along the measured trajectory at `t_j`, and the
//!   regression target becomes `x_plus - dt * W`;
//! - raw inputs `V` (input operator to be identified): `V[:, j]` is the input
//!   vector at `t_j` and the input operator multiplies it inside the model.

use nalgebra::DMatrix;

use crate::dynamics::{ControlLaw, Trajectory};
use crate::error::OpcError;

/// Control record attached to a snapshot pair set. Exactly one kind is
/// present; operations that need the other kind fail loudly.
#[derive(Clone, Debug)]
pub enum ControlRecord {
    /// Resolved-block forcing samples, `d_resolved x (m - 1)`.
    Projected(DMatrix<f64>),
    /// Raw input samples, `p x (m - 1)`.
    Inputs(DMatrix<f64>),
}

/// Consecutive snapshot pairs plus the control record and the sampling step.
#[derive(Clone, Debug)]
pub struct SnapshotSet {
    dt: f64,
    x_minus: DMatrix<f64>,
    x_plus: DMatrix<f64>,
    control: ControlRecord,
}

impl SnapshotSet {
    /// Assembles a snapshot set from already-paired matrices. Used when the
    /// data comes from a discrete map rather than an integrated trajectory.
    pub fn from_parts(
        dt: f64,
        x_minus: DMatrix<f64>,
        x_plus: DMatrix<f64>,
        control: ControlRecord,
    ) -> Result<Self, OpcError> {
        if !dt.is_finite() || dt <= 0.0 {
            return Err(OpcError::InvalidParameter(format!(
                "sampling step must be positive and finite, got {dt}"
            )));
        }
        if x_minus.shape() != x_plus.shape() {
            return Err(OpcError::ShapeMismatch(format!(
                "snapshot blocks differ: {:?} vs {:?}",
                x_minus.shape(),
                x_plus.shape()
            )));
        }
        if x_minus.nrows() == 0 || x_minus.ncols() == 0 {
            return Err(OpcError::ShapeMismatch(
                "snapshot set needs at least one pair and one row".into(),
            ));
        }
        let (ctrl_cols, ctrl_rows_ok) = match &control {
            ControlRecord::Projected(w) => (w.ncols(), w.nrows() == x_minus.nrows()),
            ControlRecord::Inputs(v) => (v.ncols(), v.nrows() > 0),
        };
        if ctrl_cols != x_minus.ncols() || !ctrl_rows_ok {
            return Err(OpcError::ShapeMismatch(format!(
                "control record shape does not match {} pairs of dimension {}",
                x_minus.ncols(),
                x_minus.nrows()
            )));
        }
        Ok(Self {
            dt,
            x_minus,
            x_plus,
            control,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn x_minus(&self) -> &DMatrix<f64> {
        &self.x_minus
    }

    pub fn x_plus(&self) -> &DMatrix<f64> {
        &self.x_plus
    }

    pub fn control(&self) -> &ControlRecord {
        &self.control
    }

    /// Resolved dimension `d_resolved`.
    pub fn dim(&self) -> usize {
        self.x_minus.nrows()
    }

    /// Number of snapshot pairs, `m - 1`.
    pub fn pairs(&self) -> usize {
        self.x_minus.ncols()
    }

    /// Projected forcing samples, or a kind error for raw-input records.
    pub fn projected(&self) -> Result<&DMatrix<f64>, OpcError> {
        match &self.control {
            ControlRecord::Projected(w) => Ok(w),
            ControlRecord::Inputs(_) => Err(OpcError::ControlKind(
                "snapshots carry raw inputs, projected forcing required".into(),
            )),
        }
    }

    /// Raw input samples, or a kind error for projected records.
    pub fn inputs(&self) -> Result<&DMatrix<f64>, OpcError> {
        match &self.control {
            ControlRecord::Inputs(v) => Ok(v),
            ControlRecord::Projected(_) => Err(OpcError::ControlKind(
                "snapshots carry projected forcing, raw inputs required".into(),
            )),
        }
    }
}

/// Top `d_resolved` rows of a trajectory, one column per sample.
pub fn extract_resolved(traj: &Trajectory, d_resolved: usize) -> Result<DMatrix<f64>, OpcError> {
    if d_resolved == 0 || d_resolved > traj.d_total() {
        return Err(OpcError::ShapeMismatch(format!(
            "cannot keep {d_resolved} rows of a {}-dimensional trajectory",
            traj.d_total()
        )));
    }
    Ok(traj.states().rows(0, d_resolved).into_owned())
}

/// Rows of the full trajectory listed by `selector`, one column per sample.
/// This is the input record fed to input-operator identification.
pub fn select_inputs(traj: &Trajectory, selector: &[usize]) -> Result<DMatrix<f64>, OpcError> {
    if selector.is_empty() {
        return Err(OpcError::InvalidParameter(
            "input selector must not be empty".into(),
        ));
    }
    if let Some(&bad) = selector.iter().find(|&&i| i >= traj.d_total()) {
        return Err(OpcError::InvalidParameter(format!(
            "selector index {bad} out of range for state length {}",
            traj.d_total()
        )));
    }
    let m = traj.states().ncols();
    let mut out = DMatrix::zeros(selector.len(), m);
    for (r, &i) in selector.iter().enumerate() {
        for c in 0..m {
            out[(r, c)] = traj.states()[(i, c)];
        }
    }
    Ok(out)
}

/// Builds known-operator snapshots: pairs from `resolved` plus the resolved
/// block of `ctrl` evaluated along the full measured trajectory.
pub fn build_known_b(
    resolved: &DMatrix<f64>,
    ctrl: &ControlLaw,
    traj: &Trajectory,
    dt: f64,
) -> Result<SnapshotSet, OpcError> {
    let m = resolved.ncols();
    if m < 2 {
        return Err(OpcError::ShapeMismatch(format!(
            "need at least 2 samples to form pairs, got {m}"
        )));
    }
    if traj.states().ncols() != m {
        return Err(OpcError::ShapeMismatch(format!(
            "resolved record has {m} samples, trajectory has {}",
            traj.states().ncols()
        )));
    }
    if resolved.nrows() > traj.d_total() {
        return Err(OpcError::ShapeMismatch(format!(
            "resolved record has {} rows, trajectory only {}",
            resolved.nrows(),
            traj.d_total()
        )));
    }
    ctrl.check_dims(traj.d_total())?;

    let d_r = resolved.nrows();
    let mut w = DMatrix::zeros(d_r, m - 1);
    for j in 0..m - 1 {
        let state: Vec<f64> = traj.states().column(j).iter().copied().collect();
        let g = ctrl.evaluate(&state, j as f64 * dt)?;
        for r in 0..d_r {
            w[(r, j)] = g[r];
        }
    }

    Ok(SnapshotSet {
        dt,
        x_minus: resolved.columns(0, m - 1).into_owned(),
        x_plus: resolved.columns(1, m - 1).into_owned(),
        control: ControlRecord::Projected(w),
    })
}

/// Builds unknown-operator snapshots: pairs from `resolved` plus the raw
/// input record sampled at the same instants.
pub fn build_unknown_b(
    resolved: &DMatrix<f64>,
    inputs: &DMatrix<f64>,
    dt: f64,
) -> Result<SnapshotSet, OpcError> {
    let m = resolved.ncols();
    if m < 2 {
        return Err(OpcError::ShapeMismatch(format!(
            "need at least 2 samples to form pairs, got {m}"
        )));
    }
    if inputs.ncols() < m - 1 {
        return Err(OpcError::ShapeMismatch(format!(
            "input record has {} samples, need at least {}",
            inputs.ncols(),
            m - 1
        )));
    }
    Ok(SnapshotSet {
        dt,
        x_minus: resolved.columns(0, m - 1).into_owned(),
        x_plus: resolved.columns(1, m - 1).into_owned(),
        control: ControlRecord::Inputs(inputs.columns(0, m - 1).into_owned()),
    })
}

/// Regression targets with the known forcing removed: `x_plus - dt * W`.
pub fn corrected_targets(s: &SnapshotSet) -> Result<DMatrix<f64>, OpcError> {
    let w = s.projected()?;
    Ok(s.x_plus() - w * s.dt())
}
