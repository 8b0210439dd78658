//! Closed-form linear baselines: least squares, DMD, and DMDc.
//!
//! These are the models the memory-corrected fit is measured against, and
//! they double as its warm start. All of them reduce to one minimum-norm
//! least-squares solve on snapshot matrices.

use nalgebra::DMatrix;

use crate::error::OpcError;
use crate::snapshots::{corrected_targets, SnapshotSet};

/// Relative singular-value cutoff for the pseudoinverse: directions with
/// `sigma <= PINV_RTOL * sigma_max` are treated as null.
pub const PINV_RTOL: f64 = 1e-12;

/// A discrete one-step model `x_{k+1} = A x_k + forcing`, where the forcing
/// is `dt * w_k` when the input operator is known (projected forcing data)
/// or `B v_k` when an input operator was identified.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    a: DMatrix<f64>,
    b: Option<DMatrix<f64>>,
    dt: f64,
}

impl LinearModel {
    pub fn new(a: DMatrix<f64>, b: Option<DMatrix<f64>>, dt: f64) -> Result<Self, OpcError> {
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
        Ok(Self { a, b, dt })
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

    /// Resolved dimension.
    pub fn dim(&self) -> usize {
        self.a.nrows()
    }
}

/// Minimum-norm solution `M` of `min ||target - M * regressor||_F`.
///
/// Computed as `target * pinv(regressor)` with the pseudoinverse truncated at
/// [`PINV_RTOL`] relative to the largest singular value. Among all minimizers
/// this is the one of smallest Frobenius norm, so rank-deficient regressors
/// are handled without throwing.
pub fn least_squares(
    target: &DMatrix<f64>,
    regressor: &DMatrix<f64>,
) -> Result<DMatrix<f64>, OpcError> {
    if target.ncols() != regressor.ncols() {
        return Err(OpcError::ShapeMismatch(format!(
            "target has {} samples, regressor has {}",
            target.ncols(),
            regressor.ncols()
        )));
    }
    if target.nrows() == 0 || regressor.nrows() == 0 || target.ncols() == 0 {
        return Err(OpcError::ShapeMismatch(
            "least squares needs non-empty matrices".into(),
        ));
    }

    let svd = regressor.clone().svd(true, true);
    let u = svd
        .u
        .as_ref()
        .ok_or_else(|| OpcError::Numerical("SVD did not return U".into()))?;
    let v_t = svd
        .v_t
        .as_ref()
        .ok_or_else(|| OpcError::Numerical("SVD did not return V^T".into()))?;
    let sigma = &svd.singular_values;
    let cutoff = PINV_RTOL * sigma.max();

    // pinv = V sigma^+ U^T, assembled without forming the big V explicitly:
    // M = ((target * V) * sigma^+) * U^T would need V; go through U instead.
    let k = sigma.len();
    let mut scaled_ut = u.transpose();
    for i in 0..k {
        let inv = if sigma[i] > cutoff { 1.0 / sigma[i] } else { 0.0 };
        scaled_ut.row_mut(i).scale_mut(inv);
    }
    let pinv = v_t.transpose() * scaled_ut;
    Ok(target * pinv)
}

/// Uncontrolled DMD: fits `x_plus ~ A x_minus`.
pub fn dmd_fit(
    x_minus: &DMatrix<f64>,
    x_plus: &DMatrix<f64>,
    dt: f64,
) -> Result<LinearModel, OpcError> {
    if x_minus.shape() != x_plus.shape() {
        return Err(OpcError::ShapeMismatch(format!(
            "snapshot blocks differ: {:?} vs {:?}",
            x_minus.shape(),
            x_plus.shape()
        )));
    }
    let a = least_squares(x_plus, x_minus)?;
    LinearModel::new(a, None, dt)
}

/// DMDc with known input operator: the forcing record is subtracted from the
/// targets and only `A` is identified.
pub fn dmdc_fit_known_b(s: &SnapshotSet) -> Result<LinearModel, OpcError> {
    let y = corrected_targets(s)?;
    let a = least_squares(&y, s.x_minus())?;
    LinearModel::new(a, None, s.dt())
}

/// DMDc with unknown input operator: identifies `[A B]` jointly from the
/// stacked regressor `[x_minus; v]`.
pub fn dmdc_fit_unknown_b(s: &SnapshotSet) -> Result<LinearModel, OpcError> {
    let v = s.inputs()?;
    let d = s.dim();
    let p = v.nrows();
    let n = s.pairs();
    let mut omega = DMatrix::zeros(d + p, n);
    omega.view_mut((0, 0), (d, n)).copy_from(s.x_minus());
    omega.view_mut((d, 0), (p, n)).copy_from(v);
    let ab = least_squares(s.x_plus(), &omega)?;
    let a = ab.columns(0, d).into_owned();
    let b = ab.columns(d, p).into_owned();
    LinearModel::new(a, Some(b), s.dt())
}

/// Rolls the model forward for `m` samples from `x0` under the given control
/// record (projected forcing columns for known-operator models, raw input
/// columns for identified ones). Column `k` of the result is `x_k`.
pub fn linear_rollout(
    model: &LinearModel,
    x0: &nalgebra::DVector<f64>,
    controls: &DMatrix<f64>,
    m: usize,
) -> Result<DMatrix<f64>, OpcError> {
    let d = model.dim();
    if x0.len() != d {
        return Err(OpcError::ShapeMismatch(format!(
            "initial state has length {}, model is {d}-dimensional",
            x0.len()
        )));
    }
    if m == 0 {
        return Err(OpcError::InvalidParameter(
            "rollout needs at least one sample".into(),
        ));
    }
    let expected_rows = match model.b() {
        Some(b) => b.ncols(),
        None => d,
    };
    if m > 1 && (controls.nrows() != expected_rows || controls.ncols() < m - 1) {
        return Err(OpcError::ShapeMismatch(format!(
            "control record is {}x{}, need {expected_rows}x{}",
            controls.nrows(),
            controls.ncols(),
            m - 1
        )));
    }

    let mut out = DMatrix::zeros(d, m);
    out.set_column(0, x0);
    let mut x = x0.clone();
    for k in 0..m - 1 {
        x = model.a() * &x;
        match model.b() {
            Some(b) => x += b * controls.column(k),
            None => x += controls.column(k) * model.dt(),
        }
        out.set_column(k + 1, &x);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snapshots::build_unknown_b;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn frob(m: &DMatrix<f64>) -> f64 {
        m.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    /// Snapshot record of `x_{k+1} = A x_k + B v_k` under random inputs.
    fn driven_record(
        a: &DMatrix<f64>,
        b: &DMatrix<f64>,
        m: usize,
        seed: u64,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = a.nrows();
        let p = b.ncols();
        let mut states = DMatrix::zeros(d, m);
        let mut inputs = DMatrix::zeros(p, m);
        let mut x = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        states.set_column(0, &x);
        for k in 0..m - 1 {
            let v = DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0));
            inputs.set_column(k, &v);
            x = a * &x + b * &v;
            states.set_column(k + 1, &x);
        }
        (states, inputs)
    }

    #[test]
    fn least_squares_inverts_well_conditioned_regressor() {
        let regressor = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let target = DMatrix::from_row_slice(2, 2, &[2.0, 4.0, 6.0, -8.0]);
        let m = least_squares(&target, &regressor).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 3.0, -2.0]);
        assert!(max_abs_diff(&m, &expected) < 1e-12);
    }

    #[test]
    fn least_squares_returns_zero_for_zero_regressor() {
        let regressor = DMatrix::zeros(2, 5);
        let target = DMatrix::from_fn(2, 5, |i, j| (i + j) as f64);
        let m = least_squares(&target, &regressor).unwrap();
        assert!(m.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn least_squares_recovers_random_operator() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let truth = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let regressor = DMatrix::from_fn(3, 10, |_, _| rng.random_range(-1.0..1.0));
        let target = &truth * &regressor;
        let m = least_squares(&target, &regressor).unwrap();
        assert!(max_abs_diff(&m, &truth) < 1e-10);
    }

    #[test]
    fn least_squares_rejects_empty_and_mismatched() {
        let empty = DMatrix::<f64>::zeros(0, 0);
        assert!(least_squares(&empty, &empty).is_err());
        let t = DMatrix::<f64>::zeros(2, 3);
        let r = DMatrix::<f64>::zeros(2, 4);
        assert!(least_squares(&t, &r).is_err());
    }

    #[test]
    fn dmd_recovers_stable_operator() {
        let a_true = DMatrix::from_row_slice(2, 2, &[0.9, 0.2, -0.1, 0.8]);
        let m = 30;
        let mut states = DMatrix::zeros(2, m);
        let mut x = DVector::from_vec(vec![1.0, 0.5]);
        states.set_column(0, &x);
        for k in 0..m - 1 {
            x = &a_true * &x;
            states.set_column(k + 1, &x);
        }
        let model = dmd_fit(
            &states.columns(0, m - 1).into_owned(),
            &states.columns(1, m - 1).into_owned(),
            0.1,
        )
        .unwrap();
        assert!(max_abs_diff(model.a(), &a_true) < 1e-8);
    }

    #[test]
    fn dmd_on_fixed_points_maps_them_to_themselves() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, -1.0, 0.5, 0.5, 2.0]);
        let model = dmd_fit(&x, &x, 1.0).unwrap();
        let mapped = model.a() * &x;
        assert!(max_abs_diff(&mapped, &x) < 1e-10);
    }

    #[test]
    fn dmd_single_pair_is_rank_one_minimum_norm() {
        let x1 = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let x2 = DMatrix::from_row_slice(2, 1, &[3.0, -1.0]);
        let model = dmd_fit(&x1, &x2, 1.0).unwrap();
        // Minimum-norm solution is x2 x1^T / ||x1||^2.
        let expected = DMatrix::from_row_slice(2, 2, &[0.6, 1.2, -0.2, -0.4]);
        assert!(max_abs_diff(model.a(), &expected) < 1e-12);
    }

    #[test]
    fn dmdc_known_recovers_operator_from_forced_data() {
        let a_true = DMatrix::from_row_slice(2, 2, &[0.92, 0.1, -0.12, 0.88]);
        let dt = 0.1;
        let m = 100;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut states = DMatrix::zeros(2, m);
        let mut forcing = DMatrix::zeros(2, m);
        let mut x = DVector::from_vec(vec![1.0, -0.4]);
        states.set_column(0, &x);
        for k in 0..m - 1 {
            let w = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
            forcing.set_column(k, &w);
            x = &a_true * &x + &w * dt;
            states.set_column(k + 1, &x);
        }
        let s = crate::snapshots::SnapshotSet::from_parts(
            dt,
            states.columns(0, m - 1).into_owned(),
            states.columns(1, m - 1).into_owned(),
            crate::snapshots::ControlRecord::Projected(forcing.columns(0, m - 1).into_owned()),
        )
        .unwrap();
        let model = dmdc_fit_known_b(&s).unwrap();
        assert!(max_abs_diff(model.a(), &a_true) < 1e-8);
        assert!(model.b().is_none());
    }

    #[test]
    fn dmdc_known_sits_at_the_objective_minimum() {
        let a_true = DMatrix::from_row_slice(2, 2, &[0.9, 0.2, -0.1, 0.8]);
        let dt = 0.1;
        let m = 50;
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let mut states = DMatrix::zeros(2, m);
        let mut forcing = DMatrix::zeros(2, m);
        let mut x = DVector::from_vec(vec![0.8, 0.3]);
        states.set_column(0, &x);
        for k in 0..m - 1 {
            let w = DVector::from_fn(2, |_, _| rng.random_range(-0.5..0.5));
            forcing.set_column(k, &w);
            // Quadratic term keeps the data off any exact linear model.
            x = &a_true * &x + &w * dt + DVector::from_vec(vec![0.02 * x[1] * x[1], 0.0]);
            states.set_column(k + 1, &x);
        }
        let s = crate::snapshots::SnapshotSet::from_parts(
            dt,
            states.columns(0, m - 1).into_owned(),
            states.columns(1, m - 1).into_owned(),
            crate::snapshots::ControlRecord::Projected(forcing.columns(0, m - 1).into_owned()),
        )
        .unwrap();
        let model = dmdc_fit_known_b(&s).unwrap();
        let y = corrected_targets(&s).unwrap();
        let best = frob(&(&y - model.a() * s.x_minus()));
        for trial in 0..100u64 {
            let mut prng = ChaCha8Rng::seed_from_u64(1000 + trial);
            let mut delta = DMatrix::from_fn(2, 2, |_, _| prng.random_range(-1.0..1.0));
            delta.scale_mut(1e-3 / frob(&delta));
            let perturbed = frob(&(&y - (model.a() + &delta) * s.x_minus()));
            assert!(perturbed >= best, "perturbation improved the fit");
        }
    }

    #[test]
    fn dmdc_unknown_recovers_both_operators() {
        let a_true = DMatrix::from_row_slice(2, 2, &[0.9, 0.15, -0.2, 0.85]);
        let b_true = DMatrix::from_row_slice(2, 2, &[0.1, 0.0, -0.05, 0.2]);
        let (states, inputs) = driven_record(&a_true, &b_true, 200, 17);
        let resolved = states.clone();
        let s = build_unknown_b(&resolved, &inputs, 0.1).unwrap();
        let model = dmdc_fit_unknown_b(&s).unwrap();
        assert!(max_abs_diff(model.a(), &a_true) < 1e-8);
        assert!(max_abs_diff(model.b().unwrap(), &b_true) < 1e-8);
    }

    #[test]
    fn dmdc_unknown_with_zero_inputs_degenerates_to_dmd() {
        let a_true = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.0, 0.8]);
        let m = 40;
        let mut states = DMatrix::zeros(2, m);
        let mut x = DVector::from_vec(vec![1.0, -0.7]);
        states.set_column(0, &x);
        for k in 0..m - 1 {
            x = &a_true * &x;
            states.set_column(k + 1, &x);
        }
        let zeros = DMatrix::zeros(2, m);
        let s = build_unknown_b(&states, &zeros, 0.1).unwrap();
        let model = dmdc_fit_unknown_b(&s).unwrap();
        let plain = dmd_fit(
            &states.columns(0, m - 1).into_owned(),
            &states.columns(1, m - 1).into_owned(),
            0.1,
        )
        .unwrap();
        // Zero input columns contribute nothing, and the minimum-norm rule
        // zeroes the input operator itself.
        assert!(max_abs_diff(model.a(), plain.a()) < 1e-9);
        assert!(model.b().unwrap().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn dmdc_unknown_rank_deficient_matches_projection_residual() {
        // Duplicate the first state row as the input: the stacked regressor
        // is rank deficient, and the attainable residual is the norm of the
        // target component outside the regressor row space.
        let a_true = DMatrix::from_row_slice(2, 2, &[0.95, 0.1, -0.1, 0.9]);
        let m = 60;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut states = DMatrix::zeros(2, m);
        let mut x = DVector::from_vec(vec![1.0, 0.0]);
        states.set_column(0, &x);
        for k in 0..m - 1 {
            // Mildly nonlinear step so the targets are not exactly linear.
            x = &a_true * &x
                + DVector::from_vec(vec![
                    0.01 * x[1] * x[1] + 0.002 * rng.random_range(-1.0..1.0),
                    -0.01 * x[0] * x[1],
                ]);
            states.set_column(k + 1, &x);
        }
        let inputs = states.rows(0, 1).into_owned();
        let s = build_unknown_b(&states, &inputs, 0.1).unwrap();
        let model = dmdc_fit_unknown_b(&s).unwrap();

        let n = s.pairs();
        let mut omega = DMatrix::zeros(3, n);
        omega.view_mut((0, 0), (2, n)).copy_from(s.x_minus());
        omega.view_mut((2, 0), (1, n)).copy_from(s.inputs().unwrap());
        let mut stacked = model.a().clone().insert_columns(2, 1, 0.0);
        stacked
            .view_mut((0, 2), (2, 1))
            .copy_from(model.b().unwrap());
        let achieved = frob(&(s.x_plus() - &stacked * &omega));

        // Independent residual: project the targets off the regressor row
        // space using the SVD of omega.
        let svd = omega.clone().svd(false, true);
        let v_t = svd.v_t.unwrap();
        let cutoff = PINV_RTOL * svd.singular_values.max();
        let mut proj = s.x_plus().clone();
        for i in 0..svd.singular_values.len() {
            if svd.singular_values[i] > cutoff {
                let dir = v_t.row(i).transpose();
                let coeff = s.x_plus() * &dir;
                proj -= coeff * dir.transpose();
            }
        }
        let oracle = frob(&proj);
        assert!(
            (achieved - oracle).abs() < 1e-10,
            "residual {achieved} differs from projection oracle {oracle}"
        );
    }

    #[test]
    fn rollout_identity_with_zero_control_is_constant() {
        let model = LinearModel::new(DMatrix::identity(2, 2), None, 0.1).unwrap();
        let x0 = DVector::from_vec(vec![1.5, -2.0]);
        let controls = DMatrix::zeros(2, 9);
        let out = linear_rollout(&model, &x0, &controls, 10).unwrap();
        for k in 0..10 {
            assert_eq!(out.column(k), x0.column(0));
        }
    }

    #[test]
    fn rollout_zero_operator_replays_scaled_forcing() {
        let model = LinearModel::new(DMatrix::zeros(2, 2), None, 0.5).unwrap();
        let x0 = DVector::from_vec(vec![9.0, 9.0]);
        let controls = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, -2.0, -3.0]);
        let out = linear_rollout(&model, &x0, &controls, 4).unwrap();
        for k in 1..4 {
            assert_eq!(out[(0, k)], controls[(0, k - 1)] * 0.5);
            assert_eq!(out[(1, k)], controls[(1, k - 1)] * 0.5);
        }
    }

    #[test]
    fn rollout_reproduces_its_own_training_data() {
        let a_true = DMatrix::from_row_slice(2, 2, &[0.9, 0.15, -0.2, 0.85]);
        let b_true = DMatrix::from_row_slice(2, 1, &[0.1, -0.07]);
        let (states, inputs) = driven_record(&a_true, &b_true, 80, 23);
        let s = build_unknown_b(&states, &inputs, 0.1).unwrap();
        let model = dmdc_fit_unknown_b(&s).unwrap();
        let x0 = states.column(0).into_owned();
        let out = linear_rollout(&model, &x0, &inputs, 80).unwrap();
        assert!(max_abs_diff(&out, &states) < 1e-6);
    }

    #[test]
    fn rollout_rejects_short_control_record() {
        let model = LinearModel::new(DMatrix::identity(2, 2), None, 0.1).unwrap();
        let x0 = DVector::zeros(2);
        let controls = DMatrix::zeros(2, 3);
        assert!(linear_rollout(&model, &x0, &controls, 10).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

        #[test]
        fn extra_regressors_never_hurt_the_residual(seed in 0u64..5000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let states = DMatrix::from_fn(2, 20, |_, _| rng.random_range(-1.0..1.0));
            let inputs = DMatrix::from_fn(1, 20, |_, _| rng.random_range(-1.0..1.0));
            let s = build_unknown_b(&states, &inputs, 0.1).unwrap();

            let plain = dmd_fit(
                &states.columns(0, 19).into_owned(),
                &states.columns(1, 19).into_owned(),
                0.1,
            ).unwrap();
            let with_b = dmdc_fit_unknown_b(&s).unwrap();

            let res_plain = frob(&(s.x_plus() - plain.a() * s.x_minus()));
            let res_b = frob(
                &(s.x_plus()
                    - with_b.a() * s.x_minus()
                    - with_b.b().unwrap() * s.inputs().unwrap()),
            );
            prop_assert!(res_b <= res_plain + 1e-9);
        }
    }
}
