//! Dense matrix exponential via Pade approximation with scaling and squaring,
//! plus the directional (Frechet) derivative.
//!
//! The [13/13] diagonal Pade approximant is accurate to double precision for
//! matrices with 1-norm up to ~5.37 (Higham, "The scaling and squaring method
//! for the matrix exponential revisited", 2005). Larger inputs are scaled by
//! a power of two, approximated, and squared back. The matrices in this crate
//! are tiny (at most 8x8 for the derivative), so the plain single-approximant
//! variant is used instead of the degree-laddered one.

use nalgebra::DMatrix;

use crate::error::OpcError;

/// 1-norm bound under which the [13/13] approximant is full-precision.
const THETA_13: f64 = 5.371920351148152;

/// Pade coefficients b_0..b_13 of the [13/13] approximant to exp.
const PADE_13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

fn one_norm(a: &DMatrix<f64>) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `exp(X)` for a square matrix with finite entries.
pub fn matrix_exponential(x: &DMatrix<f64>) -> Result<DMatrix<f64>, OpcError> {
    if x.nrows() != x.ncols() {
        return Err(OpcError::ShapeMismatch(format!(
            "matrix exponential needs a square matrix, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(OpcError::InvalidParameter(
            "matrix exponential input must be finite".into(),
        ));
    }

    let norm = one_norm(x);
    let squarings = if norm <= THETA_13 {
        0
    } else {
        (norm / THETA_13).log2().ceil() as u32
    };
    let scaled = x / 2f64.powi(squarings as i32);

    // exp(A) ~ (-U + V)^-1 (U + V) with U odd and V even in A.
    let n = x.nrows();
    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;

    let u_inner = &a6 * (PADE_13[13] * &a6 + PADE_13[11] * &a4 + PADE_13[9] * &a2)
        + PADE_13[7] * &a6
        + PADE_13[5] * &a4
        + PADE_13[3] * &a2
        + PADE_13[1] * &ident;
    let u = &scaled * u_inner;
    let v = &a6 * (PADE_13[12] * &a6 + PADE_13[10] * &a4 + PADE_13[8] * &a2)
        + PADE_13[6] * &a6
        + PADE_13[4] * &a4
        + PADE_13[2] * &a2
        + PADE_13[0] * &ident;

    let lhs = &v - &u;
    let rhs = &v + &u;
    let mut result = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| OpcError::Numerical("Pade denominator is singular".into()))?;
    for _ in 0..squarings {
        result = &result * &result;
    }
    Ok(result)
}

/// `exp(X)` together with its Frechet derivative `L(X, E)`, the directional
/// derivative of the exponential at `X` in direction `E`.
///
/// Uses the block identity
///
/// ```text
/// exp([X  E;  0  X]) = [exp(X)  L(X, E);  0  exp(X)]
/// ```
///
/// which delegates error control to [`matrix_exponential`] on the doubled
/// system.
pub fn matrix_exponential_frechet(
    x: &DMatrix<f64>,
    e: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>), OpcError> {
    if x.shape() != e.shape() || x.nrows() != x.ncols() {
        return Err(OpcError::ShapeMismatch(format!(
            "derivative direction must match the {}x{} base matrix, got {}x{}",
            x.nrows(),
            x.ncols(),
            e.nrows(),
            e.ncols()
        )));
    }
    let n = x.nrows();
    let mut block = DMatrix::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(x);
    block.view_mut((0, n), (n, n)).copy_from(e);
    block.view_mut((n, n), (n, n)).copy_from(x);
    let big = matrix_exponential(&block)?;
    let value = big.view((0, 0), (n, n)).into_owned();
    let derivative = big.view((0, n), (n, n)).into_owned();
    Ok((value, derivative))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let z = DMatrix::<f64>::zeros(3, 3);
        let e = matrix_exponential(&z).unwrap();
        assert_eq!(e, DMatrix::<f64>::identity(3, 3));
    }

    #[test]
    fn exp_of_diagonal_matches_scalar_exp() {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-0.5, 2.0, 9.5]));
        let e = matrix_exponential(&d).unwrap();
        for (i, lam) in [-0.5f64, 2.0, 9.5].into_iter().enumerate() {
            let rel = (e[(i, i)] - lam.exp()).abs() / lam.exp();
            assert!(rel < 1e-13, "diagonal entry {i} off by {rel:e}");
        }
        assert_abs_diff_eq!(e[(0, 1)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn exp_of_rotation_generator() {
        // exp(theta * J) with J = [0 -1; 1 0] is a rotation by theta.
        let theta = 0.7f64;
        let j = DMatrix::from_row_slice(2, 2, &[0.0, -theta, theta, 0.0]);
        let e = matrix_exponential(&j).unwrap();
        assert_abs_diff_eq!(e[(0, 0)], theta.cos(), epsilon = 1e-14);
        assert_abs_diff_eq!(e[(1, 0)], theta.sin(), epsilon = 1e-14);
        assert_abs_diff_eq!(e[(0, 1)], -theta.sin(), epsilon = 1e-14);
    }

    #[test]
    fn large_norm_agrees_with_half_argument_squared() {
        let x = DMatrix::from_row_slice(2, 2, &[4.0, -3.0, 2.5, 1.0]);
        let whole = matrix_exponential(&x).unwrap();
        let half = matrix_exponential(&(&x * 0.5)).unwrap();
        let squared = &half * &half;
        let scale = one_norm(&whole).max(1.0);
        assert!(max_abs_diff(&whole, &squared) / scale < 1e-12);
    }

    #[test]
    fn rejects_non_finite_input() {
        let x = DMatrix::from_row_slice(2, 2, &[0.0, f64::NAN, 0.0, 0.0]);
        assert!(matrix_exponential(&x).is_err());
        let y = DMatrix::from_row_slice(1, 1, &[f64::INFINITY]);
        assert!(matrix_exponential(&y).is_err());
    }

    #[test]
    fn rejects_rectangular_input() {
        let x = DMatrix::<f64>::zeros(2, 3);
        assert!(matrix_exponential(&x).is_err());
    }

    #[test]
    fn frechet_in_identity_direction_is_exp_itself() {
        // d/dt exp(X + tI) = exp(X) at t = 0 because I commutes with X.
        let x = DMatrix::from_row_slice(2, 2, &[0.3, -1.1, 0.7, -0.2]);
        let (value, deriv) = matrix_exponential_frechet(&x, &DMatrix::identity(2, 2)).unwrap();
        assert!(max_abs_diff(&value, &deriv) < 1e-13);
    }

    #[test]
    fn frechet_at_zero_is_the_direction() {
        let z = DMatrix::<f64>::zeros(3, 3);
        let e = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        let (_, deriv) = matrix_exponential_frechet(&z, &e).unwrap();
        assert!(max_abs_diff(&deriv, &e) < 1e-13);
    }

    #[test]
    fn frechet_matches_central_differences() {
        let x = DMatrix::from_row_slice(2, 2, &[0.1, 0.9, -0.4, -0.6]);
        let e = DMatrix::from_row_slice(2, 2, &[0.5, -0.2, 0.8, 0.3]);
        let (_, deriv) = matrix_exponential_frechet(&x, &e).unwrap();
        let h = 1e-6;
        let plus = matrix_exponential(&(&x + &e * h)).unwrap();
        let minus = matrix_exponential(&(&x - &e * h)).unwrap();
        let fd = (plus - minus) / (2.0 * h);
        assert!(max_abs_diff(&deriv, &fd) < 1e-8);
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

        #[test]
        fn exp_times_exp_of_negation_is_identity(
            entries in proptest::collection::vec(-1.0f64..1.0, 4)
        ) {
            let x = DMatrix::from_row_slice(2, 2, &entries);
            let e = matrix_exponential(&x).unwrap();
            let e_neg = matrix_exponential(&(-&x)).unwrap();
            let prod = &e * &e_neg;
            prop_assert!(max_abs_diff(&prod, &DMatrix::identity(2, 2)) < 1e-10);
        }
    }
}
