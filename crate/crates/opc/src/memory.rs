//! Discrete memory operator for one-step linear models.
//!
//! For a candidate one-step operator `A` (resolved block, sampling step
//! absorbed), the memory transfer operator is the Cayley-type map
//!
//! ```text
//! M(A) = I - 2 (A - I)(A + I)^-1
//! ```
//!
//! and the memory column attached to snapshot pair `j` is
//!
//! ```text
//! F_j = exp(j (A - I)) (M(A)^j - I) n,     F_0 = 0,
//! ```
//!
//! where `n` is the memory seed vector standing in for the unresolved initial
//! data. Because `exp(A - I)` and `M(A)` are both functions of `A` they
//! commute, so the columns satisfy the two-term recurrence
//!
//! ```text
//! a_j = (exp(A - I) M(A)) a_{j-1},   b_j = exp(A - I) b_{j-1},
//! a_0 = b_0 = n,                     F_j = a_j - b_j,
//! ```
//!
//! which costs two small matrix-vector products per pair instead of fresh
//! matrix functions at every `j`. The memory correction that enters the
//! regression residual is `(A - I)^-1 F`.
//!
//! Both `A + I` (inside the transfer operator) and `A - I` (inside the
//! correction) must be invertible; eigenvalues at -1 or +1 raise
//! [`OpcError::SingularMatrix`] rather than being regularized away.

use nalgebra::{DMatrix, DVector};

use crate::error::OpcError;
use crate::expm::matrix_exponential;

/// Relative floor under which a singular value counts as zero.
const SINGULARITY_RTOL: f64 = 1e-13;

/// Errors with `what` if `x` is singular or numerically close to it.
pub(crate) fn assert_invertible(x: &DMatrix<f64>, what: &str) -> Result<(), OpcError> {
    let sv = x.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    if !smin.is_finite() || smin <= SINGULARITY_RTOL * smax.max(1.0) {
        return Err(OpcError::SingularMatrix(format!(
            "{what} has smallest singular value {smin:e}"
        )));
    }
    Ok(())
}

/// The operators shared by every memory evaluation at a fixed `A`.
pub(crate) struct MemoryOperators {
    /// `A - I`.
    pub c: DMatrix<f64>,
    /// `(A + I)^-1`.
    pub p_inv: DMatrix<f64>,
    /// `exp(A - I)`.
    pub e: DMatrix<f64>,
    /// `M(A)`.
    pub m: DMatrix<f64>,
    /// `exp(A - I) M(A)`, the propagator of the `a`-sequence.
    pub t: DMatrix<f64>,
}

pub(crate) fn memory_operators(a: &DMatrix<f64>) -> Result<MemoryOperators, OpcError> {
    if a.nrows() != a.ncols() {
        return Err(OpcError::ShapeMismatch(format!(
            "operator must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    let ident = DMatrix::<f64>::identity(n, n);
    let plus = a + &ident;
    assert_invertible(&plus, "A + I")?;
    let p_inv = plus
        .lu()
        .try_inverse()
        .ok_or_else(|| OpcError::SingularMatrix("A + I".into()))?;
    let c = a - &ident;
    let m = &ident - 2.0 * &c * &p_inv;
    let e = matrix_exponential(&c)?;
    let t = &e * &m;
    Ok(MemoryOperators { c, p_inv, e, m, t })
}

/// The memory transfer operator `M(A) = I - 2 (A - I)(A + I)^-1`.
pub fn memory_transfer(a: &DMatrix<f64>) -> Result<DMatrix<f64>, OpcError> {
    Ok(memory_operators(a)?.m)
}

/// Forward sweep of the column recurrence with its intermediate states kept,
/// so the gradient can run the same recurrence backwards.
pub(crate) struct RecurrenceTrace {
    /// Columns `F_0 .. F_{pairs-1}`, `dim x pairs`.
    pub f: DMatrix<f64>,
    /// `a_j` for `j = 0 .. pairs-1`.
    pub a_states: Vec<DVector<f64>>,
    /// `b_j` for `j = 0 .. pairs-1`.
    pub b_states: Vec<DVector<f64>>,
}

pub(crate) fn memory_recurrence(
    ops: &MemoryOperators,
    n_vec: &DVector<f64>,
    pairs: usize,
) -> RecurrenceTrace {
    let d = n_vec.len();
    let mut f = DMatrix::zeros(d, pairs);
    let mut a_states = Vec::with_capacity(pairs);
    let mut b_states = Vec::with_capacity(pairs);
    a_states.push(n_vec.clone());
    b_states.push(n_vec.clone());
    for j in 1..pairs {
        let a_vec = &ops.t * &a_states[j - 1];
        let b_vec = &ops.e * &b_states[j - 1];
        f.set_column(j, &(&a_vec - &b_vec));
        a_states.push(a_vec);
        b_states.push(b_vec);
    }
    RecurrenceTrace {
        f,
        a_states,
        b_states,
    }
}

/// Memory columns `F = [0, F_1, ..., F_{m-2}]` (`dim x (m-1)`) for a record
/// of `m` snapshots, evaluated through the two-term recurrence.
pub fn memory_columns(
    a: &DMatrix<f64>,
    n_vec: &DVector<f64>,
    m: usize,
) -> Result<DMatrix<f64>, OpcError> {
    if m < 2 {
        return Err(OpcError::InvalidParameter(format!(
            "memory columns need at least 2 snapshots, got {m}"
        )));
    }
    if n_vec.len() != a.nrows() {
        return Err(OpcError::ShapeMismatch(format!(
            "seed has length {}, operator is {}x{}",
            n_vec.len(),
            a.nrows(),
            a.ncols()
        )));
    }
    let ops = memory_operators(a)?;
    Ok(memory_recurrence(&ops, n_vec, m - 1).f)
}

/// Memory correction `(A - I)^-1 F(A, n)`, the term subtracted (scaled by
/// `dt^2`) from the one-step prediction. A zero seed short-circuits to the
/// zero matrix without touching `A - I`, so memoryless fits never trip over
/// an eigenvalue at 1.
pub fn memory_correction(
    a: &DMatrix<f64>,
    n_vec: &DVector<f64>,
    m: usize,
) -> Result<DMatrix<f64>, OpcError> {
    if m < 2 {
        return Err(OpcError::InvalidParameter(format!(
            "memory correction needs at least 2 snapshots, got {m}"
        )));
    }
    if n_vec.len() != a.nrows() || a.nrows() != a.ncols() {
        return Err(OpcError::ShapeMismatch(format!(
            "seed has length {}, operator is {}x{}",
            n_vec.len(),
            a.nrows(),
            a.ncols()
        )));
    }
    if n_vec.iter().all(|v| *v == 0.0) {
        return Ok(DMatrix::zeros(a.nrows(), m - 1));
    }
    let f = memory_columns(a, n_vec, m)?;
    let c = a - DMatrix::<f64>::identity(a.nrows(), a.ncols());
    assert_invertible(&c, "A - I")?;
    c.lu()
        .solve(&f)
        .ok_or_else(|| OpcError::SingularMatrix("A - I".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Direct evaluation `F_j = exp(jC)(M^j - I)n` with fresh matrix
    /// functions at every `j`; the slow reference for the recurrence.
    fn direct_columns(a: &DMatrix<f64>, n_vec: &DVector<f64>, m: usize) -> DMatrix<f64> {
        let d = a.nrows();
        let ident = DMatrix::<f64>::identity(d, d);
        let c = a - &ident;
        let m_op = memory_transfer(a).unwrap();
        let mut f = DMatrix::zeros(d, m - 1);
        let mut m_pow = ident.clone();
        for j in 1..m - 1 {
            m_pow = &m_pow * &m_op;
            let e_j = matrix_exponential(&(&c * j as f64)).unwrap();
            f.set_column(j, &(&e_j * (&m_pow - &ident) * n_vec));
        }
        f
    }

    /// Conjugates the rotation-scaled pair `re +/- i*im` by `s`.
    fn from_complex_pair(re: f64, im: f64, s: &DMatrix<f64>) -> DMatrix<f64> {
        let core = DMatrix::from_row_slice(2, 2, &[re, im, -im, re]);
        let s_inv = s.clone().try_inverse().unwrap();
        s * core * s_inv
    }

    #[test]
    fn transfer_fixes_identity() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        assert_eq!(memory_transfer(&i2).unwrap(), i2);
    }

    #[test]
    fn transfer_at_zero_is_three_i() {
        let z = DMatrix::<f64>::zeros(3, 3);
        let m = memory_transfer(&z).unwrap();
        assert_eq!(m, DMatrix::<f64>::identity(3, 3) * 3.0);
    }

    #[test]
    fn transfer_scalar_values() {
        let m = memory_transfer(&DMatrix::from_row_slice(1, 1, &[3.0])).unwrap();
        assert_abs_diff_eq!(m[(0, 0)], 0.0, epsilon = 1e-15);
        let m = memory_transfer(&DMatrix::from_row_slice(1, 1, &[0.5])).unwrap();
        assert_abs_diff_eq!(m[(0, 0)], 5.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn transfer_rejects_eigenvalue_minus_one() {
        let a = -DMatrix::<f64>::identity(2, 2);
        assert!(matches!(
            memory_transfer(&a),
            Err(OpcError::SingularMatrix(_))
        ));
        let b = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 0.5]));
        assert!(memory_transfer(&b).is_err());
    }

    #[test]
    fn columns_start_at_zero_and_vanish_for_zero_seed() {
        let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, -0.1, 0.95]);
        let zero_seed = DVector::zeros(2);
        let f = memory_columns(&a, &zero_seed, 6).unwrap();
        assert!(f.iter().all(|v| *v == 0.0));

        let seed = DVector::from_vec(vec![1.0, -2.0]);
        let f = memory_columns(&a, &seed, 6).unwrap();
        assert_eq!(f.column(0), DVector::zeros(2).column(0));
        assert!(f.column(1).iter().any(|v| *v != 0.0));
    }

    #[test]
    fn columns_vanish_at_identity_operator() {
        let a = DMatrix::<f64>::identity(2, 2);
        let seed = DVector::from_vec(vec![0.7, -0.3]);
        let f = memory_columns(&a, &seed, 8).unwrap();
        assert!(f.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn scalar_first_column_value() {
        // A = 0.5: M = 5/3, F_1 = e^{-1/2} (5/3 - 1) = 0.40435377314175...
        let a = DMatrix::from_row_slice(1, 1, &[0.5]);
        let seed = DVector::from_vec(vec![1.0]);
        let f = memory_columns(&a, &seed, 3).unwrap();
        assert_eq!(f[(0, 0)], 0.0);
        let oracle = (-0.5f64).exp() * (5.0 / 3.0 - 1.0);
        assert_abs_diff_eq!(f[(0, 1)], oracle, epsilon = 1e-14);
        assert_abs_diff_eq!(f[(0, 1)], 0.4043537731417556, epsilon = 1e-13);
    }

    #[test]
    fn columns_reject_degenerate_shapes() {
        let a = DMatrix::<f64>::identity(2, 2);
        let seed = DVector::from_vec(vec![1.0, 0.0]);
        assert!(memory_columns(&a, &seed, 1).is_err());
        let bad_seed = DVector::from_vec(vec![1.0]);
        assert!(memory_columns(&a, &bad_seed, 5).is_err());
    }

    #[test]
    fn correction_short_circuits_zero_seed_even_at_identity() {
        // A = I makes A - I singular, but a zero seed never touches it.
        let a = DMatrix::<f64>::identity(2, 2);
        let zero_seed = DVector::zeros(2);
        let corr = memory_correction(&a, &zero_seed, 7).unwrap();
        assert!(corr.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn correction_rejects_eigenvalue_one_with_nonzero_seed() {
        let a = DMatrix::<f64>::identity(2, 2);
        let seed = DVector::from_vec(vec![1.0, 0.0]);
        assert!(matches!(
            memory_correction(&a, &seed, 7),
            Err(OpcError::SingularMatrix(_))
        ));
    }

    #[test]
    fn correction_scalar_value() {
        // (A - I)^-1 = -2 at A = 0.5, so the first active column is -2 F_1.
        let a = DMatrix::from_row_slice(1, 1, &[0.5]);
        let seed = DVector::from_vec(vec![1.0]);
        let corr = memory_correction(&a, &seed, 3).unwrap();
        let oracle = -2.0 * (-0.5f64).exp() * (5.0 / 3.0 - 1.0);
        assert_abs_diff_eq!(corr[(0, 1)], oracle, epsilon = 1e-14);
        assert_abs_diff_eq!(corr[(0, 1)], -0.8087075462835112, epsilon = 1e-13);
    }

    #[test]
    fn recurrence_matches_direct_matrix_functions() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, -0.3, 0.8]);
        for (re, im) in [(0.99, 0.05), (1.0, 0.3), (0.98, 0.66), (1.02, 0.6)] {
            let a = from_complex_pair(re, im, &s);
            let seed = DVector::from_vec(vec![0.8, -1.1]);
            let rec = memory_columns(&a, &seed, 200).unwrap();
            let dir = direct_columns(&a, &seed, 200);
            let worst = (&rec - &dir)
                .iter()
                .fold(0.0f64, |acc, v| acc.max(v.abs()));
            assert!(
                worst < 1e-10,
                "recurrence deviates from direct evaluation by {worst:e} at re={re}, im={im}"
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

        #[test]
        fn doubling_the_seed_doubles_the_correction(
            re in 0.98f64..1.03,
            im in 0.05f64..0.5,
            n1 in -2.0f64..2.0,
            n2 in -2.0f64..2.0,
        ) {
            let s = DMatrix::from_row_slice(2, 2, &[0.9, -0.2, 0.25, 1.1]);
            let a = from_complex_pair(re, im, &s);
            let seed = DVector::from_vec(vec![n1, n2]);
            let doubled = DVector::from_vec(vec![2.0 * n1, 2.0 * n2]);
            let one = memory_correction(&a, &seed, 40).unwrap();
            let two = memory_correction(&a, &doubled, 40).unwrap();
            // Scaling by 2 is exact in binary floating point, end to end.
            prop_assert_eq!(&one * 2.0, two);
        }

        #[test]
        fn recurrence_matches_direct_on_random_near_unit_operators(
            re in 0.98f64..1.03,
            im in 0.05f64..0.6,
            sd in -0.5f64..0.5,
        ) {
            let s = DMatrix::from_row_slice(2, 2, &[1.0, sd, -sd, 1.0]);
            let a = from_complex_pair(re, im, &s);
            let seed = DVector::from_vec(vec![1.0, 0.5]);
            let rec = memory_columns(&a, &seed, 80).unwrap();
            let dir = direct_columns(&a, &seed, 80);
            let worst = (&rec - &dir).iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            prop_assert!(worst < 1e-10, "deviation {worst:e}");
        }
    }
}
