//! Regression objectives for the memory-corrected model, with exact
//! gradients.
//!
//! With a known input operator the objective over snapshot pairs is
//!
//! ```text
//! J(A) = || Y - A x_minus + dt^2 K(A, n) ||_F^2,    Y = x_plus - dt W,
//! ```
//!
//! and with an input operator to identify it is
//!
//! ```text
//! J(A, B) = || x_plus - A x_minus + dt^2 K(A, n) - B V ||_F^2,
//! ```
//!
//! where `K(A, n)` is the memory correction of [`crate::memory`], one column
//! per pair. A zero seed `n` removes the correction entirely and both
//! objectives collapse to the plain least-squares residual.
//!
//! The gradients run the forward evaluation in reverse: residual, correction
//! solve, column recurrence, transfer operator, and matrix exponential each
//! contribute their adjoint, so the result is exact to rounding rather than a
//! finite-difference estimate. The exponential term uses the pairing
//! `<G, L(C, S)> = <L(C^T, G), S>` between a perturbation `S` and a cotangent
//! `G`, evaluated with [`crate::expm::matrix_exponential_frechet`].

use nalgebra::{DMatrix, DVector};

use crate::error::OpcError;
use crate::expm::matrix_exponential_frechet;
use crate::memory::{
    assert_invertible, memory_operators, memory_recurrence, MemoryOperators, RecurrenceTrace,
};
use crate::snapshots::{corrected_targets, SnapshotSet};

/// Everything the reverse sweep needs from an active-seed forward pass.
struct MemoryEval {
    ops: MemoryOperators,
    trace: RecurrenceTrace,
    /// `K = (A - I)^-1 F`, `dim x pairs`.
    correction: DMatrix<f64>,
}

fn check_shapes(
    a: &DMatrix<f64>,
    s: &SnapshotSet,
    n_vec: &DVector<f64>,
) -> Result<(), OpcError> {
    if a.nrows() != a.ncols() || a.nrows() != s.dim() {
        return Err(OpcError::ShapeMismatch(format!(
            "operator is {}x{}, snapshots have dimension {}",
            a.nrows(),
            a.ncols(),
            s.dim()
        )));
    }
    if n_vec.len() != s.dim() {
        return Err(OpcError::ShapeMismatch(format!(
            "memory seed has length {}, snapshots have dimension {}",
            n_vec.len(),
            s.dim()
        )));
    }
    Ok(())
}

/// Forward memory evaluation, or `None` for a zero seed.
fn eval_memory(
    a: &DMatrix<f64>,
    n_vec: &DVector<f64>,
    pairs: usize,
) -> Result<Option<MemoryEval>, OpcError> {
    if n_vec.iter().all(|v| *v == 0.0) {
        return Ok(None);
    }
    let ops = memory_operators(a)?;
    assert_invertible(&ops.c, "A - I")?;
    let trace = memory_recurrence(&ops, n_vec, pairs);
    let correction = ops
        .c
        .clone()
        .lu()
        .solve(&trace.f)
        .ok_or_else(|| OpcError::SingularMatrix("A - I".into()))?;
    Ok(Some(MemoryEval {
        ops,
        trace,
        correction,
    }))
}

fn residual_known(
    a: &DMatrix<f64>,
    s: &SnapshotSet,
    n_vec: &DVector<f64>,
) -> Result<(DMatrix<f64>, Option<MemoryEval>), OpcError> {
    check_shapes(a, s, n_vec)?;
    let y = corrected_targets(s)?;
    let mem = eval_memory(a, n_vec, s.pairs())?;
    let mut r = y - a * s.x_minus();
    if let Some(mem) = &mem {
        r += &mem.correction * (s.dt() * s.dt());
    }
    Ok((r, mem))
}

fn residual_unknown(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    s: &SnapshotSet,
    n_vec: &DVector<f64>,
) -> Result<(DMatrix<f64>, Option<MemoryEval>), OpcError> {
    check_shapes(a, s, n_vec)?;
    let v = s.inputs()?;
    if b.nrows() != s.dim() || b.ncols() != v.nrows() {
        return Err(OpcError::ShapeMismatch(format!(
            "input operator is {}x{}, need {}x{}",
            b.nrows(),
            b.ncols(),
            s.dim(),
            v.nrows()
        )));
    }
    let mem = eval_memory(a, n_vec, s.pairs())?;
    let mut r = s.x_plus() - a * s.x_minus() - b * v;
    if let Some(mem) = &mem {
        r += &mem.correction * (s.dt() * s.dt());
    }
    Ok((r, mem))
}

/// Adjoint of the memory correction with respect to `A`, given the residual
/// cotangent `r_bar = 2 R` and the squared step.
fn memory_adjoint(
    mem: &MemoryEval,
    r_bar: &DMatrix<f64>,
    dt_sq: f64,
) -> Result<DMatrix<f64>, OpcError> {
    let ops = &mem.ops;
    let trace = &mem.trace;
    let d = ops.c.nrows();
    let pairs = trace.f.ncols();

    // K = C^-1 F enters the residual as +dt^2 K, so K_bar = dt^2 r_bar,
    // F_bar = C^-T K_bar, and the solve itself contributes -F_bar K^T to
    // C_bar.
    let k_bar = r_bar * dt_sq;
    let f_bar = ops
        .c
        .transpose()
        .lu()
        .solve(&k_bar)
        .ok_or_else(|| OpcError::SingularMatrix("A - I".into()))?;
    let mut c_bar = -&f_bar * mem.correction.transpose();

    // Reverse column recurrence: F_j = a_j - b_j with a_j = T a_{j-1} and
    // b_j = E b_{j-1} accumulates outer products into T_bar and E_bar while
    // the vector cotangents flow down to j = 1.
    let mut t_bar = DMatrix::zeros(d, d);
    let mut e_bar = DMatrix::zeros(d, d);
    if pairs > 1 {
        let mut a_bar: DVector<f64> = f_bar.column(pairs - 1).into_owned();
        let mut b_bar: DVector<f64> = -f_bar.column(pairs - 1).into_owned();
        for j in (1..pairs).rev() {
            t_bar += &a_bar * trace.a_states[j - 1].transpose();
            e_bar += &b_bar * trace.b_states[j - 1].transpose();
            if j > 1 {
                a_bar = ops.t.transpose() * a_bar + f_bar.column(j - 1);
                b_bar = ops.e.transpose() * b_bar - f_bar.column(j - 1);
            }
        }
    }

    // T = E M.
    e_bar += &t_bar * ops.m.transpose();
    let m_bar = ops.e.transpose() * &t_bar;

    // M = I - 2 C D with D = (A + I)^-1, and D itself depends on A through
    // dD = -D dA D.
    let d_t = ops.p_inv.transpose();
    c_bar += -2.0 * &m_bar * &d_t + 2.0 * &d_t * ops.c.transpose() * &m_bar * &d_t;

    // E = exp(C): pull e_bar back through the exponential.
    let (_, frechet) = matrix_exponential_frechet(&ops.c.transpose(), &e_bar)?;
    c_bar += frechet;

    // C = A - I, so c_bar is already the contribution to a_bar.
    Ok(c_bar)
}

/// Objective value for a known input operator.
pub fn objective_known_b(
    a: &DMatrix<f64>,
    s: &SnapshotSet,
    n_vec: &DVector<f64>,
) -> Result<f64, OpcError> {
    let (r, _) = residual_known(a, s, n_vec)?;
    Ok(r.norm_squared())
}

/// Objective value for an unknown input operator.
pub fn objective_unknown_b(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    s: &SnapshotSet,
    n_vec: &DVector<f64>,
) -> Result<f64, OpcError> {
    let (r, _) = residual_unknown(a, b, s, n_vec)?;
    Ok(r.norm_squared())
}

/// Objective value and its gradient in `A` for a known input operator.
pub fn gradient_known_b(
    a: &DMatrix<f64>,
    s: &SnapshotSet,
    n_vec: &DVector<f64>,
) -> Result<(f64, DMatrix<f64>), OpcError> {
    let (r, mem) = residual_known(a, s, n_vec)?;
    let value = r.norm_squared();
    let r_bar = r * 2.0;
    let mut a_bar = -(&r_bar) * s.x_minus().transpose();
    if let Some(mem) = &mem {
        a_bar += memory_adjoint(mem, &r_bar, s.dt() * s.dt())?;
    }
    Ok((value, a_bar))
}

/// Objective value and its gradients in `A` and `B` for an unknown input
/// operator.
pub fn gradient_unknown_b(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    s: &SnapshotSet,
    n_vec: &DVector<f64>,
) -> Result<(f64, DMatrix<f64>, DMatrix<f64>), OpcError> {
    let (r, mem) = residual_unknown(a, b, s, n_vec)?;
    let value = r.norm_squared();
    let r_bar = r * 2.0;
    let mut a_bar = -(&r_bar) * s.x_minus().transpose();
    if let Some(mem) = &mem {
        a_bar += memory_adjoint(mem, &r_bar, s.dt() * s.dt())?;
    }
    let b_bar = -(&r_bar) * s.inputs()?.transpose();
    Ok((value, a_bar, b_bar))
}
