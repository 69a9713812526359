//! Dense linear solves for the assembled stationarity systems.
//!
//! The system matrix is not symmetric in general (the fidelity block only
//! touches inlier rows), so we use LU with partial pivoting followed by a few
//! steps of iterative refinement.

use nalgebra::{DMatrix, DVector};

use crate::error::{HlrError, Result};

/// Left side `A` and right side `rhs` of a square linear system.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrices {
    pub a: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

const MAX_REFINEMENTS: usize = 3;

/// Relative residual bound accepted by [`solve_linear`].
pub const SOLVE_TOLERANCE: f64 = 1e-8;

fn residual(sys: &SystemMatrices, x: &DVector<f64>) -> DVector<f64> {
    &sys.rhs - &sys.a * x
}

/// Solves `A·w = rhs` with `‖A·w − rhs‖∞ ≤ 1e−8·(1 + ‖rhs‖∞)`.
///
/// Failure carries a pivot-ratio estimate of the condition number
/// (`max|u_ii| / min|u_ii|` of the LU factor).
pub fn solve_linear(sys: &SystemMatrices) -> Result<DVector<f64>> {
    let n = sys.a.nrows();
    if sys.a.ncols() != n || sys.rhs.len() != n {
        return Err(HlrError::dimension(format!(
            "system is {} × {} with a right side of length {}",
            n,
            sys.a.ncols(),
            sys.rhs.len()
        )));
    }
    if sys.a.iter().chain(sys.rhs.iter()).any(|v| !v.is_finite()) {
        return Err(HlrError::Solver {
            condition: f64::NAN,
            reason: "system contains non-finite entries".into(),
        });
    }
    if n == 0 {
        return Ok(DVector::zeros(0));
    }
    let lu = sys.a.clone().lu();
    let diag = lu.u().diagonal().map(f64::abs);
    let condition = if diag.min() > 0.0 {
        diag.max() / diag.min()
    } else {
        f64::INFINITY
    };
    let mut x = lu.solve(&sys.rhs).ok_or_else(|| HlrError::Solver {
        condition,
        reason: "matrix is singular".into(),
    })?;
    let tol = SOLVE_TOLERANCE * (1.0 + sys.rhs.amax());
    let mut r = residual(sys, &x);
    for _ in 0..MAX_REFINEMENTS {
        if r.amax() <= tol {
            break;
        }
        if let Some(dx) = lu.solve(&r) {
            x += dx;
        }
        r = residual(sys, &x);
    }
    if x.iter().any(|v| !v.is_finite()) || r.amax() > tol {
        return Err(HlrError::Solver {
            condition,
            reason: format!("residual {:.3e} exceeds tolerance {tol:.3e}", r.amax()),
        });
    }
    Ok(x)
}
