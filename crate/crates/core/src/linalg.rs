//! Dense solves and the probability-simplex projection shared by the solver blocks.

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

fn to_nalgebra(a: ArrayView2<'_, f64>) -> DMatrix<f64> {
    let (r, c) = a.dim();
    DMatrix::from_fn(r, c, |i, j| a[[i, j]])
}

fn from_nalgebra(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Solves `A X = B` for symmetric positive definite `A`.
///
/// Falls back to LU when the Cholesky factorization rejects the matrix, which
/// only happens for systems that are PD in exact arithmetic but lose it to
/// rounding.
pub fn solve_spd(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let (n, m) = a.dim();
    if n != m || b.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "system {}x{} with right-hand side {}x{}",
            n,
            m,
            b.nrows(),
            b.ncols()
        )));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Solve("non-finite entries in linear system".into()));
    }
    let lhs = to_nalgebra(a);
    let rhs = to_nalgebra(b);
    let x = match lhs.clone().cholesky() {
        Some(chol) => chol.solve(&rhs),
        None => lhs
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Solve("singular system".into()))?,
    };
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Solve("non-finite solution".into()));
    }
    Ok(from_nalgebra(&x))
}

/// Solves a general square system `A x = b` (small, used by the view-weight Newton step).
pub fn solve_general(a: ArrayView2<'_, f64>, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::DimensionMismatch("general solve".into()));
    }
    let lhs = to_nalgebra(a);
    let rhs = nalgebra::DVector::from_column_slice(b);
    let x = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Solve("singular system".into()))?;
    Ok(x.iter().copied().collect())
}

/// Euclidean projection of `v` onto the probability simplex `{y >= 0, sum y = 1}`.
///
/// Sort-based threshold search; exact up to one rounding of the final subtraction.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    if n == 0 {
        return Vec::new();
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (k as f64 + 1.0);
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    let mut out: Vec<f64> = v.iter().map(|&x| (x - theta).max(0.0)).collect();
    // Push the residual rounding error onto the largest coordinate.
    let sum: f64 = out.iter().sum();
    if sum > 0.0 && (sum - 1.0).abs() > 0.0 {
        let (imax, _) = out
            .iter()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, &x)| if x > acc.1 { (i, x) } else { acc },
            );
        out[imax] += 1.0 - sum;
        if out[imax] < 0.0 {
            out[imax] = 0.0;
        }
    }
    out
}
