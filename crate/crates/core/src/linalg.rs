//! Dense symmetric linear algebra for the small (p×p, m×m) systems that
//! appear in the estimators and test statistics. Matrices are row-major.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Relative condition-number threshold above which a Gram or weight matrix
/// is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, sorted in
/// decreasing order.
pub fn symmetric_eigenvalues<F: Scalar>(matrix: &[F], dim: usize) -> Vec<F> {
    assert_eq!(matrix.len(), dim * dim, "matrix is not {dim}x{dim}");
    let mut a = matrix.to_vec();
    let two = F::lit(2.0);
    for _sweep in 0..100 {
        let mut off = F::zero();
        for i in 0..dim {
            for j in (i + 1)..dim {
                off = off + a[i * dim + j] * a[i * dim + j];
            }
        }
        let scale: F = (0..dim).map(|i| a[i * dim + i] * a[i * dim + i]).sum::<F>() + off;
        if off <= F::epsilon() * F::epsilon() * scale || off == F::zero() {
            break;
        }
        for p in 0..dim {
            for q in (p + 1)..dim {
                let apq = a[p * dim + q];
                if apq == F::zero() {
                    continue;
                }
                let app = a[p * dim + p];
                let aqq = a[q * dim + q];
                let theta = (aqq - app) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + F::one()).sqrt());
                let c = F::one() / (t * t + F::one()).sqrt();
                let s = t * c;
                for k in 0..dim {
                    let akp = a[k * dim + p];
                    let akq = a[k * dim + q];
                    a[k * dim + p] = c * akp - s * akq;
                    a[k * dim + q] = s * akp + c * akq;
                }
                for k in 0..dim {
                    let apk = a[p * dim + k];
                    let aqk = a[q * dim + k];
                    a[p * dim + k] = c * apk - s * aqk;
                    a[q * dim + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<F> = (0..dim).map(|i| a[i * dim + i]).collect();
    eig.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    eig
}

/// Ratio of largest to smallest eigenvalue; infinite when the smallest is not
/// strictly positive.
pub fn condition_number<F: Scalar>(matrix: &[F], dim: usize) -> F {
    if dim == 0 {
        return F::one();
    }
    let eig = symmetric_eigenvalues(matrix, dim);
    let (hi, lo) = (eig[0], eig[dim - 1]);
    if lo <= F::zero() || !lo.is_finite() {
        F::infinity()
    } else {
        hi / lo
    }
}

fn cholesky<F: Scalar>(matrix: &[F], dim: usize) -> Option<Vec<F>> {
    let mut l = vec![F::zero(); dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let mut s = matrix[i * dim + j];
            for k in 0..j {
                s = s - l[i * dim + k] * l[j * dim + k];
            }
            if i == j {
                if s <= F::zero() || !s.is_finite() {
                    return None;
                }
                l[i * dim + i] = s.sqrt();
            } else {
                l[i * dim + j] = s / l[j * dim + j];
            }
        }
    }
    Some(l)
}

/// Solves `A x = b` for symmetric positive-definite `A`, rejecting systems
/// whose condition number exceeds [`MAX_CONDITION`].
pub fn solve_spd<F: Scalar>(matrix: &[F], rhs: &[F], dim: usize) -> Result<Vec<F>> {
    assert_eq!(rhs.len(), dim);
    if dim == 0 {
        return Ok(Vec::new());
    }
    let cond = condition_number(matrix, dim);
    if !(cond <= F::lit(MAX_CONDITION)) {
        return Err(Error::Singular(format!("condition number {} exceeds {MAX_CONDITION:e}", cond.as_f64())));
    }
    let l = cholesky(matrix, dim).ok_or_else(|| Error::Singular("matrix is not positive definite".into()))?;
    let mut y = vec![F::zero(); dim];
    for i in 0..dim {
        let mut s = rhs[i];
        for k in 0..i {
            s = s - l[i * dim + k] * y[k];
        }
        y[i] = s / l[i * dim + i];
    }
    let mut x = vec![F::zero(); dim];
    for i in (0..dim).rev() {
        let mut s = y[i];
        for k in (i + 1)..dim {
            s = s - l[k * dim + i] * x[k];
        }
        x[i] = s / l[i * dim + i];
    }
    Ok(x)
}

/// `v' A⁻¹ v` for symmetric positive-definite `A`.
pub fn inverse_quadratic_form<F: Scalar>(matrix: &[F], v: &[F], dim: usize) -> Result<F> {
    let x = solve_spd(matrix, v, dim)?;
    Ok(v.iter().zip(&x).map(|(a, b)| *a * *b).sum())
}
