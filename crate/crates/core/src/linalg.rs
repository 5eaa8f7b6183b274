//! Small dense linear algebra over [`Scalar`], plus f64 spectral helpers.

use nalgebra::DMatrix;

use crate::tower::Scalar;

pub type Matrix<S> = Vec<Vec<S>>;

/// Gauss-Jordan inverse with partial pivoting on the primal values.
///
/// Returns the inverse and the determinant, or `None` when a pivot is exactly
/// zero.
pub fn invert<S: Scalar>(a: &[Vec<S>]) -> Option<(Matrix<S>, S)> {
    let n = a.len();
    let mut m: Matrix<S> = a.to_vec();
    let mut inv: Matrix<S> = (0..n)
        .map(|i| (0..n).map(|j| S::cst(if i == j { 1.0 } else { 0.0 })).collect())
        .collect();
    let mut det = S::cst(1.0);
    for col in 0..n {
        let pivot = (col..n).max_by(|&p, &q| m[p][col].re().abs().total_cmp(&m[q][col].re().abs()))?;
        if m[pivot][col].re() == 0.0 {
            return None;
        }
        if pivot != col {
            m.swap(pivot, col);
            inv.swap(pivot, col);
            det = -det;
        }
        let p = m[col][col].clone();
        det = det * p.clone();
        let r = p.recip();
        for j in 0..n {
            m[col][j] = m[col][j].clone() * r.clone();
            inv[col][j] = inv[col][j].clone() * r.clone();
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let f = m[row][col].clone();
            for j in 0..n {
                let (mc, ic) = (m[col][j].clone(), inv[col][j].clone());
                m[row][j] = m[row][j].clone() - f.clone() * mc;
                inv[row][j] = inv[row][j].clone() - f.clone() * ic;
            }
        }
    }
    Some((inv, det))
}

/// Solve `a x = b`.
pub fn solve<S: Scalar>(a: &[Vec<S>], b: &[S]) -> Option<Vec<S>> {
    let (inv, _) = invert(a)?;
    Some(mat_vec(&inv, b))
}

pub fn mat_vec<S: Scalar>(a: &[Vec<S>], v: &[S]) -> Vec<S> {
    a.iter()
        .map(|row| {
            let mut acc = S::zero();
            for (aij, vj) in row.iter().zip(v) {
                acc.mul_acc(aij, vj);
            }
            acc
        })
        .collect()
}

/// `v^T a w`.
pub fn bilinear<S: Scalar>(a: &[Vec<S>], v: &[S], w: &[S]) -> S {
    let mut acc = S::zero();
    for (row, vi) in a.iter().zip(v) {
        for (aij, wj) in row.iter().zip(w) {
            acc.mul_acc(&(vi.clone() * aij.clone()), wj);
        }
    }
    acc
}

fn to_dmatrix(a: &[Vec<f64>]) -> DMatrix<f64> {
    let n = a.len();
    DMatrix::from_fn(n, n, |i, j| a[i][j])
}

/// Ratio of extreme singular values.
pub fn condition_number(a: &[Vec<f64>]) -> f64 {
    let sv = to_dmatrix(a).singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Number of positive and negative eigenvalues of a symmetric matrix.
pub fn signature(a: &[Vec<f64>]) -> (usize, usize) {
    let eig = to_dmatrix(a).symmetric_eigen();
    let scale = eig.eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let tiny = scale * 1e-14;
    let pos = eig.eigenvalues.iter().filter(|&&v| v > tiny).count();
    let neg = eig.eigenvalues.iter().filter(|&&v| v < -tiny).count();
    (pos, neg)
}

pub fn max_abs(a: &[Vec<f64>]) -> f64 {
    a.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max)
}
