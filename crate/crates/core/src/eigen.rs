//! Small dense symmetric eigensolver and orthonormalization helpers.

use nalgebra::{DMatrix, DVector};

const OFF_DIAGONAL_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Eigenpairs of a symmetric matrix, eigenvalues sorted descending.
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: DVector<f64>,
    /// Eigenvectors stored column-wise, matching `values`.
    pub vectors: DMatrix<f64>,
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Sweeps until the off-diagonal Frobenius norm falls below `1e-12` times the
/// matrix norm. Eigenvalues come back in descending order; equal eigenvalues
/// keep the order of their original diagonal position.
pub fn sym_eigen(m: &DMatrix<f64>) -> SymEigen {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "sym_eigen needs a square matrix");
    let mut a = (m + m.transpose()) * 0.5;
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = a.norm();

    if n > 1 && scale > 0.0 {
        for _ in 0..MAX_SWEEPS {
            if off_diagonal_norm(&a) <= OFF_DIAGONAL_TOL * scale {
                break;
            }
            for p in 0..n - 1 {
                for q in p + 1..n {
                    let apq = a[(p, q)];
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    rotate(&mut a, &mut v, p, q, c, s);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps the original index order on ties
    order.sort_by(|&i, &j| a[(j, j)].partial_cmp(&a[(i, i)]).unwrap_or(std::cmp::Ordering::Equal));
    let values = DVector::from_iterator(n, order.iter().map(|&i| a[(i, i)]));
    let mut vectors = DMatrix::<f64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &v.column(src));
    }
    SymEigen { values, vectors }
}

fn off_diagonal_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += a[(i, j)] * a[(i, j)];
            }
        }
    }
    acc.sqrt()
}

fn rotate(a: &mut DMatrix<f64>, v: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    let n = a.nrows();
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// Largest absolute entry of `UᵀU − I`.
pub fn orthonormality_drift(u: &DMatrix<f64>) -> f64 {
    if u.ncols() == 0 {
        return 0.0;
    }
    let gram = u.transpose() * u;
    let mut worst: f64 = 0.0;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

/// In-place modified Gram-Schmidt with one re-orthogonalization pass.
pub fn orthonormalize(u: &mut DMatrix<f64>) {
    for j in 0..u.ncols() {
        for _ in 0..2 {
            for k in 0..j {
                let proj = u.column(k).dot(&u.column(j));
                let col_k = u.column(k).clone_owned();
                u.column_mut(j).axpy(-proj, &col_k, 1.0);
            }
        }
        let norm = u.column(j).norm();
        if norm > 0.0 {
            u.column_mut(j).scale_mut(1.0 / norm);
        }
    }
}

/// Inverse of a symmetric positive semi-definite matrix with eigenvalues
/// clamped from below at `floor`.
pub fn clamped_inverse(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let eig = sym_eigen(m);
    let n = m.nrows();
    let mut inv = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let lambda = eig.values[k].max(floor);
        let col = eig.vectors.column(k);
        inv += (col * col.transpose()) / lambda;
    }
    (&inv + inv.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_matrix_sorted_descending() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0, 2.0]));
        let e = sym_eigen(&m);
        assert_eq!(e.values.as_slice(), &[3.0, 2.0, 1.0]);
        assert_eq!(e.vectors[(1, 0)].abs(), 1.0);
        assert_eq!(e.vectors[(2, 1)].abs(), 1.0);
    }

    #[test]
    fn ties_keep_original_order() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 2.0, 1.0]));
        let e = sym_eigen(&m);
        assert_eq!(e.vectors[(0, 0)], 1.0);
        assert_eq!(e.vectors[(1, 1)], 1.0);
    }

    #[test]
    fn reconstructs_dense_matrix() {
        let m = DMatrix::from_row_slice(
            4,
            4,
            &[4.0, 1.0, -2.0, 0.5, 1.0, 3.0, 0.0, 1.0, -2.0, 0.0, 5.0, -1.0, 0.5, 1.0, -1.0, 2.0],
        );
        let e = sym_eigen(&m);
        let rebuilt = &e.vectors * DMatrix::from_diagonal(&e.values) * e.vectors.transpose();
        assert!((rebuilt - &m).norm() < 1e-12);
        assert!(orthonormality_drift(&e.vectors) < 1e-13);
        for k in 1..4 {
            assert!(e.values[k - 1] >= e.values[k]);
        }
    }

    #[test]
    fn gram_schmidt_repairs_drift() {
        let mut u = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 0.0, 1.0, 0.0, 1e-3]);
        orthonormalize(&mut u);
        assert!(orthonormality_drift(&u) < 1e-15);
    }

    #[test]
    fn clamped_inverse_floors_small_eigenvalues() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 0.0]));
        let inv = clamped_inverse(&m, 0.5);
        assert!((inv[(0, 0)] - 0.25).abs() < 1e-15);
        assert!((inv[(1, 1)] - 2.0).abs() < 1e-15);
    }
}
