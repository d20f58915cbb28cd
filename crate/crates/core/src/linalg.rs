//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Eigenvalues of a real symmetric matrix (unsorted).
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    m.clone().symmetric_eigenvalues().iter().copied().collect()
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues in descending order.
///
/// Column `k` of the returned matrix is the eigenvector for value `k`.
pub fn hermitian_eigen(m: &DMatrix<Complex64>) -> (Vec<f64>, DMatrix<Complex64>) {
    let eig = hermitize(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(m.nrows(), order.len(), |i, c| eig.eigenvectors[(i, order[c])]);
    (values, vectors)
}

/// Eigenvalues of a Hermitian matrix in descending order.
pub fn hermitian_eigenvalues(m: &DMatrix<Complex64>) -> Vec<f64> {
    let mut v: Vec<f64> = hermitize(m).symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// `(M + M†)/2`.
pub fn hermitize(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Largest `|M_ij − conj(M_ji)|`.
pub fn hermiticity_defect(m: &DMatrix<Complex64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn max_abs(v: &[Complex64]) -> f64 {
    v.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn max_abs_diff(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).fold(0.0, |acc, (x, y)| acc.max((x - y).norm()))
}

fn one_norm(m: &DMatrix<Complex64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Outcome of a dense pivoted solve.
pub struct DenseSolve {
    pub x: DVector<Complex64>,
    /// 1-norm condition number `‖A‖₁ ‖A⁻¹‖₁` (infinite when singular).
    pub condition: f64,
}

/// Solve `A x = b` by LU with partial pivoting, reporting the condition number.
///
/// Forms `A⁻¹` explicitly, so it is meant for the `n ≤ 512` systems
/// where an exact condition number is affordable.
pub fn solve_with_condition(a: &DMatrix<Complex64>, b: &DVector<Complex64>) -> DenseSolve {
    let lu = a.clone().lu();
    match lu.try_inverse() {
        Some(inv) => {
            let x = &inv * b;
            let condition = one_norm(a) * one_norm(&inv);
            // One step of iterative refinement against the original matrix.
            let r = b - a * &x;
            let x = x + &inv * r;
            DenseSolve {
                x,
                condition: if condition.is_finite() { condition } else { f64::INFINITY },
            }
        }
        None => DenseSolve {
            x: DVector::from_element(b.len(), Complex64::new(f64::NAN, f64::NAN)),
            condition: f64::INFINITY,
        },
    }
}

/// Solve `A x = b` by LU with partial pivoting; `None` if a pivot is exactly zero.
pub fn lu_solve(a: DMatrix<Complex64>, b: &DVector<Complex64>) -> Option<DVector<Complex64>> {
    a.lu().solve(b)
}
