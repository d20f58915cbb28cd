//! Full `2^n` tensor-product basis conventions.
//!
//! Basis index bits encode excitations, atom 0 being the most significant
//! bit (the usual Kronecker ordering `atom0 ⊗ atom1 ⊗ …`).

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Bit flagging "atom `mu` excited" in an `n`-atom basis index.
pub fn atom_bit(n: usize, mu: usize) -> usize {
    1 << (n - 1 - mu)
}

/// Transpose the indices of the atoms in `transposed` (partial transpose).
pub fn partial_transpose(rho: &DMatrix<Complex64>, n: usize, transposed: &[usize]) -> DMatrix<Complex64> {
    let dim = 1usize << n;
    assert_eq!(rho.nrows(), dim);
    let mask = transposed.iter().fold(0usize, |m, &mu| m | atom_bit(n, mu));
    DMatrix::from_fn(dim, dim, |i, j| {
        let swap = (i ^ j) & mask;
        rho[(i ^ swap, j ^ swap)]
    })
}

/// Trace out every atom not listed in `keep`; the result is ordered as `keep`.
pub fn partial_trace(rho: &DMatrix<Complex64>, n: usize, keep: &[usize]) -> DMatrix<Complex64> {
    let k = keep.len();
    let traced: Vec<usize> = (0..n).filter(|mu| !keep.contains(mu)).collect();
    let embed = |local: usize, env: usize| -> usize {
        let mut idx = 0;
        for (a, &mu) in keep.iter().enumerate() {
            if local & atom_bit(k, a) != 0 {
                idx |= atom_bit(n, mu);
            }
        }
        for (a, &mu) in traced.iter().enumerate() {
            if env & (1 << (traced.len() - 1 - a)) != 0 {
                idx |= atom_bit(n, mu);
            }
        }
        idx
    };
    let dk = 1usize << k;
    let de = 1usize << traced.len();
    DMatrix::from_fn(dk, dk, |i, j| (0..de).map(|e| rho[(embed(i, e), embed(j, e))]).sum())
}

pub fn kron(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    a.kronecker(b)
}

pub fn trace(m: &DMatrix<Complex64>) -> Complex64 {
    m.diagonal().iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn partial_trace_of_product() {
        let a = DMatrix::from_row_slice(2, 2, &[c(0.7), Complex64::new(0.1, 0.2), Complex64::new(0.1, -0.2), c(0.3)]);
        let b = DMatrix::from_row_slice(2, 2, &[c(0.4), c(0.05), c(0.05), c(0.6)]);
        let rho = kron(&a, &b);
        let ra = partial_trace(&rho, 2, &[0]);
        let rb = partial_trace(&rho, 2, &[1]);
        assert!((ra - &a).norm() < 1e-15);
        assert!((rb - &b).norm() < 1e-15);
    }

    #[test]
    fn partial_transpose_swaps_selected_indices() {
        let rho = DMatrix::from_fn(4, 4, |i, j| Complex64::new(i as f64, j as f64));
        let pt = partial_transpose(&rho, 2, &[1]);
        // <g e|ρ^T_B|e g> = <g g|ρ|e e>
        assert_eq!(pt[(1, 2)], rho[(0, 3)]);
        assert_eq!(pt[(0, 0)], rho[(0, 0)]);
        assert_eq!(partial_transpose(&pt, 2, &[1]), rho);
    }
}
