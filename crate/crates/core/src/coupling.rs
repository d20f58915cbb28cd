//! Vacuum-mediated pair coefficients `z_{μν}` and the coupling matrix.
//!
//! `Re z_{μν}` are the collective decay rates and `Im z_{μν}` the
//! dipole-dipole shifts, both in units of `Γ`. Diagonal entries are `1/2`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{Ensemble, Vec3};

/// Ensembles above this size evaluate `Z` entries on demand.
pub const DENSE_LIMIT: usize = 512;

const HALF: Complex64 = Complex64::new(0.5, 0.0);

/// `z` for two atoms separated by `separation` (k0 units) sharing dipole axis `dipole`.
pub fn pair_coupling(separation: &Vec3, dipole: &Vec3) -> Result<Complex64> {
    let r = separation.norm();
    if !(r > 0.0) {
        return Err(Error::CoincidentAtoms);
    }
    let c = dipole.dot(separation) / r;
    let c2 = c * c;
    let i = Complex64::i();
    let bracket = (1.0 - 3.0 * c2) * (i + r) - i * (1.0 - c2) * r * r;
    Ok(0.75 * Complex64::from_polar(1.0, r) / (r * r * r) * bracket)
}

#[derive(Debug, Clone)]
enum Storage {
    Dense(DMatrix<Complex64>),
    OnDemand { positions: Vec<Vec3>, dipole: Vec3 },
}

/// The complex symmetric `n × n` matrix of pair coefficients.
#[derive(Debug, Clone)]
pub struct CouplingMatrix {
    n: usize,
    storage: Storage,
}

pub fn coupling_matrix(ens: &Ensemble) -> Result<CouplingMatrix> {
    CouplingMatrix::build(ens, DENSE_LIMIT)
}

impl CouplingMatrix {
    /// Assemble `Z`, storing it densely when `ens.len() <= dense_limit`.
    pub fn build(ens: &Ensemble, dense_limit: usize) -> Result<Self> {
        let n = ens.len();
        let dipole = ens.dipole();
        if n > dense_limit {
            // Ensemble construction already rejects coincident atoms.
            return Ok(Self {
                n,
                storage: Storage::OnDemand {
                    positions: ens.positions().to_vec(),
                    dipole,
                },
            });
        }
        let mut z = DMatrix::from_element(n, n, HALF);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = pair_coupling(&(ens.position(i) - ens.position(j)), &dipole)?;
                z[(i, j)] = v;
                z[(j, i)] = v;
            }
        }
        Ok(Self {
            n,
            storage: Storage::Dense(z),
        })
    }

    /// Wrap an arbitrary matrix (used for decoupled references and fault injection).
    pub fn from_dense(z: DMatrix<Complex64>) -> Self {
        assert!(z.is_square(), "coupling matrix must be square");
        Self {
            n: z.nrows(),
            storage: Storage::Dense(z),
        }
    }

    /// `z_{μν} = δ_{μν}/2`: atoms that do not talk to each other.
    pub fn decoupled(n: usize) -> Self {
        Self::from_dense(DMatrix::from_diagonal_element(n, n, HALF))
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        match &self.storage {
            Storage::Dense(z) => z[(i, j)],
            Storage::OnDemand { positions, dipole } => {
                if i == j {
                    HALF
                } else {
                    pair_coupling(&(positions[i] - positions[j]), dipole)
                        .expect("positions are distinct")
                }
            }
        }
    }

    pub fn gamma(&self, i: usize, j: usize) -> f64 {
        self.get(i, j).re
    }

    fn row(&self, i: usize) -> Vec<Complex64> {
        (0..self.n).map(|j| self.get(i, j)).collect()
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        match &self.storage {
            Storage::Dense(z) => z.clone(),
            Storage::OnDemand { .. } => DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j)),
        }
    }

    pub fn gamma_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.gamma(i, j))
    }

    /// Restriction to the given atoms, in the given order.
    pub fn submatrix(&self, indices: &[usize]) -> Self {
        let k = indices.len();
        Self::from_dense(DMatrix::from_fn(k, k, |a, b| self.get(indices[a], indices[b])))
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.n);
        match &self.storage {
            Storage::Dense(z) => (0..self.n)
                .map(|i| z.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
                .collect(),
            Storage::OnDemand { .. } => (0..self.n)
                .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
                .collect(),
        }
    }

    /// `Z · X` for an `n × k` matrix `X`.
    pub fn mul_mat(&self, x: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        assert_eq!(x.nrows(), self.n);
        match &self.storage {
            Storage::Dense(z) => z * x,
            Storage::OnDemand { .. } => {
                let mut out = DMatrix::zeros(self.n, x.ncols());
                for i in 0..self.n {
                    let row = self.row(i);
                    for c in 0..x.ncols() {
                        out[(i, c)] = row.iter().zip(x.column(c).iter()).map(|(a, b)| a * b).sum();
                    }
                }
                out
            }
        }
    }

    /// Largest `|z_{μν} − z_{νμ}|`; exactly zero for matrices built here.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).norm());
            }
        }
        worst
    }

    /// Smallest eigenvalue of `γ = Re Z`.
    pub fn gamma_min_eigenvalue(&self) -> f64 {
        let g = self.gamma_matrix();
        let sym = (&g + g.transpose()) * 0.5;
        linalg::symmetric_eigenvalues(&sym)
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }
}
