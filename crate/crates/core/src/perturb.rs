//! Second-order steady state of the weakly driven ensemble.
//!
//! The state is the normalised projector on
//!
//! ```text
//! |ψ⟩ = |G⟩ + η Σ u_μ |μ⟩ + η² Σ_{μ<ν} (u_μ u_ν + v_{μν}) |μν⟩
//! ```
//!
//! truncated at order `η²`, where the single-excitation amplitudes obey
//! `Σ_ξ z_{μξ} u_ξ − iδ u_μ = i w_μ` and the pair correlations obey
//! `Σ_ξ (z_{μξ} ṽ_{ξν} + z_{νξ} ṽ_{ξμ}) − 2iδ v_{μν} = z_{μν}(u_μ² + u_ν²)`
//! with `ṽ` the symmetric extension of `v` that vanishes on the diagonal.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::coupling::CouplingMatrix;
use crate::error::{Error, Result};
use crate::hilbert::atom_bit;
use crate::krylov::{gmres, GmresConfig, LinearOperator};
use crate::linalg;
use crate::model::Excitation;

/// Residual bound (max norm) every solve must meet.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Condition-number ceiling for the single-excitation system.
pub const CONDITION_LIMIT: f64 = 1e12;
/// Pair systems up to this size are solved densely.
pub const DENSE_PAIR_LIMIT: usize = 1200;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Number of unordered pairs among `n` atoms.
pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Position of the pair `(i, j)`, `i < j`, in row-major upper-triangle order.
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

/// Values on unordered pairs `μ < ν`; reads as zero on the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct PairTable {
    n: usize,
    values: Vec<Complex64>,
}

impl PairTable {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            values: vec![ZERO; pair_count(n)],
        }
    }

    pub fn from_values(n: usize, values: Vec<Complex64>) -> Self {
        assert_eq!(values.len(), pair_count(n));
        Self { n, values }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut values = Vec::with_capacity(pair_count(n));
        for i in 0..n {
            for j in (i + 1)..n {
                values.push(f(i, j));
            }
        }
        Self { n, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// `ṽ_{ij}`: symmetric, zero when `i == j`.
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Less => self.values[pair_index(self.n, i, j)],
            std::cmp::Ordering::Greater => self.values[pair_index(self.n, j, i)],
            std::cmp::Ordering::Equal => ZERO,
        }
    }

    pub fn set(&mut self, i: usize, j: usize, value: Complex64) {
        assert_ne!(i, j, "pair table has no diagonal");
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        let k = pair_index(self.n, a, b);
        self.values[k] = value;
    }

    /// `(μ, ν, value)` for every `μ < ν`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        let n = self.n;
        (0..n)
            .flat_map(move |i| ((i + 1)..n).map(move |j| (i, j)))
            .zip(self.values.iter().copied())
            .map(|((i, j), v)| (i, j, v))
    }

    /// Symmetric `n × n` matrix with zero diagonal.
    pub fn to_symmetric_matrix(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn max_abs(&self) -> f64 {
        linalg::max_abs(&self.values)
    }
}

/// Which algorithm handles the pair system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairMethod {
    /// Dense below [`PairSolverOptions::dense_limit`], iterative above.
    #[default]
    Auto,
    Dense,
    Iterative,
}

#[derive(Debug, Clone)]
pub struct PairSolverOptions {
    pub method: PairMethod,
    pub dense_limit: usize,
    pub gmres: GmresConfig,
}

impl Default for PairSolverOptions {
    fn default() -> Self {
        Self {
            method: PairMethod::Auto,
            dense_limit: DENSE_PAIR_LIMIT,
            gmres: GmresConfig::default(),
        }
    }
}

/// Amplitudes `u_μ`, correlations `v_{μν}` and the drive they were solved for.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbState {
    pub u: Vec<Complex64>,
    pub v: PairTable,
    pub excitation: Excitation,
}

impl PerturbState {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn eta(&self) -> f64 {
        self.excitation.eta
    }

    /// Same amplitudes at another drive strength (`u`, `v` do not depend on `η`).
    pub fn with_eta(&self, eta: f64) -> Self {
        Self {
            excitation: self.excitation.with_eta(eta),
            ..self.clone()
        }
    }
}

struct SingleOperator<'a> {
    z: &'a CouplingMatrix,
    delta: f64,
}

impl LinearOperator for SingleOperator<'_> {
    fn dim(&self) -> usize {
        self.z.len()
    }

    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        let zx = self.z.mul_vec(x);
        let shift = Complex64::new(0.0, self.delta);
        for ((yi, zi), xi) in y.iter_mut().zip(zx).zip(x) {
            *yi = zi - shift * xi;
        }
    }
}

/// Applies the left-hand side of the pair equations in `O(n · M)`.
struct PairOperator<'a> {
    z: &'a CouplingMatrix,
    delta: f64,
}

impl PairOperator<'_> {
    fn apply_table(&self, v: &PairTable) -> PairTable {
        let p = self.z.mul_mat(&v.to_symmetric_matrix());
        let shift = Complex64::new(0.0, 2.0 * self.delta);
        PairTable::from_fn(v.n(), |i, j| p[(i, j)] + p[(j, i)] - shift * v.get(i, j))
    }

    fn diagonal(&self) -> Vec<Complex64> {
        let n = self.z.len();
        let shift = Complex64::new(0.0, 2.0 * self.delta);
        PairTable::from_fn(n, |i, j| self.z.get(i, i) + self.z.get(j, j) - shift).values
    }
}

impl LinearOperator for PairOperator<'_> {
    fn dim(&self) -> usize {
        pair_count(self.z.len())
    }

    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        let table = PairTable::from_values(self.z.len(), x.to_vec());
        y.copy_from_slice(self.apply_table(&table).values());
    }
}

/// Max-norm residual of `Σ_ξ z_{μξ} u_ξ − iδ u_μ = i w_μ`.
pub fn u_residual(z: &CouplingMatrix, ex: &Excitation, u: &[Complex64]) -> f64 {
    let op = SingleOperator { z, delta: ex.delta };
    let mut lhs = vec![ZERO; u.len()];
    op.apply(u, &mut lhs);
    lhs.iter()
        .zip(&ex.w)
        .fold(0.0, |acc, (l, w)| acc.max((l - Complex64::i() * w).norm()))
}

fn pair_rhs(z: &CouplingMatrix, u: &[Complex64]) -> PairTable {
    PairTable::from_fn(u.len(), |i, j| z.get(i, j) * (u[i] * u[i] + u[j] * u[j]))
}

/// Max-norm residual of the pair equations.
pub fn v_residual(z: &CouplingMatrix, ex: &Excitation, u: &[Complex64], v: &PairTable) -> f64 {
    let lhs = PairOperator { z, delta: ex.delta }.apply_table(v);
    let rhs = pair_rhs(z, u);
    lhs.values()
        .iter()
        .zip(rhs.values())
        .fold(0.0, |acc, (l, r)| acc.max((l - r).norm()))
}

/// Single-excitation amplitudes `u_μ`.
pub fn solve_u(z: &CouplingMatrix, ex: &Excitation) -> Result<Vec<Complex64>> {
    let n = z.len();
    if ex.len() != n {
        return Err(Error::InvalidArgument(format!(
            "drive has {} amplitudes for {n} atoms",
            ex.len()
        )));
    }
    let rhs: Vec<Complex64> = ex.w.iter().map(|w| Complex64::i() * w).collect();
    let u = if z.is_dense() {
        let shift = Complex64::new(0.0, ex.delta);
        let a = z.to_dense() - DMatrix::from_diagonal_element(n, n, shift);
        let sol = linalg::solve_with_condition(&a, &DVector::from_vec(rhs));
        if !(sol.condition <= CONDITION_LIMIT) {
            return Err(Error::ResonantSingularity {
                delta: ex.delta,
                condition: sol.condition,
            });
        }
        sol.x.iter().copied().collect()
    } else {
        let op = SingleOperator { z, delta: ex.delta };
        let diag = vec![Complex64::new(0.5, -ex.delta); n];
        let cfg = GmresConfig::default();
        let out = gmres(&op, &rhs, Some(&diag), &cfg);
        if !out.converged {
            return Err(Error::NotConverged {
                iterations: out.iterations,
                residual: out.residual,
            });
        }
        out.x
    };
    let residual = u_residual(z, ex, &u);
    if !(residual <= RESIDUAL_TOL) {
        return Err(Error::NotConverged { iterations: 0, residual });
    }
    Ok(u)
}

fn dense_pair_matrix(z: &CouplingMatrix, delta: f64) -> DMatrix<Complex64> {
    let n = z.len();
    let m = pair_count(n);
    let mut a = DMatrix::zeros(m, m);
    let shift = Complex64::new(0.0, 2.0 * delta);
    for mu in 0..n {
        for nu in (mu + 1)..n {
            let row = pair_index(n, mu, nu);
            for xi in 0..n {
                // z_{μξ} ṽ_{ξν}
                if xi != nu {
                    let col = if xi < nu { pair_index(n, xi, nu) } else { pair_index(n, nu, xi) };
                    a[(row, col)] += z.get(mu, xi);
                }
                // z_{νξ} ṽ_{ξμ}
                if xi != mu {
                    let col = if xi < mu { pair_index(n, xi, mu) } else { pair_index(n, mu, xi) };
                    a[(row, col)] += z.get(nu, xi);
                }
            }
            a[(row, row)] -= shift;
        }
    }
    a
}

/// Pair correlations `v_{μν}` given solved amplitudes `u`.
pub fn solve_v(
    z: &CouplingMatrix,
    ex: &Excitation,
    u: &[Complex64],
    opts: &PairSolverOptions,
) -> Result<PairTable> {
    let n = z.len();
    if n < 2 {
        return Err(Error::InvalidArgument("pair correlations need at least two atoms".into()));
    }
    if u.len() != n {
        return Err(Error::InvalidArgument(format!("u has length {} for {n} atoms", u.len())));
    }
    let m = pair_count(n);
    let rhs = pair_rhs(z, u);
    let dense = match opts.method {
        PairMethod::Dense => true,
        PairMethod::Iterative => false,
        PairMethod::Auto => m <= opts.dense_limit,
    };
    let v = if dense {
        let a = dense_pair_matrix(z, ex.delta);
        let b = DVector::from_column_slice(rhs.values());
        let x = linalg::lu_solve(a, &b).ok_or(Error::ResonantSingularity {
            delta: ex.delta,
            condition: f64::INFINITY,
        })?;
        PairTable::from_values(n, x.iter().copied().collect())
    } else {
        let op = PairOperator { z, delta: ex.delta };
        let diag = op.diagonal();
        let out = gmres(&op, rhs.values(), Some(&diag), &opts.gmres);
        if !out.converged {
            return Err(Error::NotConverged {
                iterations: out.iterations,
                residual: out.residual,
            });
        }
        PairTable::from_values(n, out.x)
    };
    let residual = v_residual(z, ex, u, &v);
    if !(residual <= RESIDUAL_TOL) {
        return Err(Error::NotConverged { iterations: 0, residual });
    }
    Ok(v)
}

/// Solve both systems and bundle the result.
pub fn solve_state(z: &CouplingMatrix, ex: &Excitation, opts: &PairSolverOptions) -> Result<PerturbState> {
    let u = solve_u(z, ex)?;
    let v = if z.len() >= 2 {
        solve_v(z, ex, &u, opts)?
    } else {
        PairTable::zeros(z.len())
    };
    Ok(PerturbState {
        u,
        v,
        excitation: ex.clone(),
    })
}

/// Density matrix to second order on `{|G⟩, |μ⟩, |μν⟩ (μ<ν)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedDensity {
    n: usize,
    matrix: DMatrix<Complex64>,
}

impl TruncatedDensity {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.diagonal().iter().sum()
    }

    /// Basis position of `|μ⟩`.
    pub fn single(&self, mu: usize) -> usize {
        1 + mu
    }

    /// Basis position of `|μν⟩`.
    pub fn pair(&self, mu: usize, nu: usize) -> usize {
        let (a, b) = if mu < nu { (mu, nu) } else { (nu, mu) };
        1 + self.n + pair_index(self.n, a, b)
    }

    /// Embed into the full `2^n` tensor-product basis (see [`crate::hilbert`]).
    pub fn to_full_basis(&self) -> DMatrix<Complex64> {
        let n = self.n;
        assert!(n <= 12, "full basis embedding limited to 12 atoms");
        let mut index = Vec::with_capacity(self.dim());
        index.push(0usize);
        for mu in 0..n {
            index.push(atom_bit(n, mu));
        }
        for mu in 0..n {
            for nu in (mu + 1)..n {
                index.push(atom_bit(n, mu) | atom_bit(n, nu));
            }
        }
        let dim = 1usize << n;
        let mut full = DMatrix::zeros(dim, dim);
        for (a, &ia) in index.iter().enumerate() {
            for (b, &ib) in index.iter().enumerate() {
                full[(ia, ib)] = self.matrix[(a, b)];
            }
        }
        full
    }
}

pub fn assemble_state(state: &PerturbState) -> TruncatedDensity {
    let n = state.len();
    let eta = state.eta();
    let eta2 = eta * eta;
    let dim = 1 + n + pair_count(n);
    let mut rho = DMatrix::zeros(dim, dim);
    let u = &state.u;
    let norm_u: f64 = u.iter().map(|x| x.norm_sqr()).sum();
    rho[(0, 0)] = Complex64::new(1.0 - eta2 * norm_u, 0.0);
    for mu in 0..n {
        let g_mu = u[mu] * eta;
        rho[(1 + mu, 0)] = g_mu;
        rho[(0, 1 + mu)] = g_mu.conj();
        for nu in 0..n {
            rho[(1 + mu, 1 + nu)] = u[mu] * u[nu].conj() * eta2;
        }
    }
    for (mu, nu, v) in state.v.iter() {
        let k = 1 + n + pair_index(n, mu, nu);
        let amp = (u[mu] * u[nu] + v) * eta2;
        rho[(k, 0)] = amp;
        rho[(0, k)] = amp.conj();
    }
    TruncatedDensity { n, matrix: rho }
}

/// Keep only the listed atoms (in the given order), without re-solving.
pub fn restrict_state(state: &PerturbState, subset: &[usize]) -> Result<PerturbState> {
    if subset.is_empty() {
        return Err(Error::InvalidSubset("subset is empty".into()));
    }
    let n = state.len();
    let mut seen = BTreeSet::new();
    for &i in subset {
        if i >= n {
            return Err(Error::InvalidSubset(format!("index {i} out of range for {n} atoms")));
        }
        if !seen.insert(i) {
            return Err(Error::InvalidSubset(format!("index {i} repeated")));
        }
    }
    let u = subset.iter().map(|&i| state.u[i]).collect();
    let v = PairTable::from_fn(subset.len(), |a, b| state.v.get(subset[a], subset[b]));
    let ex = &state.excitation;
    Ok(PerturbState {
        u,
        v,
        excitation: Excitation {
            delta: ex.delta,
            eta: ex.eta,
            w: subset.iter().map(|&i| ex.w[i]).collect(),
        },
    })
}

/// Reduced state of one atom on `(|g⟩, |e⟩)`.
pub fn single_atom_state(state: &PerturbState, mu: usize) -> DMatrix<Complex64> {
    let eta = state.eta();
    let u = state.u[mu];
    let pop = eta * eta * u.norm_sqr();
    DMatrix::from_row_slice(
        2,
        2,
        &[Complex64::new(1.0 - pop, 0.0), (u * eta).conj(), u * eta, Complex64::new(pop, 0.0)],
    )
}

/// `ρ_{μν} − ρ_μ ⊗ ρ_ν` to second order, on the basis `|a_μ a_ν⟩` (index `2a_μ + a_ν`).
///
/// Only `⟨gg|·|ee⟩ = η² v*_{μν}` and its conjugate survive at this order.
pub fn pair_correlation(state: &PerturbState, mu: usize, nu: usize) -> Result<DMatrix<Complex64>> {
    if mu == nu {
        return Err(Error::InvalidArgument("pair correlation needs two distinct atoms".into()));
    }
    let n = state.len();
    if mu >= n || nu >= n {
        return Err(Error::InvalidArgument(format!("atom index out of range for {n} atoms")));
    }
    let eta2 = state.eta() * state.eta();
    let v = state.v.get(mu, nu);
    let mut c = DMatrix::zeros(4, 4);
    c[(0, 3)] = v.conj() * eta2;
    c[(3, 0)] = v * eta2;
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{coupling_matrix, pair_coupling};
    use crate::hilbert::{kron, partial_trace};
    use crate::model::{build_geometry, Drive, Ensemble, GeometrySpec, Vec3};

    const Z_HAT: Vec3 = Vec3::new(0.0, 0.0, 1.0);
    const X_HAT: Vec3 = Vec3::new(1.0, 0.0, 0.0);

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn single(delta: f64) -> (CouplingMatrix, Excitation) {
        let ens = Ensemble::new(vec![Vec3::zeros()], Z_HAT).unwrap();
        let ex = Drive::plane_wave(delta, 0.1, X_HAT).unwrap().excitation(&ens).unwrap();
        (coupling_matrix(&ens).unwrap(), ex)
    }

    /// Two atoms along y with the beam along x, so `w_1 = w_2 = 1`.
    fn symmetric_pair(r: f64, delta: f64, eta: f64) -> (CouplingMatrix, Excitation, Complex64) {
        let ens = Ensemble::new(vec![Vec3::zeros(), Vec3::new(0.0, r, 0.0)], Z_HAT).unwrap();
        let ex = Drive::plane_wave(delta, eta, X_HAT).unwrap().excitation(&ens).unwrap();
        let z12 = pair_coupling(&Vec3::new(0.0, r, 0.0), &Z_HAT).unwrap();
        (coupling_matrix(&ens).unwrap(), ex, z12)
    }

    fn random_state(n: usize, seed: u64, delta: f64, eta: f64) -> (CouplingMatrix, PerturbState) {
        let spec = GeometrySpec::Random {
            count: n,
            size: Vec3::new(6.0, 6.0, 6.0),
            seed,
        };
        let ens = build_geometry(&spec, Z_HAT).unwrap();
        let ex = Drive::plane_wave(delta, eta, Vec3::new(0.6, 0.8, 0.0))
            .unwrap()
            .excitation(&ens)
            .unwrap();
        let z = coupling_matrix(&ens).unwrap();
        let st = solve_state(&z, &ex, &PairSolverOptions::default()).unwrap();
        (z, st)
    }

    #[test]
    fn pair_indexing_is_dense() {
        let n = 7;
        let mut k = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                assert_eq!(pair_index(n, i, j), k);
                k += 1;
            }
        }
        assert_eq!(k, pair_count(n));
    }

    #[test]
    fn single_atom_amplitudes() {
        let (z, ex) = single(0.0);
        let u = solve_u(&z, &ex).unwrap();
        assert!((u[0] - c(0.0, 2.0)).norm() < 1e-14);
        let (z, ex) = single(0.5);
        let u = solve_u(&z, &ex).unwrap();
        assert!((u[0] - c(-1.0, 1.0)).norm() < 1e-14);
    }

    #[test]
    fn symmetric_pair_closed_forms() {
        for r in [0.7, 1.0, 3.0] {
            let (z, ex, z12) = symmetric_pair(r, 0.0, 0.05);
            let u = solve_u(&z, &ex).unwrap();
            let expected_u = Complex64::i() / (0.5 + z12);
            assert!((u[0] - expected_u).norm() < 1e-12);
            assert!((u[1] - expected_u).norm() < 1e-12);
            let v = solve_v(&z, &ex, &u, &PairSolverOptions::default()).unwrap();
            let expected_v = -2.0 * z12 / ((0.5 + z12) * (0.5 + z12));
            assert!((v.get(0, 1) - expected_v).norm() < 1e-12, "r={r}");
        }
    }

    #[test]
    fn decoupled_atoms_have_no_pair_correlation() {
        let (_, st) = random_state(5, 9, 0.3, 0.1);
        let z = CouplingMatrix::decoupled(5);
        let u = solve_u(&z, &st.excitation).unwrap();
        let v = solve_v(&z, &st.excitation, &u, &PairSolverOptions::default()).unwrap();
        assert_eq!(v.max_abs(), 0.0);
    }

    #[test]
    fn resonant_singularity_reported() {
        // z = [[1/2, 1/2], [1/2, 1/2]] has eigenvalue 0, so δ = 0 is singular.
        let z = CouplingMatrix::from_dense(DMatrix::from_element(2, 2, c(0.5, 0.0)));
        let ex = Excitation {
            delta: 0.0,
            eta: 0.1,
            w: vec![c(1.0, 0.0); 2],
        };
        match solve_u(&z, &ex) {
            Err(Error::ResonantSingularity { delta, .. }) => assert_eq!(delta, 0.0),
            other => panic!("expected singularity, got {other:?}"),
        }
    }

    #[test]
    fn dense_and_iterative_pair_solves_agree() {
        let (z, st) = random_state(20, 4, 0.2, 0.1);
        let iterative = PairSolverOptions {
            method: PairMethod::Iterative,
            ..Default::default()
        };
        let v_it = solve_v(&z, &st.excitation, &st.u, &iterative).unwrap();
        for (a, b) in st.v.values().iter().zip(v_it.values()) {
            assert!((a - b).norm() < 1e-9);
        }
        assert!(v_residual(&z, &st.excitation, &st.u, &st.v) <= RESIDUAL_TOL);
        assert!(u_residual(&z, &st.excitation, &st.u) <= RESIDUAL_TOL);
    }

    #[test]
    fn iterative_failure_is_reported() {
        let (z, st) = random_state(8, 4, 0.0, 0.1);
        let opts = PairSolverOptions {
            method: PairMethod::Iterative,
            gmres: GmresConfig {
                restart: 2,
                max_iterations: 2,
                tolerance: 1e-14,
            },
            ..Default::default()
        };
        assert!(matches!(
            solve_v(&z, &st.excitation, &st.u, &opts),
            Err(Error::NotConverged { .. })
        ));
    }

    #[test]
    fn on_demand_coupling_solves_u() {
        let spec = GeometrySpec::Random {
            count: 30,
            size: Vec3::new(40.0, 40.0, 40.0),
            seed: 11,
        };
        let ens = build_geometry(&spec, Z_HAT).unwrap();
        let ex = Drive::plane_wave(0.1, 0.1, X_HAT).unwrap().excitation(&ens).unwrap();
        let dense = CouplingMatrix::build(&ens, 512).unwrap();
        let lazy = CouplingMatrix::build(&ens, 10).unwrap();
        let a = solve_u(&dense, &ex).unwrap();
        let b = solve_u(&lazy, &ex).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).norm() < 1e-9);
        }
    }

    #[test]
    fn assembled_state_structure() {
        let (_, st) = random_state(4, 1, 0.0, 0.0);
        let rho = assemble_state(&st);
        let mut expected = DMatrix::zeros(rho.dim(), rho.dim());
        expected[(0, 0)] = c(1.0, 0.0);
        assert_eq!(rho.matrix(), &expected);

        let st = st.with_eta(0.07);
        let rho = assemble_state(&st);
        assert!(linalg::hermiticity_defect(rho.matrix()) <= 1e-14);
        assert!((rho.trace() - c(1.0, 0.0)).norm() <= 1e-12);
        let eta2 = 0.07 * 0.07;
        for mu in 0..4 {
            for nu in 0..4 {
                let e = st.u[mu] * st.u[nu].conj() * eta2;
                assert!((rho.matrix()[(rho.single(mu), rho.single(nu))] - e).norm() < 1e-15);
            }
        }
        let norm_u: f64 = st.u.iter().map(|x| x.norm_sqr()).sum();
        assert!((rho.matrix()[(0, 0)].re - (1.0 - eta2 * norm_u)).abs() < 1e-15);
    }

    #[test]
    fn restriction_identity_and_errors() {
        let (_, st) = random_state(4, 2, 0.1, 0.05);
        assert_eq!(restrict_state(&st, &[0, 1, 2, 3]).unwrap(), st);
        assert!(restrict_state(&st, &[]).is_err());
        assert!(restrict_state(&st, &[4]).is_err());
        assert!(restrict_state(&st, &[1, 1]).is_err());
    }

    #[test]
    fn restriction_equals_partial_trace() {
        let (_, st) = random_state(3, 5, 0.3, 0.08);
        let full = assemble_state(&st).to_full_basis();
        let traced = partial_trace(&full, 3, &[0, 1]);
        let restricted = assemble_state(&restrict_state(&st, &[0, 1]).unwrap()).to_full_basis();
        assert!(linalg::max_abs_diff(&traced, &restricted) <= 1e-12);
    }

    #[test]
    fn singleton_restriction() {
        let (_, st) = random_state(3, 6, 0.0, 0.1);
        let one = assemble_state(&restrict_state(&st, &[2]).unwrap()).to_full_basis();
        let phi = DVector::from_vec(vec![c(1.0, 0.0), st.u[2] * 0.1]);
        let mut expected = &phi * phi.adjoint();
        expected[(0, 0)] -= c(0.01 * st.u[2].norm_sqr(), 0.0);
        assert!(linalg::max_abs_diff(&one, &expected) < 1e-15);
        assert!(linalg::max_abs_diff(&single_atom_state(&st, 2), &expected) < 1e-15);
    }

    #[test]
    fn pair_correlation_values() {
        let mut st = random_state(3, 7, 0.0, 0.1).1;
        st.v.set(0, 1, c(0.0, 1.0));
        let corr = pair_correlation(&st, 0, 1).unwrap();
        assert!((corr[(0, 3)] - c(0.0, -0.01)).norm() < 1e-16);
        st.v.set(0, 1, c(0.0, 0.0));
        assert_eq!(pair_correlation(&st, 0, 1).unwrap(), DMatrix::zeros(4, 4));
        assert!(pair_correlation(&st, 1, 1).is_err());
    }

    /// Truncate a polynomial-in-η matrix product at second order by evaluating
    /// the bilinear pieces separately.
    fn product_to_second_order(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>, eta: f64) -> DMatrix<Complex64> {
        // Each factor is ρ0 + η ρ1 + η² ρ2 with ρ0 = |g⟩⟨g|.
        let split = |m: &DMatrix<Complex64>| {
            let mut o0 = DMatrix::zeros(2, 2);
            o0[(0, 0)] = c(1.0, 0.0);
            let mut o1 = DMatrix::zeros(2, 2);
            o1[(0, 1)] = m[(0, 1)] / eta;
            o1[(1, 0)] = m[(1, 0)] / eta;
            let mut o2 = DMatrix::zeros(2, 2);
            o2[(0, 0)] = (m[(0, 0)] - c(1.0, 0.0)) / (eta * eta);
            o2[(1, 1)] = m[(1, 1)] / (eta * eta);
            (o0, o1, o2)
        };
        let (a0, a1, a2) = split(a);
        let (b0, b1, b2) = split(b);
        let e = c(eta, 0.0);
        kron(&a0, &b0) + (kron(&a1, &b0) + kron(&a0, &b1)) * e
            + (kron(&a2, &b0) + kron(&a1, &b1) + kron(&a0, &b2)) * (e * e)
    }

    #[test]
    fn pair_correlation_matches_reduced_states() {
        let (_, st) = random_state(2, 8, 0.4, 0.03);
        let rho_pair = assemble_state(&st).to_full_basis();
        let product = product_to_second_order(&single_atom_state(&st, 0), &single_atom_state(&st, 1), 0.03);
        let diff = rho_pair - product;
        let corr = pair_correlation(&st, 0, 1).unwrap();
        assert!(linalg::max_abs_diff(&diff, &corr) <= 1e-12);
    }

    #[test]
    fn global_phase_covariance() {
        let (z, st) = random_state(5, 10, 0.2, 0.1);
        let chi = 0.7;
        let rotated = solve_state(&z, &st.excitation.with_global_phase(chi), &PairSolverOptions::default()).unwrap();
        let p1 = Complex64::from_polar(1.0, chi);
        for (a, b) in st.u.iter().zip(&rotated.u) {
            assert!((a * p1 - b).norm() < 1e-12);
        }
        for (a, b) in st.v.values().iter().zip(rotated.v.values()) {
            assert!((a * p1 * p1 - b).norm() < 1e-12);
        }
    }
}
