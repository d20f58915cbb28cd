//! Non-perturbative references for small ensembles.
//!
//! The master equation is taken in the frame rotating with the laser, where
//! it is time independent:
//! `L[ρ] = −i(H_eff ρ − ρ H_eff†) + 2 Σ_{μν} γ_{μν} σ_μ ρ σ_ν†` with
//! `H_eff = −δ Σ σ_μ†σ_μ − η (W + W†) − i Σ_{μν} z_{μν} σ_μ†σ_ν` and
//! `W = Σ_μ w_μ* σ_μ`. Rates are in units of `Γ`.

use log::warn;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::coupling::CouplingMatrix;
use crate::error::{Error, Result};
use crate::hilbert::{atom_bit, kron, partial_transpose};
use crate::linalg;
use crate::model::{Excitation, Partition};
use crate::perturb::{PairTable, PerturbState};

/// Largest ensemble the dense Liouvillian is built for (`4⁵ = 1024`).
pub const ORACLE_CAP: usize = 5;

/// Pivot ratio below which the steady state is reported as not unique.
const DEGENERACY_PIVOT: f64 = 1e-13;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Lowering operator of atom `mu` in the `2^n` basis.
pub fn lowering(n: usize, mu: usize) -> DMatrix<Complex64> {
    let dim = 1usize << n;
    let bit = atom_bit(n, mu);
    let mut s = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        if j & bit != 0 {
            s[(j ^ bit, j)] = ONE;
        }
    }
    s
}

/// Superoperator on column-stacked density matrices.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    n: usize,
    matrix: DMatrix<Complex64>,
}

impl Liouvillian {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Hilbert-space dimension `2^n`.
    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn apply(&self, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let d = self.dim();
        let out = &self.matrix * DVector::from_column_slice(rho.as_slice());
        DMatrix::from_column_slice(d, d, out.as_slice())
    }

    /// Largest entry of `vec(I)† L`; zero for a trace-preserving generator.
    pub fn trace_defect(&self) -> f64 {
        let d = self.dim();
        (0..d * d)
            .map(|col| (0..d).map(|i| self.matrix[(i + i * d, col)]).sum::<Complex64>().norm())
            .fold(0.0, f64::max)
    }

    /// Fixed-step RK4 integration of `ρ̇ = L[ρ]`.
    pub fn evolve(&self, rho: &DMatrix<Complex64>, t: f64, steps: usize) -> DMatrix<Complex64> {
        let d = self.dim();
        let h = Complex64::new(t / steps as f64, 0.0);
        let mut x = DVector::from_column_slice(rho.as_slice());
        for _ in 0..steps {
            let k1 = &self.matrix * &x;
            let k2 = &self.matrix * (&x + &k1 * (h * 0.5));
            let k3 = &self.matrix * (&x + &k2 * (h * 0.5));
            let k4 = &self.matrix * (&x + &k3 * h);
            let two = Complex64::new(2.0, 0.0);
            x += (k1 + k2 * two + k3 * two + k4) * (h / 6.0);
        }
        DMatrix::from_column_slice(d, d, x.as_slice())
    }
}

pub fn build_liouvillian(z: &CouplingMatrix, ex: &Excitation) -> Result<Liouvillian> {
    let n = z.len();
    if ex.len() != n {
        return Err(Error::InvalidArgument(format!("drive has {} amplitudes for {n} atoms", ex.len())));
    }
    if n > ORACLE_CAP {
        return Err(Error::CapExceeded { n, cap: ORACLE_CAP });
    }
    let d = 1usize << n;
    let sigma: Vec<DMatrix<Complex64>> = (0..n).map(|mu| lowering(n, mu)).collect();
    let mut heff = DMatrix::<Complex64>::zeros(d, d);
    let mut w = DMatrix::<Complex64>::zeros(d, d);
    for mu in 0..n {
        heff -= sigma[mu].adjoint() * &sigma[mu] * Complex64::new(ex.delta, 0.0);
        w += &sigma[mu] * ex.w[mu].conj();
    }
    heff -= (&w + w.adjoint()) * Complex64::new(ex.eta, 0.0);
    for mu in 0..n {
        for nu in 0..n {
            heff -= sigma[mu].adjoint() * &sigma[nu] * (Complex64::i() * z.get(mu, nu));
        }
    }
    let id = DMatrix::<Complex64>::identity(d, d);
    let mut l = kron(&id, &heff) * (-Complex64::i()) + kron(&heff.map(|c| c.conj()), &id) * Complex64::i();
    for mu in 0..n {
        for nu in 0..n {
            let g = z.gamma(mu, nu);
            if g != 0.0 {
                l += kron(&sigma[nu], &sigma[mu]) * Complex64::new(2.0 * g, 0.0);
            }
        }
    }
    Ok(Liouvillian { n, matrix: l })
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub rho: DMatrix<Complex64>,
    /// Max-norm of `L[ρ]`.
    pub residual: f64,
    /// The null space of `L` has more than one dimension; `rho` is one of its elements.
    pub degenerate: bool,
}

/// Unit-trace null vector of `L`.
///
/// One equation is replaced by the trace condition and the bordered system is
/// solved by LU; a vanishing pivot signals a degenerate null space, in which
/// case the smallest right singular vector of `L` is returned instead.
pub fn steady_state_exact(l: &Liouvillian) -> Result<SteadyState> {
    let d = l.dim();
    let m = d * d;
    let mut a = l.matrix().clone();
    for col in 0..m {
        a[(0, col)] = ZERO;
    }
    for i in 0..d {
        a[(0, i + i * d)] = ONE;
    }
    let mut rhs = DVector::zeros(m);
    rhs[0] = ONE;
    let lu = a.lu();
    let pivots = lu.u().diagonal().map(|z| z.norm());
    let (pmin, pmax) = pivots.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &p| (lo.min(p), hi.max(p)));
    let degenerate = !(pmin > DEGENERACY_PIVOT * pmax);
    let x = if degenerate {
        warn!("Liouvillian null space is degenerate; returning one steady state");
        let svd = l.matrix().clone().svd(false, true);
        let v_t = svd.v_t.ok_or_else(|| Error::Integration("SVD failed".into()))?;
        let k = (0..svd.singular_values.len())
            .min_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]))
            .unwrap_or(0);
        v_t.row(k).transpose().map(|c| c.conj())
    } else {
        lu.solve(&rhs).ok_or_else(|| Error::Integration("steady-state solve failed".into()))?
    };
    let rho = DMatrix::from_column_slice(d, d, x.as_slice());
    let tr: Complex64 = rho.diagonal().iter().sum();
    if tr.norm() == 0.0 {
        return Err(Error::Integration("steady state has zero trace".into()));
    }
    let rho = linalg::hermitize(&(rho / tr));
    let residual = linalg::max_abs(l.apply(&rho).as_slice());
    Ok(SteadyState {
        rho,
        residual,
        degenerate,
    })
}

/// Uncorrelated steady state of infinitely distant atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct DiluteProductState {
    /// Excited populations `p_μ = η²|w_μ|² / (1/4 + δ² + 2η²|w_μ|²)`.
    pub p: Vec<f64>,
    /// Coherences `c_μ = ⟨e|ρ_μ|g⟩ = (i/2 − δ) p_μ / (η w_μ*)`.
    pub c: Vec<Complex64>,
}

impl DiluteProductState {
    pub fn new(ex: &Excitation) -> Self {
        let delta = ex.delta;
        let eta = ex.eta;
        let (p, c) = ex
            .w
            .iter()
            .map(|w| {
                let s = eta * eta * w.norm_sqr();
                let denom = 0.25 + delta * delta + 2.0 * s;
                let p = s / denom;
                // Same expression with p/(η w*) cancelled, so it holds at η w = 0.
                let c = Complex64::new(-delta, 0.5) * eta * w / denom;
                (p, c)
            })
            .unzip();
        Self { p, c }
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// `2 × 2` density matrix of atom `mu` on `(|g⟩, |e⟩)`.
    pub fn single(&self, mu: usize) -> DMatrix<Complex64> {
        let p = self.p[mu];
        let c = self.c[mu];
        DMatrix::from_row_slice(2, 2, &[Complex64::new(1.0 - p, 0.0), c.conj(), c, Complex64::new(p, 0.0)])
    }

    pub fn to_full_basis(&self) -> DMatrix<Complex64> {
        assert!(self.len() <= 12, "full basis embedding limited to 12 atoms");
        (0..self.len()).fold(DMatrix::from_element(1, 1, ONE), |acc, mu| kron(&acc, &self.single(mu)))
    }
}

/// Negativity of `ρ` with the atoms of `part.b()` transposed; `part` must cover every atom.
pub fn negativity_exact(rho: &DMatrix<Complex64>, n: usize, part: &Partition) -> Result<f64> {
    let part = Partition::new(part.a().to_vec(), part.b().to_vec(), n)?;
    if part.n_ab() != n {
        return Err(Error::InvalidPartition(format!(
            "partition covers {} of {n} atoms; trace out the rest first",
            part.n_ab()
        )));
    }
    if rho.nrows() != 1 << n || rho.ncols() != 1 << n {
        return Err(Error::InvalidArgument("density matrix does not match the atom count".into()));
    }
    let pt = partial_transpose(rho, n, part.b());
    Ok(linalg::hermitian_eigenvalues(&pt)
        .iter()
        .filter(|&&l| l < 0.0)
        .map(|l| -l)
        .sum())
}

/// Time derivatives of the scaled amplitudes of
/// `|ψ⟩ = |G⟩ + η Σ a_μ |μ⟩ + η² Σ b_{μν} |μν⟩`:
/// `ȧ_μ = iδ a_μ − Σ_ξ z_{μξ} a_ξ + i w_μ` and
/// `ḃ_{μν} = 2iδ b_{μν} − Σ_ξ (z_{μξ} b_{ξν} + z_{νξ} b_{ξμ}) + i (w_μ a_ν + w_ν a_μ)`.
pub fn truncated_drift(
    z: &CouplingMatrix,
    ex: &Excitation,
    a: &[Complex64],
    b: &PairTable,
) -> (Vec<Complex64>, PairTable) {
    let i = Complex64::i();
    let za = z.mul_vec(a);
    let da = (0..a.len())
        .map(|mu| i * ex.delta * a[mu] - za[mu] + i * ex.w[mu])
        .collect();
    let zb = z.mul_mat(&b.to_symmetric_matrix());
    let db = PairTable::from_fn(a.len(), |mu, nu| {
        i * 2.0 * ex.delta * b.get(mu, nu) - zb[(mu, nu)] - zb[(nu, mu)] + i * (ex.w[mu] * a[nu] + ex.w[nu] * a[mu])
    });
    (da, db)
}

#[derive(Debug, Clone)]
pub struct PropagateOptions {
    /// Initial step.
    pub dt: f64,
    /// Steps with a larger local error estimate (max norm) are rejected.
    pub tolerance: f64,
    /// Smallest step before giving up.
    pub dt_min: f64,
    pub max_steps: usize,
}

impl Default for PropagateOptions {
    fn default() -> Self {
        Self {
            dt: 0.01,
            tolerance: 1e-8,
            dt_min: 1e-10,
            max_steps: 10_000_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Propagation {
    /// `u = a`, `v_{μν} = b_{μν} − u_μ u_ν` at the final time.
    pub state: PerturbState,
    pub a: Vec<Complex64>,
    pub b: PairTable,
    pub time: f64,
    pub accepted: usize,
    pub rejected: usize,
}

// Dormand–Prince 5(4) tableau (the drift is autonomous, so the nodes are not needed).
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrate the truncated amplitude equations from `|G⟩` up to `t_final`
/// (adaptive Dormand–Prince) and read off `u`, `v`.
pub fn propagate_truncated(
    z: &CouplingMatrix,
    ex: &Excitation,
    t_final: f64,
    opts: &PropagateOptions,
) -> Result<Propagation> {
    let n = z.len();
    if ex.len() != n {
        return Err(Error::InvalidArgument(format!("drive has {} amplitudes for {n} atoms", ex.len())));
    }
    if !(t_final >= 0.0) || !(opts.dt > 0.0) {
        return Err(Error::InvalidArgument("t_final and dt must be non-negative/positive".into()));
    }
    let pairs = PairTable::zeros(n).values().len();
    let rhs = |y: &[Complex64]| -> Vec<Complex64> {
        let b = PairTable::from_values(n, y[n..].to_vec());
        let (da, db) = truncated_drift(z, ex, &y[..n], &b);
        da.into_iter().chain(db.values().iter().copied()).collect()
    };
    let mut y = vec![ZERO; n + pairs];
    let mut t = 0.0;
    let mut h = opts.dt.min(t_final.max(opts.dt_min));
    let (mut accepted, mut rejected) = (0, 0);
    let mut k1 = rhs(&y);
    while t < t_final {
        if accepted + rejected >= opts.max_steps {
            return Err(Error::Integration(format!("step budget exhausted at t = {t}")));
        }
        let last = t + h >= t_final;
        let h_step = if last { t_final - t } else { h };
        let mut k: Vec<Vec<Complex64>> = vec![k1.clone()];
        for s in 1..7 {
            let ys: Vec<Complex64> = (0..y.len())
                .map(|i| y[i] + h_step * (0..s).map(|j| A[s][j] * k[j][i]).sum::<Complex64>())
                .collect();
            k.push(rhs(&ys));
        }
        let y5: Vec<Complex64> = (0..y.len())
            .map(|i| y[i] + h_step * (0..7).map(|j| B5[j] * k[j][i]).sum::<Complex64>())
            .collect();
        let err = (0..y.len())
            .map(|i| (h_step * (0..7).map(|j| (B5[j] - B4[j]) * k[j][i]).sum::<Complex64>()).norm())
            .fold(0.0, f64::max);
        if err <= opts.tolerance {
            t = if last { t_final } else { t + h_step };
            y = y5;
            k1 = k.swap_remove(6);
            accepted += 1;
        } else {
            rejected += 1;
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * (opts.tolerance / err).powf(0.2)).clamp(0.2, 5.0)
        };
        h = h_step * factor;
        if h < opts.dt_min && t < t_final {
            return Err(Error::Integration(format!(
                "step size {h:e} below floor {:e} at t = {t}",
                opts.dt_min
            )));
        }
    }
    let a = y[..n].to_vec();
    let b = PairTable::from_values(n, y[n..].to_vec());
    let v = PairTable::from_fn(n, |mu, nu| b.get(mu, nu) - a[mu] * a[nu]);
    Ok(Propagation {
        state: PerturbState {
            u: a.clone(),
            v,
            excitation: ex.clone(),
        },
        a,
        b,
        time: t,
        accepted,
        rejected,
    })
}
