//! Negativity of the second-order state between two groups of atoms.
//!
//! The small eigenvalues of the partial transpose expand as
//! `λ_q = η² λ_q^(2) + η⁴ λ_q^(4) + …`, where `λ_q^(2)` are the eigenvalues
//! of `V + V†` built from the inter-group pair correlations. A negative
//! `λ_q^(2)` certifies entanglement for small enough drive.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{Excitation, Partition};
use crate::perturb::{pair_count, pair_index, PerturbState};

/// Relative gap below which two `λ^(2)` values are reported as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Second-order partial transpose (B transposed) of the A∪B state.
///
/// Basis: `|G⟩`, `|μ⟩`, `|μν⟩ (μ<ν)` over the A atoms followed by the B atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialTransposeMatrix {
    n_a: usize,
    n_b: usize,
    matrix: DMatrix<Complex64>,
}

impl PartialTransposeMatrix {
    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_a(&self) -> usize {
        self.n_a
    }

    pub fn n_b(&self) -> usize {
        self.n_b
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.diagonal().iter().sum()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        linalg::hermiticity_defect(&self.matrix)
    }

    /// Embed into the full `2^{n_ab}` basis (A atoms first).
    pub fn to_full_basis(&self) -> DMatrix<Complex64> {
        let n = self.n_a + self.n_b;
        assert!(n <= 12, "full basis embedding limited to 12 atoms");
        let bit = |mu: usize| crate::hilbert::atom_bit(n, mu);
        let mut index = vec![0usize];
        index.extend((0..n).map(bit));
        for mu in 0..n {
            for nu in (mu + 1)..n {
                index.push(bit(mu) | bit(nu));
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

pub fn build_pt_matrix(state: &PerturbState, part: &Partition) -> Result<PartialTransposeMatrix> {
    let n = state.len();
    // Re-validate against this state (partitions may come from elsewhere).
    let part = Partition::new(part.a().to_vec(), part.b().to_vec(), n)?;
    let order = part.ordered();
    let n_a = part.n_a();
    let n_ab = order.len();
    let eta = state.eta();
    let eta2 = eta * eta;
    let u: Vec<Complex64> = order.iter().map(|&i| state.u[i]).collect();
    let v = |k: usize, l: usize| state.v.get(order[k], order[l]);
    let in_a = |k: usize| k < n_a;

    let dim = 1 + n_ab + pair_count(n_ab);
    let mut m = DMatrix::zeros(dim, dim);
    let norm_u: f64 = u.iter().map(|x| x.norm_sqr()).sum();
    m[(0, 0)] = Complex64::new(1.0 - eta2 * norm_u, 0.0);
    for k in 0..n_ab {
        let g_k = if in_a(k) { u[k].conj() } else { u[k] } * eta;
        m[(0, 1 + k)] = g_k;
        m[(1 + k, 0)] = g_k.conj();
        for l in 0..n_ab {
            let e = match (in_a(k), in_a(l)) {
                (true, true) => u[k] * u[l].conj(),
                (false, false) => u[k].conj() * u[l],
                (true, false) => u[k] * u[l] + v(k, l),
                (false, true) => (u[k] * u[l] + v(l, k)).conj(),
            };
            m[(1 + k, 1 + l)] = e * eta2;
        }
    }
    for k in 0..n_ab {
        for l in (k + 1)..n_ab {
            let e = match (in_a(k), in_a(l)) {
                (true, true) => (u[k] * u[l] + v(k, l)).conj(),
                (false, false) => u[k] * u[l] + v(k, l),
                // k < l, so k ∈ A and l ∈ B.
                _ => u[k].conj() * u[l],
            } * eta2;
            let p = 1 + n_ab + pair_index(n_ab, k, l);
            m[(0, p)] = e;
            m[(p, 0)] = e.conj();
        }
    }
    Ok(PartialTransposeMatrix {
        n_a,
        n_b: part.n_b(),
        matrix: m,
    })
}

/// Negativity `Σ |min(λ, 0)|` and the spectrum in descending order.
pub fn pt_negativity(pt: &PartialTransposeMatrix) -> (f64, Vec<f64>) {
    let spectrum = linalg::hermitian_eigenvalues(pt.matrix());
    (negativity_of(&spectrum), spectrum)
}

pub fn negativity_of(spectrum: &[f64]) -> f64 {
    spectrum.iter().filter(|&&l| l < 0.0).map(|l| -l).sum()
}

/// `V = Σ_{μ∈A, ν∈B} v_{μν} |μ⟩⟨ν|` as an `n_A × n_B` block.
#[derive(Debug, Clone, PartialEq)]
pub struct VOperator {
    block: DMatrix<Complex64>,
}

impl VOperator {
    pub fn from_block(block: DMatrix<Complex64>) -> Self {
        Self { block }
    }

    pub fn block(&self) -> &DMatrix<Complex64> {
        &self.block
    }

    pub fn n_a(&self) -> usize {
        self.block.nrows()
    }

    pub fn n_b(&self) -> usize {
        self.block.ncols()
    }

    /// `V + V†` on the `n_A + n_B` single-excitation space.
    pub fn hermitian_embedding(&self) -> DMatrix<Complex64> {
        let (na, nb) = self.block.shape();
        let mut h = DMatrix::zeros(na + nb, na + nb);
        h.view_mut((0, na), (na, nb)).copy_from(&self.block);
        h.view_mut((na, 0), (nb, na)).copy_from(&self.block.adjoint());
        h
    }

    /// Non-zero eigenvalues `Λ_q` of `V V†`, descending.
    pub fn gram_eigenvalues(&self) -> Vec<f64> {
        let g = &self.block * self.block.adjoint();
        linalg::hermitian_eigenvalues(&g)
    }

    /// Largest mismatch between the eigenvalues of `V + V†` and `±√Λ_q` (zero-padded).
    pub fn pairing_defect(&self) -> f64 {
        let vals = linalg::hermitian_eigenvalues(&self.hermitian_embedding());
        let lambdas = self.gram_eigenvalues();
        let mut expected: Vec<f64> = lambdas.iter().map(|l| l.max(0.0).sqrt()).collect();
        expected.extend(lambdas.iter().map(|l| -l.max(0.0).sqrt()));
        expected.resize(vals.len(), 0.0);
        expected.sort_by(|a, b| b.total_cmp(a));
        vals.iter()
            .zip(&expected)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }
}

pub fn build_v(state: &PerturbState, part: &Partition) -> VOperator {
    let block = DMatrix::from_fn(part.n_a(), part.n_b(), |k, l| state.v.get(part.a()[k], part.b()[l]));
    VOperator { block }
}

/// One eigenpair of `V + V†`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub lambda2: f64,
    /// Unit eigenvector on the A∪B single-excitation basis; its largest
    /// component is real and positive.
    pub vector: DVector<Complex64>,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lambda2Spectrum {
    pub modes: Vec<Mode>,
}

impl Lambda2Spectrum {
    pub fn values(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.lambda2).collect()
    }

    /// `Σ_q λ_q^(2)` (zero up to rounding: `V + V†` is traceless).
    pub fn sum(&self) -> f64 {
        self.modes.iter().map(|m| m.lambda2).sum()
    }

    /// `Σ_q √Λ_q = Σ_q |min(λ_q^(2), 0)|`.
    pub fn negative_weight(&self) -> f64 {
        negativity_of(&self.values())
    }
}

pub fn lambda2_spectrum(v: &VOperator) -> Lambda2Spectrum {
    let h = v.hermitian_embedding();
    let (values, vectors) = linalg::hermitian_eigen(&h);
    let scale = values.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let modes = values
        .iter()
        .enumerate()
        .map(|(k, &lambda2)| {
            let mut vector = vectors.column(k).into_owned();
            let (_, pivot) = vector
                .iter()
                .enumerate()
                .fold((0.0, 0), |(best, at), (i, z)| if z.norm() > best { (z.norm(), i) } else { (best, at) });
            let p = vector[pivot];
            if p.norm() > 0.0 {
                vector *= p.conj() / p.norm();
                vector[pivot] = Complex64::new(vector[pivot].norm(), 0.0);
            }
            let near = |other: f64| (other - lambda2).abs() <= DEGENERACY_TOL * scale.max(f64::MIN_POSITIVE);
            let degenerate = (k > 0 && near(values[k - 1])) || (k + 1 < values.len() && near(values[k + 1]));
            Mode {
                lambda2,
                vector,
                degenerate,
            }
        })
        .collect();
    Lambda2Spectrum { modes }
}

/// Dilute-limit fourth-order coefficient
/// `λ^(4) = (1/4 + δ²)^{-2} Σ_μ |w_μ|⁴ |⟨μ|φ⟩|²` for a unit `φ` on A∪B.
pub fn lambda4_dilute(phi: &DVector<Complex64>, ex: &Excitation, part: &Partition) -> f64 {
    let order = part.ordered();
    assert_eq!(phi.len(), order.len(), "eigenvector must live on A∪B");
    let pre = (0.25 + ex.delta * ex.delta).powi(-2);
    let sum: f64 = order
        .iter()
        .zip(phi.iter())
        .map(|(&i, c)| ex.w[i].norm_sqr().powi(2) * c.norm_sqr())
        .sum();
    pre * sum
}

/// Drive strength `η_q = √(|λ2|/λ4)` at which `η²λ2 + η⁴λ4` changes sign.
pub fn threshold_eta(lambda2: f64, lambda4: f64) -> Result<f64> {
    if !(lambda2 < 0.0) {
        return Err(Error::NotApplicable(format!("λ^(2) = {lambda2} is not negative")));
    }
    if !(lambda4 > 0.0) {
        return Err(Error::NotApplicable(format!("λ^(4) = {lambda4} is not positive")));
    }
    Ok((-lambda2 / lambda4).sqrt())
}

/// Laser amplitude `Ω_q / Γ = 2 η_q` below which mode `q` stays negative.
pub fn threshold_omega(lambda2: f64, lambda4: f64) -> Result<f64> {
    threshold_eta(lambda2, lambda4).map(|eta| 2.0 * eta)
}

/// `N(η) = Σ_q max(0, −(η² λ2 + η⁴ λ4))`.
pub fn model_negativity(pairs: &[(f64, f64)], eta: f64) -> f64 {
    let e2 = eta * eta;
    pairs
        .iter()
        .map(|&(l2, l4)| (-(e2 * l2 + e2 * e2 * l4)).max(0.0))
        .sum()
}

/// `min_q (η² λ2 + η⁴ λ4)`.
pub fn model_min_eigenvalue(pairs: &[(f64, f64)], eta: f64) -> f64 {
    let e2 = eta * eta;
    pairs
        .iter()
        .map(|&(l2, l4)| e2 * l2 + e2 * e2 * l4)
        .fold(f64::INFINITY, f64::min)
}

/// Last sign change of the model's minimum eigenvalue: `max_q η_q`.
pub fn model_threshold_eta(pairs: &[(f64, f64)]) -> Option<f64> {
    pairs
        .iter()
        .filter_map(|&(l2, l4)| threshold_eta(l2, l4).ok())
        .fold(None, |acc: Option<f64>, e| Some(acc.map_or(e, |a| a.max(e))))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCurve {
    pub eta: Vec<f64>,
    pub negativity: Vec<f64>,
    /// `None` when no mode can turn negative or the curve is unbounded.
    pub eta_max: Option<f64>,
    pub n_max: f64,
}

fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if hi - lo <= 1e-15 * hi.abs().max(1e-300) {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        }
    }
    0.5 * (lo + hi)
}

/// Model curve on `grid` plus its maximum, located from the per-mode optima
/// `η_q² = |λ2|/(2 λ4)` and refined by golden-section search.
pub fn negativity_model(pairs: &[(f64, f64)], grid: &[f64]) -> Result<ModelCurve> {
    if grid.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidArgument("eta grid must be positive".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("eta grid must be strictly ascending".into()));
    }
    let negativity = grid.iter().map(|&e| model_negativity(pairs, e)).collect();
    let unbounded = pairs.iter().any(|&(l2, l4)| l2 < 0.0 && l4 <= 0.0);
    let mut candidates: Vec<f64> = pairs
        .iter()
        .filter(|&&(l2, l4)| l2 < 0.0 && l4 > 0.0)
        .map(|&(l2, l4)| (-l2 / (2.0 * l4)).sqrt())
        .collect();
    let (eta_max, n_max) = if unbounded || candidates.is_empty() {
        (None, 0.0)
    } else {
        candidates.sort_by(f64::total_cmp);
        let f = |e: f64| model_negativity(pairs, e);
        let (k, _) = candidates
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bk, bv), (k, &e)| if f(e) > bv { (k, f(e)) } else { (bk, bv) });
        let lo = if k > 0 { candidates[k - 1] } else { candidates[k] * 0.5 };
        let hi = candidates.get(k + 1).copied().unwrap_or(candidates[k] * 1.5);
        let refined = golden_max(f, lo, hi);
        let best = if f(refined) > f(candidates[k]) * (1.0 + 1e-12) {
            refined
        } else {
            candidates[k]
        };
        (Some(best), f(best))
    };
    Ok(ModelCurve {
        eta: grid.to_vec(),
        negativity,
        eta_max,
        n_max,
    })
}

/// Per-mode summary in a report.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeReport {
    pub lambda2: f64,
    pub lambda4: f64,
    pub threshold_eta: Option<f64>,
    /// `Ω_q / Γ`.
    pub threshold_omega: Option<f64>,
    pub degenerate: bool,
    /// The asymptotic `λ^(4)` was applied outside the dilute regime.
    pub dilute_extrapolated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Entangled,
    /// Zero negativity; negativity is only a sufficient criterion.
    Undetected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegativityReport {
    pub eta: f64,
    /// Leading-order negativity `η² Σ_q √Λ_q`.
    pub negativity2: f64,
    /// Negativity of the second-order partial transpose, if it was diagonalised.
    pub negativity_pt: Option<f64>,
    pub spectrum: Option<Vec<f64>>,
    pub modes: Vec<ModeReport>,
    pub curve: ModelCurve,
    pub model_threshold_eta: Option<f64>,
    pub verdict: Verdict,
}

impl NegativityReport {
    pub fn lambda_pairs(&self) -> Vec<(f64, f64)> {
        self.modes.iter().map(|m| (m.lambda2, m.lambda4)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct ReportOptions {
    /// Diagonalise the partial transpose only up to this dimension.
    pub max_pt_dim: usize,
    pub dilute: bool,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            max_pt_dim: 3000,
            dilute: true,
        }
    }
}

pub fn negativity_report(
    state: &PerturbState,
    part: &Partition,
    grid: &[f64],
    opts: &ReportOptions,
) -> Result<NegativityReport> {
    let eta = state.eta();
    let v = build_v(state, part);
    let spec = lambda2_spectrum(&v);
    let modes: Vec<ModeReport> = spec
        .modes
        .iter()
        .map(|m| {
            let lambda4 = lambda4_dilute(&m.vector, &state.excitation, part);
            ModeReport {
                lambda2: m.lambda2,
                lambda4,
                threshold_eta: threshold_eta(m.lambda2, lambda4).ok(),
                threshold_omega: threshold_omega(m.lambda2, lambda4).ok(),
                degenerate: m.degenerate,
                dilute_extrapolated: !opts.dilute,
            }
        })
        .collect();
    let pairs: Vec<(f64, f64)> = modes.iter().map(|m| (m.lambda2, m.lambda4)).collect();
    let n_ab = part.n_ab();
    let pt_dim = 1 + n_ab + pair_count(n_ab);
    let (negativity_pt, spectrum) = if pt_dim <= opts.max_pt_dim {
        let pt = build_pt_matrix(state, part)?;
        let (n, s) = pt_negativity(&pt);
        (Some(n), Some(s))
    } else {
        (None, None)
    };
    let curve = negativity_model(&pairs, grid)?;
    let verdict = if model_negativity(&pairs, eta) > 0.0 {
        Verdict::Entangled
    } else {
        Verdict::Undetected
    };
    Ok(NegativityReport {
        eta,
        negativity2: eta * eta * spec.negative_weight(),
        negativity_pt,
        spectrum,
        modes,
        curve,
        model_threshold_eta: model_threshold_eta(&pairs),
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::coupling_matrix;
    use crate::hilbert::partial_transpose;
    use crate::model::{build_geometry, Drive, Ensemble, GeometrySpec, Vec3};
    use crate::perturb::{assemble_state, restrict_state, solve_state, PairSolverOptions, PairTable};

    const Z_HAT: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_state(n: usize, seed: u64, size: f64, delta: f64, eta: f64) -> PerturbState {
        let spec = GeometrySpec::Random {
            count: n,
            size: Vec3::new(size, size, size),
            seed,
        };
        let ens = build_geometry(&spec, Z_HAT).unwrap();
        let ex = Drive::plane_wave(delta, eta, Vec3::new(0.0, 0.6, 0.8))
            .unwrap()
            .excitation(&ens)
            .unwrap();
        solve_state(&coupling_matrix(&ens).unwrap(), &ex, &PairSolverOptions::default()).unwrap()
    }

    #[test]
    fn ground_state_partial_transpose() {
        let st = random_state(4, 1, 5.0, 0.0, 0.0);
        let part = Partition::new(vec![0, 1], vec![2, 3], 4).unwrap();
        let pt = build_pt_matrix(&st, &part).unwrap();
        assert_eq!(pt.matrix()[(0, 0)], c(1.0, 0.0));
        assert_eq!(pt.matrix().iter().filter(|z| z.norm() > 0.0).count(), 1);
        let (n, spec) = pt_negativity(&pt);
        assert_eq!(n, 0.0);
        assert!((spec[0] - 1.0).abs() < 1e-15);
        assert!(spec[1..].iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn ground_population_element() {
        let st = random_state(4, 2, 5.0, 0.3, 0.05);
        let part = Partition::new(vec![3], vec![0, 2], 4).unwrap();
        let pt = build_pt_matrix(&st, &part).unwrap();
        let sum: f64 = [3, 0, 2].iter().map(|&i| st.u[i].norm_sqr()).sum();
        assert!((pt.matrix()[(0, 0)].re - (1.0 - 0.0025 * sum)).abs() < 1e-15);
        assert!(pt.hermiticity_defect() <= 1e-14);
        assert!((pt.trace() - c(1.0, 0.0)).norm() <= 1e-12);
    }

    /// Independent construction: transpose B on the embedded second-order state.
    fn pt_by_transposition(st: &PerturbState, part: &Partition) -> DMatrix<Complex64> {
        let order = part.ordered();
        let sub = restrict_state(st, &order).unwrap();
        let full = assemble_state(&sub).to_full_basis();
        let b_local: Vec<usize> = (part.n_a()..part.n_ab()).collect();
        partial_transpose(&full, part.n_ab(), &b_local)
    }

    #[test]
    fn element_formulas_match_transposition() {
        for (n, a, b) in [(2, vec![0], vec![1]), (4, vec![2, 0], vec![3]), (5, vec![1, 4], vec![0, 3])] {
            let st = random_state(n, 3 + n as u64, 4.0, 0.2, 0.06);
            let part = Partition::new(a, b, n).unwrap();
            let direct = build_pt_matrix(&st, &part).unwrap();
            let other = pt_by_transposition(&st, &part);
            assert!(linalg::max_abs_diff(&direct.to_full_basis(), &other) <= 1e-15);
            let e1 = pt_negativity(&direct).1;
            let e2 = linalg::hermitian_eigenvalues(&other);
            let e2_top: Vec<f64> = e2.iter().copied().filter(|x| x.abs() > 1e-13).collect();
            let e1_top: Vec<f64> = e1.iter().copied().filter(|x| x.abs() > 1e-13).collect();
            assert_eq!(e1_top.len(), e2_top.len());
            for (x, y) in e1_top.iter().zip(&e2_top) {
                assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    /// With `v = 0` the truncated state is a product up to higher-order
    /// terms, so its negativity carries no `η²` part.
    #[test]
    fn uncorrelated_state_has_no_leading_negativity() {
        let mut st = random_state(4, 5, 5.0, 0.0, 0.05);
        st.v = PairTable::zeros(4);
        let part = Partition::new(vec![0, 1], vec![2, 3], 4).unwrap();
        let neg = |eta: f64| pt_negativity(&build_pt_matrix(&st.with_eta(eta), &part).unwrap()).0;
        let (n1, n2) = (neg(1e-3), neg(5e-4));
        assert!(n1 < 0.1 * 1e-6, "negativity {n1}");
        assert!(n1 / n2 > 7.9, "ratio {}", n1 / n2);
        let v = build_v(&st, &part);
        assert!(lambda2_spectrum(&v).values().iter().all(|l| *l == 0.0));
    }

    #[test]
    fn two_atom_minimum_eigenvalue() {
        let st = random_state(2, 6, 8.0, 0.0, 0.01);
        let part = Partition::new(vec![0], vec![1], 2).unwrap();
        let (_, spec) = pt_negativity(&build_pt_matrix(&st, &part).unwrap());
        let min = *spec.last().unwrap();
        let v12 = st.v.get(0, 1).norm();
        assert!((min + 1e-4 * v12).abs() < 1e-6, "min {min}, v {v12}");
    }

    #[test]
    fn single_pair_v_spectrum() {
        let v = VOperator::from_block(DMatrix::from_element(1, 1, c(0.18, -0.24)));
        let spec = lambda2_spectrum(&v);
        let vals = spec.values();
        assert!((vals[0] - 0.3).abs() < 1e-15 && (vals[1] + 0.3).abs() < 1e-15);
        let zero = VOperator::from_block(DMatrix::zeros(2, 3));
        assert!(lambda2_spectrum(&zero).values().iter().all(|l| *l == 0.0));
    }

    #[test]
    fn random_v_pairing_and_trace() {
        let st = random_state(4, 7, 3.0, 0.1, 0.05);
        let part = Partition::new(vec![0, 1], vec![2, 3], 4).unwrap();
        let v = build_v(&st, &part);
        assert!(v.pairing_defect() <= 1e-12);
        let spec = lambda2_spectrum(&v);
        assert!(spec.sum().abs() <= 1e-12);
        for m in &spec.modes {
            let (best, _) = m.vector.iter().fold((0.0, c(0.0, 0.0)), |(b, z0), z| {
                if z.norm() > b {
                    (z.norm(), *z)
                } else {
                    (b, z0)
                }
            });
            let pivot = m.vector.iter().find(|z| z.norm() == best).unwrap();
            assert_eq!(pivot.im, 0.0);
            assert!(pivot.re > 0.0);
        }
    }

    #[test]
    fn lambda4_values() {
        let ens = Ensemble::new(vec![Vec3::zeros(), Vec3::new(30.0, 0.0, 0.0)], Z_HAT).unwrap();
        let part = Partition::new(vec![0], vec![1], 2).unwrap();
        let phi = DVector::from_vec(vec![c(0.6, 0.0), c(0.0, 0.8)]);
        let d0 = Drive::plane_wave(0.0, 0.1, Vec3::new(1.0, 0.0, 0.0)).unwrap();
        assert!((lambda4_dilute(&phi, &d0.excitation(&ens).unwrap(), &part) - 16.0).abs() < 1e-12);
        let d5 = Drive { delta: 0.5, ..d0.clone() };
        assert!((lambda4_dilute(&phi, &d5.excitation(&ens).unwrap(), &part) - 4.0).abs() < 1e-12);
        let dark = Excitation {
            delta: 0.0,
            eta: 0.1,
            w: vec![c(0.0, 0.0); 2],
        };
        let l4 = lambda4_dilute(&phi, &dark, &part);
        assert_eq!(l4, 0.0);
        assert!(threshold_eta(-0.1, l4).is_err());
    }

    #[test]
    fn thresholds() {
        assert!((threshold_eta(-0.04, 16.0).unwrap() - 0.05).abs() < 1e-15);
        assert!((threshold_omega(-0.04, 16.0).unwrap() - 0.1).abs() < 1e-15);
        assert!(matches!(threshold_omega(0.04, 16.0), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn single_mode_model_maximum() {
        let (a, b) = (0.3, 5.0);
        let grid: Vec<f64> = (1..200).map(|k| k as f64 * 1e-3).collect();
        let curve = negativity_model(&[(-a, b)], &grid).unwrap();
        let eta_max = curve.eta_max.unwrap();
        assert!((eta_max * eta_max - a / (2.0 * b)).abs() < 1e-12);
        assert!((curve.n_max - a * a / (4.0 * b)).abs() < 1e-15);
        let positive = negativity_model(&[(0.3, 5.0), (0.0, 16.0)], &grid).unwrap();
        assert!(positive.negativity.iter().all(|n| *n == 0.0));
        assert_eq!(positive.eta_max, None);
        assert!(negativity_model(&[(-a, b)], &[0.2, 0.1]).is_err());
        assert!(negativity_model(&[(-a, b)], &[0.0, 0.1]).is_err());
    }

    #[test]
    fn degenerate_far_field_model_maximum() {
        for delta in [0.0f64, 0.5] {
            let l4 = 16.0 / (1.0 + 4.0 * delta * delta).powi(2);
            let pairs = [(-0.02, l4), (-0.02, l4), (0.02, l4), (0.02, l4)];
            let curve = negativity_model(&pairs, &[0.01, 0.02]).unwrap();
            let em = curve.eta_max.unwrap();
            let expected = 32.0 / (1.0 + 4.0 * delta * delta).powi(2) * em.powi(4);
            assert!((curve.n_max - expected).abs() <= 1e-12 * expected);
        }
    }

    #[test]
    fn restriction_route_matches_direct_route() {
        let st = random_state(6, 8, 4.0, 0.3, 0.04);
        let part = Partition::new(vec![4, 1], vec![0, 5], 6).unwrap();
        let direct = pt_negativity(&build_pt_matrix(&st, &part).unwrap()).0;
        let sub = restrict_state(&st, &part.ordered()).unwrap();
        let local = pt_negativity(&build_pt_matrix(&sub, &part.local()).unwrap()).0;
        assert!((direct - local).abs() <= 1e-12);
    }

    #[test]
    fn report_is_consistent() {
        let st = random_state(4, 9, 4.0, 0.0, 0.02);
        let part = Partition::new(vec![0, 1], vec![2, 3], 4).unwrap();
        let grid: Vec<f64> = (1..=50).map(|k| k as f64 * 0.005).collect();
        let rep = negativity_report(&st, &part, &grid, &ReportOptions::default()).unwrap();
        assert!(rep.negativity2 > 0.0);
        assert_eq!(rep.verdict, Verdict::Entangled);
        assert_eq!(rep.modes.len(), 4);
        for m in &rep.modes {
            assert_eq!(m.threshold_omega.is_some(), m.lambda2 < 0.0 && m.lambda4 > 0.0);
        }
        let n_pt = rep.negativity_pt.unwrap();
        assert!((n_pt - rep.negativity2).abs() < 0.05 * rep.negativity2);
    }
}
