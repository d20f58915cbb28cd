//! Closed forms valid when every pair of atoms is far apart, and for two
//! groups in each other's far field.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::coupling::CouplingMatrix;
use crate::entanglement::VOperator;
use crate::error::{Error, Result};
use crate::model::{Ensemble, Excitation, Partition, Vec3};

fn one_minus_2i_delta(delta: f64) -> Complex64 {
    Complex64::new(1.0, -2.0 * delta)
}

/// Leading dilute pair correlation `−4 z (1 − 2iδ)^{-3} (w_μ² + w_ν²)`.
pub fn v_dilute(z: Complex64, w_mu: Complex64, w_nu: Complex64, delta: f64) -> Complex64 {
    -4.0 * z * (w_mu * w_mu + w_nu * w_nu) / one_minus_2i_delta(delta).powi(3)
}

/// Pair correlation of two dark atoms, `8 (1 − 2iδ)^{-4} Σ_ξ z_{μξ} z_{νξ} w_ξ²`.
pub fn v_dark(z: &CouplingMatrix, ex: &Excitation, mu: usize, nu: usize) -> Result<Complex64> {
    let n = ex.len();
    if z.len() != n {
        return Err(Error::InvalidArgument("coupling and drive sizes differ".into()));
    }
    if mu >= n || nu >= n || mu == nu {
        return Err(Error::InvalidArgument(format!("bad atom pair ({mu}, {nu})")));
    }
    for i in [mu, nu] {
        if ex.is_lit(i) {
            return Err(Error::InvalidArgument(format!("atom {i} is illuminated")));
        }
    }
    let sum: Complex64 = (0..n)
        .filter(|&xi| xi != mu && xi != nu)
        .map(|xi| z.get(mu, xi) * z.get(nu, xi) * ex.w[xi] * ex.w[xi])
        .sum();
    Ok(8.0 * sum / one_minus_2i_delta(ex.delta).powi(4))
}

/// Parameters of two groups in each other's far field.
#[derive(Debug, Clone, PartialEq)]
pub struct FarFieldConfig {
    /// Centroid distance `k0 D`.
    pub d: f64,
    /// Angle between the dipole and the A→B line.
    pub theta: f64,
    /// Unit vector from A to B.
    pub e: Vec3,
    pub n_a: usize,
    pub n_b: usize,
    pub delta: f64,
    /// `3i sin²θ e^{ik0D} / (k0D (1 − 2iδ)³)`.
    pub x: Complex64,
    /// Group averages of `w_μ²`.
    pub s_a: Complex64,
    pub s_b: Complex64,
    /// `n_A n_B |x|²`.
    pub y: f64,
    /// `√(n_A n_B) sin²θ`.
    pub d0: f64,
}

impl FarFieldConfig {
    /// Configuration with vanishing phase sums.
    pub fn from_parameters(n_a: usize, n_b: usize, theta: f64, d: f64, delta: f64) -> Result<Self> {
        if n_a == 0 || n_b == 0 {
            return Err(Error::InvalidArgument("groups must be non-empty".into()));
        }
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::InvalidArgument(format!("distance must be positive, got {d}")));
        }
        let sin2 = theta.sin().powi(2);
        let x = Complex64::new(0.0, 3.0 * sin2) * Complex64::from_polar(1.0, d) / (d * one_minus_2i_delta(delta).powi(3));
        let nn = (n_a * n_b) as f64;
        Ok(Self {
            d,
            theta,
            e: Vec3::new(theta.sin(), 0.0, theta.cos()),
            n_a,
            n_b,
            delta,
            x,
            s_a: Complex64::new(0.0, 0.0),
            s_b: Complex64::new(0.0, 0.0),
            y: nn * x.norm_sqr(),
            d0: nn.sqrt() * sin2,
        })
    }

    /// Configuration of the partition's groups inside `ens`.
    pub fn from_geometry(ens: &Ensemble, ex: &Excitation, part: &Partition) -> Result<Self> {
        let part = Partition::new(part.a().to_vec(), part.b().to_vec(), ens.len())?;
        let sep = ens.centroid(part.b()) - ens.centroid(part.a());
        let d = sep.norm();
        if d == 0.0 {
            return Err(Error::InvalidGeometry("group centroids coincide".into()));
        }
        let e = sep / d;
        let cos = ens.dipole().dot(&e).clamp(-1.0, 1.0);
        let mut cfg = Self::from_parameters(part.n_a(), part.n_b(), cos.acos(), d, ex.delta)?;
        cfg.e = e;
        let mean_w2 = |idx: &[usize]| idx.iter().map(|&i| ex.w[i] * ex.w[i]).sum::<Complex64>() / idx.len() as f64;
        cfg.s_a = mean_w2(part.a());
        cfg.s_b = mean_w2(part.b());
        Ok(cfg)
    }

    pub fn with_phase_sums(mut self, s_a: Complex64, s_b: Complex64) -> Self {
        self.s_a = s_a;
        self.s_b = s_b;
        self
    }

    pub fn sin_theta(&self) -> f64 {
        self.theta.sin()
    }
}

/// Far-field `V`:
/// `V_{μν} = x e^{ik0 [e·(r_ν − R_B) − e·(r_μ − R_A)]} (w_μ² + w_ν²)`,
/// with `R_A`, `R_B` the group centroids.
pub fn build_v_farfield(cfg: &FarFieldConfig, ens: &Ensemble, ex: &Excitation, part: &Partition) -> VOperator {
    let ra = ens.centroid(part.a());
    let rb = ens.centroid(part.b());
    let block = DMatrix::from_fn(part.n_a(), part.n_b(), |k, l| {
        let (mu, nu) = (part.a()[k], part.b()[l]);
        let phase = cfg.e.dot(&(ens.position(nu) - rb)) - cfg.e.dot(&(ens.position(mu) - ra));
        cfg.x * Complex64::from_polar(1.0, phase) * (ex.w[mu] * ex.w[mu] + ex.w[nu] * ex.w[nu])
    });
    VOperator::from_block(block)
}

/// Non-zero eigenvalues of `V + V†` for the far-field `V`, descending:
/// `±√Λ±` with `Λ² − 2y[1 + Re(s_A s_B*)]Λ + y²(1 − |s_A|²)(1 − |s_B|²) = 0`.
pub fn quartic_spectrum(cfg: &FarFieldConfig) -> [f64; 4] {
    let y = cfg.y;
    let half_trace = y * (1.0 + (cfg.s_a * cfg.s_b.conj()).re);
    let det = y * y * (1.0 - cfg.s_a.norm_sqr()) * (1.0 - cfg.s_b.norm_sqr());
    let disc = (half_trace * half_trace - det).max(0.0).sqrt();
    let big = half_trace + disc;
    let small = if big > 0.0 { (det / big).max(0.0) } else { 0.0 };
    let (p, q) = (big.sqrt(), small.sqrt());
    [p, q, -q, -p]
}

/// Drive amplitude `Ω/Γ` below which the far-field groups are entangled:
/// `(√3/2)(1 + 4δ²)^{1/4} (D0/D)^{1/2}`.
pub fn bound_omega(cfg: &FarFieldConfig) -> f64 {
    0.5 * 3f64.sqrt() * (1.0 + 4.0 * cfg.delta * cfg.delta).powf(0.25) * (cfg.d0 / cfg.d).sqrt()
}

/// Maximal far-field negativity `(9/32)(1 + 4δ²)^{-1}(D0/D)²` and the
/// drive strength `η_max` where it is reached (`Ω = bound/√2`).
pub fn nmax_analytic(cfg: &FarFieldConfig) -> (f64, f64) {
    let r = cfg.d0 / cfg.d;
    let n_max = 9.0 / 32.0 / (1.0 + 4.0 * cfg.delta * cfg.delta) * r * r;
    let eta_max = bound_omega(cfg) / 2f64.sqrt() / 2.0;
    (n_max, eta_max)
}

/// Smallest cube edge guaranteeing entanglement of two uniformly filled cubes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengthBound {
    /// Same unit as the spacing passed in.
    pub l_min: f64,
    /// Atoms per cube, `(L/d)³`.
    pub n_min: f64,
}

/// `L = d (1 + 4δ²)^{-1/6} (k0D)^{1/3} (2Ω / (√3 Γ sinθ))^{2/3}`.
pub fn lmin_bound(spacing: f64, delta: f64, k0d: f64, omega: f64, theta: f64) -> Result<LengthBound> {
    let sin = theta.sin().abs();
    if sin < 1e-12 {
        return Err(Error::NotApplicable("no entanglement along the dipole axis (sin θ = 0)".into()));
    }
    if !(spacing > 0.0 && k0d > 0.0 && omega >= 0.0) {
        return Err(Error::InvalidArgument("spacing and distance must be positive, Ω non-negative".into()));
    }
    let l_min = spacing
        * (1.0 + 4.0 * delta * delta).powf(-1.0 / 6.0)
        * k0d.cbrt()
        * (2.0 * omega / (3f64.sqrt() * sin)).powf(2.0 / 3.0);
    Ok(LengthBound {
        l_min,
        n_min: (l_min / spacing).powi(3),
    })
}
