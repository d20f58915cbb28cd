//! Domain types shared by every solver: atom geometry, laser drive,
//! bipartitions and regime-of-validity flags.
//!
//! Lengths are stored as `k0 * r` (dimensionless), rates in units of the
//! single-atom decay rate `Γ`, and the laser detuning as `δ = (ω − ω0)/Γ`.
//! All drive phases are evaluated at `t = 0`.

use std::collections::BTreeSet;

use nalgebra::{Rotation3, Vector3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

const UNIT_TOL: f64 = 1e-12;

/// Fine-structure constant used for the lower edge of the drive window.
pub const FINE_STRUCTURE: f64 = 7.3e-3;
/// Minimum pairwise distance (k0 units) for the dilute flag.
pub const DILUTE_MIN_DISTANCE: f64 = 10.0;
/// `D >= FARFIELD_FACTOR * L^2` (k0 units) for the far-field flag.
pub const FARFIELD_FACTOR: f64 = 100.0;
/// Separation factor standing in for "much smaller than" in the drive window.
pub const ETA_WINDOW_FACTOR: f64 = 10.0;

fn check_unit(v: &Vec3, what: &'static str) -> Result<()> {
    let norm = v.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOL {
        return Err(Error::NotUnit { what, norm });
    }
    Ok(())
}

/// Atom positions (k0 units) and the dipole orientation shared by all atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    positions: Vec<Vec3>,
    dipole: Vec3,
}

impl Ensemble {
    pub fn new(positions: Vec<Vec3>, dipole: Vec3) -> Result<Self> {
        check_unit(&dipole, "dipole")?;
        if positions.is_empty() {
            return Err(Error::InvalidGeometry("ensemble has no atoms".into()));
        }
        if let Some(i) = positions.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidGeometry(format!("position {i} is not finite")));
        }
        for i in 0..positions.len() {
            for j in (i + 1)..positions.len() {
                if positions[i] == positions[j] {
                    return Err(Error::DuplicatePosition(i, j));
                }
            }
        }
        Ok(Self { positions, dipole })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn position(&self, i: usize) -> Vec3 {
        self.positions[i]
    }

    pub fn dipole(&self) -> Vec3 {
        self.dipole
    }

    /// Smallest interatomic distance, `+inf` for a single atom.
    pub fn min_pair_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.positions.len() {
            for j in (i + 1)..self.positions.len() {
                best = best.min((self.positions[i] - self.positions[j]).norm());
            }
        }
        best
    }

    /// Copy with every position shifted by `offset`.
    pub fn translated(&self, offset: Vec3) -> Self {
        Self {
            positions: self.positions.iter().map(|p| p + offset).collect(),
            dipole: self.dipole,
        }
    }

    /// Copy with positions and dipole rotated together.
    pub fn rotated(&self, rotation: &Rotation3<f64>) -> Self {
        Self {
            positions: self.positions.iter().map(|p| rotation * p).collect(),
            dipole: rotation * self.dipole,
        }
    }

    /// Copy with every position multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            positions: self.positions.iter().map(|p| p * factor).collect(),
            dipole: self.dipole,
        }
    }

    pub fn centroid(&self, indices: &[usize]) -> Vec3 {
        let sum = indices
            .iter()
            .fold(Vec3::zeros(), |acc, &i| acc + self.positions[i]);
        sum / indices.len() as f64
    }

    /// Largest distance between two atoms of the group (0 for a singleton).
    pub fn diameter(&self, indices: &[usize]) -> f64 {
        let mut best: f64 = 0.0;
        for (k, &i) in indices.iter().enumerate() {
            for &j in &indices[k + 1..] {
                best = best.max((self.positions[i] - self.positions[j]).norm());
            }
        }
        best
    }
}

/// How to lay out the atoms.
#[derive(Debug, Clone, PartialEq)]
pub enum GeometrySpec {
    Explicit(Vec<Vec3>),
    /// Simple cubic lattice with `edge` atoms per side.
    Lattice { edge: usize, spacing: f64 },
    /// `count` atoms uniform in `[0, size.x) × [0, size.y) × [0, size.z)`.
    Random { count: usize, size: Vec3, seed: u64 },
}

pub fn build_geometry(spec: &GeometrySpec, dipole: Vec3) -> Result<Ensemble> {
    let positions = match spec {
        GeometrySpec::Explicit(p) => p.clone(),
        GeometrySpec::Lattice { edge, spacing } => {
            if *edge == 0 {
                return Err(Error::InvalidGeometry("lattice edge count must be positive".into()));
            }
            if !(*spacing > 0.0 && spacing.is_finite()) {
                return Err(Error::InvalidGeometry(format!(
                    "lattice spacing must be positive, got {spacing}"
                )));
            }
            let mut p = Vec::with_capacity(edge * edge * edge);
            for i in 0..*edge {
                for j in 0..*edge {
                    for k in 0..*edge {
                        p.push(Vec3::new(i as f64, j as f64, k as f64) * *spacing);
                    }
                }
            }
            p
        }
        GeometrySpec::Random { count, size, seed } => {
            if *count == 0 {
                return Err(Error::InvalidGeometry("random geometry needs at least one atom".into()));
            }
            if !size.iter().all(|s| *s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidGeometry(format!(
                    "box dimensions must be positive, got {:?}",
                    size.as_slice()
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            (0..*count)
                .map(|_| {
                    Vec3::new(
                        rng.gen::<f64>() * size.x,
                        rng.gen::<f64>() * size.y,
                        rng.gen::<f64>() * size.z,
                    )
                })
                .collect()
        }
    };
    Ensemble::new(positions, dipole)
}

/// Scale dimensionless positions back to micrometres.
pub fn to_physical(ens: &Ensemble, k0_inverse_um: f64) -> Result<Vec<Vec3>> {
    if !(k0_inverse_um > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "k0^-1 must be positive, got {k0_inverse_um}"
        )));
    }
    Ok(ens.positions().iter().map(|p| p * k0_inverse_um).collect())
}

/// Spatial profile of the laser.
#[derive(Debug, Clone, PartialEq)]
pub enum Beam {
    PlaneWave { direction: Vec3 },
    /// Plane wave reaching only the listed atoms; the others are dark.
    Masked {
        direction: Vec3,
        illuminated: BTreeSet<usize>,
    },
}

impl Beam {
    pub fn direction(&self) -> Vec3 {
        match self {
            Beam::PlaneWave { direction } | Beam::Masked { direction, .. } => *direction,
        }
    }

    fn rotated(&self, rotation: &Rotation3<f64>) -> Self {
        match self {
            Beam::PlaneWave { direction } => Beam::PlaneWave {
                direction: rotation * direction,
            },
            Beam::Masked {
                direction,
                illuminated,
            } => Beam::Masked {
                direction: rotation * direction,
                illuminated: illuminated.clone(),
            },
        }
    }
}

/// Laser detuning, strength `η = Ω/2Γ` and beam profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Drive {
    pub delta: f64,
    pub eta: f64,
    pub beam: Beam,
}

impl Drive {
    pub fn new(delta: f64, eta: f64, beam: Beam) -> Result<Self> {
        if !delta.is_finite() {
            return Err(Error::InvalidArgument(format!("detuning must be finite, got {delta}")));
        }
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(Error::InvalidArgument(format!("eta must be >= 0, got {eta}")));
        }
        check_unit(&beam.direction(), "beam direction")?;
        Ok(Self { delta, eta, beam })
    }

    pub fn plane_wave(delta: f64, eta: f64, direction: Vec3) -> Result<Self> {
        Self::new(delta, eta, Beam::PlaneWave { direction })
    }

    pub fn rotated(&self, rotation: &Rotation3<f64>) -> Self {
        Self {
            beam: self.beam.rotated(rotation),
            ..self.clone()
        }
    }

    /// Laser amplitudes `w_μ = exp(i K̂·r_μ)` (zero for dark atoms).
    pub fn excitation(&self, ens: &Ensemble) -> Result<Excitation> {
        let k = self.beam.direction();
        let lit = |i: usize| match &self.beam {
            Beam::PlaneWave { .. } => true,
            Beam::Masked { illuminated, .. } => illuminated.contains(&i),
        };
        if let Beam::Masked { illuminated, .. } = &self.beam {
            if let Some(&bad) = illuminated.iter().find(|&&i| i >= ens.len()) {
                return Err(Error::InvalidArgument(format!(
                    "illuminated index {bad} out of range for {} atoms",
                    ens.len()
                )));
            }
        }
        let w = ens
            .positions()
            .iter()
            .enumerate()
            .map(|(i, r)| {
                if lit(i) {
                    Complex64::from_polar(1.0, k.dot(r))
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        Ok(Excitation {
            delta: self.delta,
            eta: self.eta,
            w,
        })
    }
}

/// A drive resolved on a concrete ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct Excitation {
    pub delta: f64,
    pub eta: f64,
    pub w: Vec<Complex64>,
}

impl Excitation {
    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn with_eta(&self, eta: f64) -> Self {
        Self { eta, ..self.clone() }
    }

    /// Multiply every amplitude by `exp(iχ)`.
    pub fn with_global_phase(&self, chi: f64) -> Self {
        let phase = Complex64::from_polar(1.0, chi);
        Self {
            w: self.w.iter().map(|w| w * phase).collect(),
            ..self.clone()
        }
    }

    pub fn is_lit(&self, i: usize) -> bool {
        self.w[i].norm_sqr() > 0.0
    }
}

/// Two disjoint, non-empty groups of atoms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    a: Vec<usize>,
    b: Vec<usize>,
}

impl Partition {
    pub fn new(a: Vec<usize>, b: Vec<usize>, n: usize) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::InvalidPartition("group A is empty".into()));
        }
        if b.is_empty() {
            return Err(Error::InvalidPartition("group B is empty".into()));
        }
        let mut seen = BTreeSet::new();
        for &i in a.iter().chain(b.iter()) {
            if i >= n {
                return Err(Error::InvalidPartition(format!(
                    "index {i} out of range for {n} atoms"
                )));
            }
            if !seen.insert(i) {
                return Err(Error::InvalidPartition(format!(
                    "atom {i} listed twice (groups must be disjoint)"
                )));
            }
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &[usize] {
        &self.a
    }

    pub fn b(&self) -> &[usize] {
        &self.b
    }

    pub fn n_a(&self) -> usize {
        self.a.len()
    }

    pub fn n_b(&self) -> usize {
        self.b.len()
    }

    pub fn n_ab(&self) -> usize {
        self.a.len() + self.b.len()
    }

    /// A atoms followed by B atoms.
    pub fn ordered(&self) -> Vec<usize> {
        self.a.iter().chain(self.b.iter()).copied().collect()
    }

    /// The same split expressed on the restricted index space `0..n_ab`.
    pub fn local(&self) -> Self {
        let n_a = self.n_a();
        Self {
            a: (0..n_a).collect(),
            b: (n_a..self.n_ab()).collect(),
        }
    }
}

/// Advisory flags for the regime in which the perturbative results hold.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeReport {
    pub eta_window_ok: bool,
    pub dilute_ok: bool,
    /// `None` when the far-field check was not requested.
    pub farfield_ok: Option<bool>,
    pub min_distance: f64,
    pub velocity_note: &'static str,
}

pub const VELOCITY_NOTE: &str =
    "atoms assumed static: velocities must stay well below Γ/k0 (T/A ≪ 1 K); motion is not modelled";

pub fn regime_check(ens: &Ensemble, drive: &Drive, part: &Partition, farfield: bool) -> RegimeReport {
    let alpha3 = FINE_STRUCTURE.powi(3);
    let eta = drive.eta;
    let eta_window_ok = eta >= ETA_WINDOW_FACTOR * alpha3 && eta * ETA_WINDOW_FACTOR <= 1.0;
    let min_distance = ens.min_pair_distance();
    let farfield_ok = farfield.then(|| {
        let d = (ens.centroid(part.b()) - ens.centroid(part.a())).norm();
        let l = ens.diameter(part.a()).max(ens.diameter(part.b()));
        d >= FARFIELD_FACTOR * l * l
    });
    RegimeReport {
        eta_window_ok,
        dilute_ok: min_distance >= DILUTE_MIN_DISTANCE,
        farfield_ok,
        min_distance,
        velocity_note: VELOCITY_NOTE,
    }
}
