//! Run configuration: JSON schema, loading and per-field validation.

use std::collections::BTreeSet;

use dipolar::model::{Beam, Drive, GeometrySpec};
use dipolar::{Ensemble, Partition, Vec3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeometryConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dipole: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beam: Option<BeamConfig>,
    #[serde(default)]
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_sweep: Option<EtaSweep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<PartitionConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsConfig>,
    /// Ask for the far-field regime check and the far-field estimates.
    #[serde(default)]
    pub farfield: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parallel: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeometryMode {
    Explicit,
    Lattice,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub mode: GeometryMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<LatticeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random: Option<RandomConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub edge: usize,
    pub spacing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomConfig {
    pub count: usize,
    pub size: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamConfig {
    pub direction: [f64; 3],
    /// Dark atoms.
    #[serde(default)]
    pub mask: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EtaSweep {
    pub min: f64,
    pub max: f64,
    pub points: usize,
    #[serde(default)]
    pub log: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    #[serde(rename = "A")]
    pub a: Vec<usize>,
    #[serde(rename = "B")]
    pub b: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverMethod {
    #[default]
    Auto,
    Dense,
    Iterative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default)]
    pub method: SolverMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restart: Option<usize>,
    /// Largest partial transpose that is diagonalised.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_pt_dim: Option<usize>,
}

/// Far-field formula inputs. Lengths share one unit; `k0D` may be given
/// directly or as `distance / k0_inverse`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    #[serde(rename = "n_A")]
    pub n_a: usize,
    #[serde(rename = "n_B")]
    pub n_b: usize,
    pub theta: f64,
    #[serde(rename = "k0D", default, skip_serializing_if = "Option::is_none")]
    pub k0d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k0_inverse: Option<f64>,
    /// Atom spacing inside a group, needed for `L_min`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
    /// `Ω/Γ`, needed for `L_min`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
}

fn cfg_err(path: impl Into<String>, message: impl Into<String>) -> CliError {
    CliError::Config {
        path: path.into(),
        message: message.into(),
    }
}

fn finite(path: &str, x: f64) -> Result<f64, CliError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(cfg_err(path, format!("must be finite, got {x}")))
    }
}

fn vec3(v: [f64; 3]) -> Vec3 {
    Vec3::new(v[0], v[1], v[2])
}

fn unit(path: &str, v: [f64; 3]) -> Result<Vec3, CliError> {
    for (k, x) in v.iter().enumerate() {
        finite(&format!("{path}[{k}]"), *x)?;
    }
    let u = vec3(v);
    if (u.norm() - 1.0).abs() > 1e-9 {
        return Err(cfg_err(path, format!("must be a unit vector (norm {})", u.norm())));
    }
    Ok(u)
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let path = if path == "." { "<root>".to_string() } else { path };
            cfg_err(path, e.into_inner().to_string())
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg_err("--config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Sorted-key compact JSON; the hash input for provenance.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serialises");
        value.to_string()
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    /// Replace the top-level seed and any random-geometry seed.
    pub fn override_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        if let Some(GeometryConfig {
            random: Some(r), ..
        }) = self.geometry.as_mut()
        {
            r.seed = Some(seed);
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(1)
    }

    pub fn check_delta(&self) -> Result<f64, CliError> {
        finite("delta", self.delta)
    }

    pub fn ensemble(&self) -> Result<Ensemble, CliError> {
        let dipole = unit("dipole", self.dipole.ok_or_else(|| cfg_err("dipole", "required"))?)?;
        let g = self.geometry.as_ref().ok_or_else(|| cfg_err("geometry", "required"))?;
        let spec = match g.mode {
            GeometryMode::Explicit => {
                let p = g
                    .positions
                    .as_ref()
                    .ok_or_else(|| cfg_err("geometry.positions", "required for mode \"explicit\""))?;
                if p.is_empty() {
                    return Err(cfg_err("geometry.positions", "must not be empty"));
                }
                for (i, r) in p.iter().enumerate() {
                    for (k, x) in r.iter().enumerate() {
                        finite(&format!("geometry.positions[{i}][{k}]"), *x)?;
                    }
                }
                GeometrySpec::Explicit(p.iter().map(|r| vec3(*r)).collect())
            }
            GeometryMode::Lattice => {
                let l = g
                    .lattice
                    .as_ref()
                    .ok_or_else(|| cfg_err("geometry.lattice", "required for mode \"lattice\""))?;
                if l.edge == 0 {
                    return Err(cfg_err("geometry.lattice.edge", "must be positive"));
                }
                if !(l.spacing > 0.0 && l.spacing.is_finite()) {
                    return Err(cfg_err("geometry.lattice.spacing", "must be positive"));
                }
                GeometrySpec::Lattice {
                    edge: l.edge,
                    spacing: l.spacing,
                }
            }
            GeometryMode::Random => {
                let r = g
                    .random
                    .as_ref()
                    .ok_or_else(|| cfg_err("geometry.random", "required for mode \"random\""))?;
                if r.count == 0 {
                    return Err(cfg_err("geometry.random.count", "must be positive"));
                }
                for (k, s) in r.size.iter().enumerate() {
                    if !(*s > 0.0 && s.is_finite()) {
                        return Err(cfg_err(format!("geometry.random.size[{k}]"), "must be positive"));
                    }
                }
                GeometrySpec::Random {
                    count: r.count,
                    size: vec3(r.size),
                    seed: r.seed.unwrap_or(self.seed()),
                }
            }
        };
        dipolar::model::build_geometry(&spec, dipole).map_err(|e| cfg_err("geometry", e.to_string()))
    }

    pub fn drive(&self, n: usize, eta: f64) -> Result<Drive, CliError> {
        let beam = self.beam.as_ref().ok_or_else(|| cfg_err("beam", "required"))?;
        let direction = unit("beam.direction", beam.direction)?;
        let beam = if beam.mask.is_empty() {
            Beam::PlaneWave { direction }
        } else {
            let mut dark = BTreeSet::new();
            for (k, &i) in beam.mask.iter().enumerate() {
                if i >= n {
                    return Err(cfg_err(format!("beam.mask[{k}]"), format!("atom {i} out of range for {n} atoms")));
                }
                dark.insert(i);
            }
            Beam::Masked {
                direction,
                illuminated: (0..n).filter(|i| !dark.contains(i)).collect(),
            }
        };
        Drive::new(self.check_delta()?, eta, beam).map_err(|e| cfg_err("beam", e.to_string()))
    }

    pub fn partition(&self, n: usize) -> Result<Partition, CliError> {
        let p = self.partition.as_ref().ok_or_else(|| cfg_err("partition", "required"))?;
        let mut seen = BTreeSet::new();
        for (name, group) in [("A", &p.a), ("B", &p.b)] {
            if group.is_empty() {
                return Err(cfg_err(format!("partition.{name}"), "must not be empty"));
            }
            for (k, &i) in group.iter().enumerate() {
                let path = format!("partition.{name}[{k}]");
                if i >= n {
                    return Err(cfg_err(path, format!("atom {i} out of range for {n} atoms")));
                }
                if !seen.insert(i) {
                    return Err(cfg_err(path, format!("atom {i} listed twice; groups must be disjoint")));
                }
            }
        }
        Partition::new(p.a.clone(), p.b.clone(), n).map_err(|e| cfg_err("partition", e.to_string()))
    }

    pub fn eta(&self) -> Result<f64, CliError> {
        match (self.eta, &self.eta_sweep) {
            (Some(e), _) => {
                if !(e > 0.0 && e.is_finite()) {
                    return Err(cfg_err("eta", format!("must be positive, got {e}")));
                }
                Ok(e)
            }
            (None, Some(_)) => Ok(*self.eta_grid()?.last().expect("grid has points")),
            (None, None) => Err(cfg_err("eta", "required (or eta_sweep)")),
        }
    }

    pub fn eta_grid(&self) -> Result<Vec<f64>, CliError> {
        let s = self.eta_sweep.as_ref().ok_or_else(|| cfg_err("eta_sweep", "required"))?;
        if !(s.min > 0.0 && s.min.is_finite()) {
            return Err(cfg_err("eta_sweep.min", format!("must be positive, got {}", s.min)));
        }
        if !(s.max > s.min && s.max.is_finite()) {
            return Err(cfg_err("eta_sweep.max", "must exceed eta_sweep.min"));
        }
        if s.points < 2 {
            return Err(cfg_err("eta_sweep.points", "need at least 2 points"));
        }
        let last = (s.points - 1) as f64;
        let grid: Vec<f64> = (0..s.points)
            .map(|k| {
                let t = k as f64 / last;
                if k == 0 {
                    s.min
                } else if k == s.points - 1 {
                    s.max
                } else if s.log {
                    (s.min.ln() + t * (s.max.ln() - s.min.ln())).exp()
                } else {
                    s.min + t * (s.max - s.min)
                }
            })
            .collect();
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(cfg_err("eta_sweep.points", "too many points for the range; grid is not monotone"));
        }
        Ok(grid)
    }

    /// Sweep grid if present, else the single `eta`.
    pub fn eta_points(&self) -> Result<Vec<f64>, CliError> {
        if self.eta_sweep.is_some() {
            self.eta_grid()
        } else {
            Ok(vec![self.eta()?])
        }
    }

    pub fn parallelism(&self, flag: Option<usize>) -> Result<usize, CliError> {
        match flag.or(self.parallel) {
            Some(0) => Err(cfg_err(if flag.is_some() { "--parallel" } else { "parallel" }, "must be at least 1")),
            Some(p) => Ok(p),
            None => Ok(1),
        }
    }

    pub fn pair_solver(&self) -> Result<dipolar::perturb::PairSolverOptions, CliError> {
        use dipolar::perturb::{PairMethod, PairSolverOptions};
        let mut o = PairSolverOptions::default();
        if let Some(s) = &self.solver {
            o.method = match s.method {
                SolverMethod::Auto => PairMethod::Auto,
                SolverMethod::Dense => PairMethod::Dense,
                SolverMethod::Iterative => PairMethod::Iterative,
            };
            if let Some(t) = s.tolerance {
                if !(t > 0.0) {
                    return Err(cfg_err("solver.tolerance", "must be positive"));
                }
                o.gmres.tolerance = t;
            }
            if let Some(m) = s.max_iterations {
                o.gmres.max_iterations = m;
            }
            if let Some(r) = s.restart {
                if r == 0 {
                    return Err(cfg_err("solver.restart", "must be positive"));
                }
                o.gmres.restart = r;
            }
        }
        Ok(o)
    }

    pub fn max_pt_dim(&self) -> usize {
        self.solver
            .as_ref()
            .and_then(|s| s.max_pt_dim)
            .unwrap_or_else(|| dipolar::entanglement::ReportOptions::default().max_pt_dim)
    }
}
