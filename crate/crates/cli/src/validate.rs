//! Named invariant checks with measured values (`validate` subcommand).

use std::f64::consts::PI;

use dipolar::coupling::CouplingMatrix;
use dipolar::entanglement::{build_pt_matrix, build_v, lambda2_spectrum, pt_negativity};
use dipolar::hilbert::partial_trace;
use dipolar::linalg::{hermitian_eigenvalues, max_abs_diff};
use dipolar::model::{build_geometry, Drive, Excitation, GeometrySpec};
use dipolar::oracle::{build_liouvillian, steady_state_exact, DiluteProductState};
use dipolar::perturb::{assemble_state, restrict_state, u_residual, v_residual, PairSolverOptions, RESIDUAL_TOL};
use dipolar::{coupling_matrix, solve_state, Ensemble, Partition, PerturbState, Vec3};
use num_complex::Complex64;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::{CliError, Context};
use crate::run::{exact_negativity, provenance, ResultBundle};

/// Deliberate corruption used to prove the checks can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// `z_01 += 1e-3` without touching `z_10`.
    ZAsymmetry,
}

impl std::str::FromStr for Fault {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "z-asymmetry" => Ok(Fault::ZAsymmetry),
            other => Err(format!("unknown fault `{other}` (known: z-asymmetry)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    /// Human-readable acceptance window.
    pub limit: String,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &'static str, value: f64, limit: f64) -> Self {
        Self {
            name,
            value,
            limit: format!("<= {limit:e}"),
            passed: value <= limit,
        }
    }

    fn at_least(name: &'static str, value: f64, limit: f64) -> Self {
        Self {
            name,
            value,
            limit: format!(">= {limit:e}"),
            passed: value >= limit,
        }
    }

    /// Every ratio inside `[lo, hi]`; `value` is the worst offender.
    fn ratios(name: &'static str, ratios: &[f64], lo: f64, hi: f64) -> Self {
        let worst = ratios
            .iter()
            .copied()
            .max_by(|a, b| dist(*a, lo, hi).total_cmp(&dist(*b, lo, hi)))
            .unwrap_or(f64::NAN);
        Self {
            name,
            value: worst,
            limit: format!("in [{lo}, {hi}]"),
            passed: !ratios.is_empty() && ratios.iter().all(|r| (lo..=hi).contains(r)),
        }
    }
}

fn dist(r: f64, lo: f64, hi: f64) -> f64 {
    if r.is_nan() {
        f64::INFINITY
    } else {
        (lo - r).max(r - hi).max(0.0)
    }
}

fn numerical(what: &'static str) -> impl Fn(dipolar::Error) -> CliError {
    move |source| CliError::Numerical {
        context: what.to_string(),
        source,
    }
}

fn corrupt(z: &CouplingMatrix) -> CouplingMatrix {
    let mut d = z.to_dense();
    d[(0, 1)] += Complex64::new(1e-3, 0.0);
    CouplingMatrix::from_dense(d)
}

/// Atoms `r` apart along x with the dipole along z and a plane wave along z.
fn pair(r: f64, delta: f64, eta: f64) -> dipolar::Result<(CouplingMatrix, Excitation)> {
    let z_hat = Vec3::new(0.0, 0.0, 1.0);
    let ens = Ensemble::new(vec![Vec3::zeros(), Vec3::new(r, 0.0, 0.0)], z_hat)?;
    let ex = Drive::plane_wave(delta, eta, z_hat)?.excitation(&ens)?;
    Ok((coupling_matrix(&ens)?, ex))
}

fn halving_ratios(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| w[0] / w[1]).collect()
}

/// The default suite on a seeded random ensemble.
pub fn validation_checks(seed: u64, fault: Option<Fault>) -> Result<Vec<Check>, CliError> {
    let mut checks = Vec::new();
    let spec = GeometrySpec::Random {
        count: 8,
        size: Vec3::new(6.0, 6.0, 6.0),
        seed,
    };
    let ens = build_geometry(&spec, Vec3::new(0.0, 0.0, 1.0)).context("validation geometry")?;
    let ex = Drive::plane_wave(0.3, 0.05, Vec3::new(0.0, 0.6, 0.8))
        .and_then(|d| d.excitation(&ens))
        .context("validation drive")?;
    let mut z = coupling_matrix(&ens).context("coupling matrix")?;
    if fault == Some(Fault::ZAsymmetry) {
        z = corrupt(&z);
    }
    checks.push(Check::at_most("z_symmetry", z.symmetry_defect(), 0.0));
    checks.push(Check::at_least("gamma_psd", z.gamma_min_eigenvalue(), -1e-10));

    let state = solve_state(&z, &ex, &PairSolverOptions::default()).context("perturbative solve")?;
    checks.push(Check::at_most("u_residual", u_residual(&z, &ex, &state.u), RESIDUAL_TOL));
    checks.push(Check::at_most("v_residual", v_residual(&z, &ex, &state.u, &state.v), RESIDUAL_TOL));

    let part = Partition::new(vec![0, 1, 2], vec![3, 4, 5], 8).context("validation partition")?;
    let v = build_v(&state, &part);
    let embedding_sum: f64 = hermitian_eigenvalues(&v.hermitian_embedding()).iter().sum();
    checks.push(Check::at_most("v_traceless", embedding_sum.abs(), 1e-12));
    checks.push(Check::at_most("pm_pairing", v.pairing_defect(), 1e-10));

    let pt = build_pt_matrix(&state, &part).context("partial transpose")?;
    checks.push(Check::at_most("pt_hermiticity", pt.hermiticity_defect(), 1e-12));
    checks.push(Check::at_most("pt_trace", (pt.trace() - 1.0).norm(), 1e-12));

    let sub = [0, 1, 2, 3, 4];
    let small = restrict_state(&state, &sub).context("restriction")?;
    let traced = partial_trace(&assemble_state(&small_parent(&state, 6)?).to_full_basis(), 6, &sub);
    let restricted = assemble_state(&small).to_full_basis();
    checks.push(Check::at_most("restriction_partial_trace", max_abs_diff(&traced, &restricted), 1e-12));

    let n_pt = pt_negativity(&pt).0;
    let n2 = lambda2_spectrum(&v).negative_weight();
    let turned = solve_state(&z, &ex.with_global_phase(0.7), &PairSolverOptions::default()).context("rotated solve")?;
    let n_pt_turned = pt_negativity(&build_pt_matrix(&turned, &part).context("partial transpose")?).0;
    let n2_turned = lambda2_spectrum(&build_v(&turned, &part)).negative_weight();
    checks.push(Check::at_most(
        "phase_invariance",
        (n_pt - n_pt_turned).abs().max((n2 - n2_turned).abs()),
        1e-10,
    ));

    let few = z.submatrix(&[0, 1, 2]);
    let few_ex = Excitation {
        w: ex.w[..3].to_vec(),
        ..ex.clone()
    };
    let l = build_liouvillian(&few, &few_ex).context("Liouvillian")?;
    checks.push(Check::at_most("liouvillian_trace", l.trace_defect(), 1e-10));
    let local = Partition::new(vec![0], vec![1, 2], 3).context("oracle partition")?;
    let n_exact = exact_negativity(&few, &few_ex, &local).context("exact oracle")?;
    let n_exact_flipped = exact_negativity(&few, &few_ex.with_global_phase(PI), &local).context("exact oracle")?;
    checks.push(Check::at_most("exact_sign_flip_invariance", (n_exact - n_exact_flipped).abs(), 1e-10));

    let mut single = 0.0f64;
    for eta in [0.01, 0.1, 1.0] {
        for delta in [0.0, 0.5] {
            let ens = Ensemble::new(vec![Vec3::zeros()], Vec3::new(0.0, 0.0, 1.0)).context("single atom")?;
            let ex = Drive::plane_wave(delta, eta, Vec3::new(1.0, 0.0, 0.0))
                .and_then(|d| d.excitation(&ens))
                .context("single atom drive")?;
            let z = coupling_matrix(&ens).context("single atom")?;
            let ss = steady_state_exact(&build_liouvillian(&z, &ex).context("Liouvillian")?).context("steady state")?;
            single = single.max(max_abs_diff(&ss.rho, &DiluteProductState::new(&ex).to_full_basis()));
        }
    }
    checks.push(Check::at_most("single_atom_exact", single, 1e-12));

    let etas = [0.04, 0.02, 0.01];
    let mut state_err = Vec::new();
    let mut neg_err = Vec::new();
    for eta in etas {
        let (z, ex) = pair(1.0, 0.0, eta).map_err(numerical("oracle pair"))?;
        let ss = steady_state_exact(&build_liouvillian(&z, &ex).context("Liouvillian")?).context("steady state")?;
        let st = solve_state(&z, &ex, &PairSolverOptions::default()).context("perturbative solve")?;
        state_err.push(max_abs_diff(&ss.rho, &assemble_state(&st).to_full_basis()));
        let p = Partition::new(vec![0], vec![1], 2).context("pair partition")?;
        let exact = exact_negativity(&z, &ex, &p).context("exact oracle")?;
        let lead = eta * eta * lambda2_spectrum(&build_v(&st, &p)).negative_weight();
        neg_err.push((exact - lead).abs());
    }
    checks.push(Check::ratios("oracle_state_scaling", &halving_ratios(&state_err), 6.0, 10.0));
    checks.push(Check::ratios("oracle_negativity_scaling", &halving_ratios(&neg_err), 8.0, 32.0));
    Ok(checks)
}

/// First `n` atoms of `state`, re-indexed.
fn small_parent(state: &PerturbState, n: usize) -> Result<PerturbState, CliError> {
    restrict_state(state, &(0..n).collect::<Vec<_>>()).context("restriction")
}

pub fn checks_json(checks: &[Check]) -> Value {
    Value::Array(
        checks
            .iter()
            .map(|c| json!({"name": c.name, "value": c.value, "limit": c.limit, "passed": c.passed}))
            .collect(),
    )
}

/// Runs the suite; the bundle's `passed` field says whether every check held.
pub fn run_validate(cfg: &RunConfig, fault: Option<Fault>) -> Result<ResultBundle, CliError> {
    let checks = validation_checks(cfg.seed(), fault)?;
    let passed = checks.iter().all(|c| c.passed);
    let mut report = json!({
        "provenance": provenance(cfg, "validate"),
        "passed": passed,
        "checks": checks_json(&checks),
    });
    if let Some(f) = fault {
        report["fault"] = json!(format!("{f:?}"));
    }
    let mut csv = String::from("name,value,limit,passed\n");
    for c in &checks {
        csv.push_str(&format!("{},{},{},{}\n", c.name, dipolar::io::fmt_f64(c.value), c.limit, c.passed));
    }
    Ok(ResultBundle {
        report,
        tables: vec![("checks.csv".to_string(), csv)],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_check_reports_worst_offender() {
        let c = Check::ratios("r", &[8.0, 40.0, 9.0], 8.0, 32.0);
        assert!(!c.passed);
        assert_eq!(c.value, 40.0);
        assert!(!Check::ratios("r", &[], 8.0, 32.0).passed);
    }

    #[test]
    fn fault_names_parse() {
        assert_eq!("z-asymmetry".parse::<Fault>(), Ok(Fault::ZAsymmetry));
        assert!("nope".parse::<Fault>().is_err());
    }
}
