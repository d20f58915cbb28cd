//! The `solve`, `sweep`, `bounds` and `oracle-compare` tasks.

use std::fmt::Write as _;
use std::path::Path;

use dipolar::dilute::{bound_omega, lmin_bound, nmax_analytic, FarFieldConfig};
use dipolar::entanglement::{
    lambda2_spectrum, build_v, model_min_eigenvalue, model_negativity, negativity_report, build_pt_matrix,
    pt_negativity, NegativityReport, ReportOptions, Verdict,
};
use dipolar::hilbert::partial_trace;
use dipolar::io::{fmt_f64, write_u_csv, write_v_csv, write_z_csv};
use dipolar::model::{regime_check, Drive, Excitation, RegimeReport};
use dipolar::oracle::{build_liouvillian, negativity_exact, steady_state_exact, ORACLE_CAP};
use dipolar::perturb::{pair_count, PerturbState};
use dipolar::{coupling_matrix, solve_state, CouplingMatrix, Ensemble, Partition};
use num_complex::Complex64;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::{CliError, Context};

/// JSON report plus named CSV tables.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultBundle {
    pub report: Value,
    pub tables: Vec<(String, String)>,
}

impl ResultBundle {
    pub fn table(&self, name: &str) -> Option<&str> {
        self.tables.iter().find(|(n, _)| n == name).map(|(_, t)| t.as_str())
    }

    pub fn write_to(&self, dir: &Path) -> Result<(), CliError> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| CliError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let report = dir.join("report.json");
        let text = serde_json::to_string_pretty(&self.report).expect("report serialises");
        std::fs::write(&report, text + "\n").map_err(io(&report))?;
        for (name, body) in &self.tables {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(io(&path))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub parallel: usize,
    /// Also write `z.csv`.
    pub dump_z: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            parallel: 1,
            dump_z: false,
        }
    }
}

pub fn provenance(cfg: &RunConfig, command: &str) -> Value {
    json!({
        "command": command,
        "config_sha256": cfg.sha256(),
        "seed": cfg.seed(),
        "version": env!("CARGO_PKG_VERSION"),
    })
}

pub(crate) fn c(z: Complex64) -> Value {
    json!([z.re, z.im])
}

fn opt_csv(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn thread_pool(parallel: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallel)
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start thread pool: {e}")))
}

/// Everything derived from the config at one drive strength.
pub struct Setup {
    pub ens: Ensemble,
    pub drive: Drive,
    pub ex: Excitation,
    pub part: Partition,
    pub z: CouplingMatrix,
}

impl Setup {
    pub fn new(cfg: &RunConfig, eta: f64) -> Result<Self, CliError> {
        let ens = cfg.ensemble()?;
        let n = ens.len();
        let drive = cfg.drive(n, eta)?;
        let part = cfg.partition(n)?;
        let ex = drive.excitation(&ens).context("laser amplitudes")?;
        let z = coupling_matrix(&ens).context("coupling matrix")?;
        Ok(Self {
            ens,
            drive,
            ex,
            part,
            z,
        })
    }

    pub fn solve(&self, cfg: &RunConfig) -> Result<PerturbState, CliError> {
        solve_state(&self.z, &self.ex, &cfg.pair_solver()?).context("perturbative solve")
    }

    pub fn regime(&self, cfg: &RunConfig) -> RegimeReport {
        regime_check(&self.ens, &self.drive, &self.part, cfg.farfield)
    }
}

/// Exact steady-state negativity of `part` (other atoms traced out).
pub fn exact_negativity(z: &CouplingMatrix, ex: &Excitation, part: &Partition) -> dipolar::Result<f64> {
    let l = build_liouvillian(z, ex)?;
    let ss = steady_state_exact(&l)?;
    let n = z.len();
    if part.n_ab() == n {
        negativity_exact(&ss.rho, n, part)
    } else {
        let rho = partial_trace(&ss.rho, n, &part.ordered());
        negativity_exact(&rho, part.n_ab(), &part.local())
    }
}

fn default_grid() -> Vec<f64> {
    (0..=80).map(|k| 10f64.powf(-4.0 + k as f64 / 20.0)).collect()
}

fn regime_json(r: &RegimeReport) -> Value {
    json!({
        "eta_window_ok": r.eta_window_ok,
        "dilute_ok": r.dilute_ok,
        "farfield_ok": r.farfield_ok,
        "min_distance": r.min_distance,
        "note": r.velocity_note,
    })
}

fn negativity_json(r: &NegativityReport) -> Value {
    let modes: Vec<Value> = r
        .modes
        .iter()
        .map(|m| {
            json!({
                "lambda2": m.lambda2,
                "lambda4": m.lambda4,
                "threshold_eta": m.threshold_eta,
                "threshold_omega": m.threshold_omega,
                "degenerate": m.degenerate,
                "dilute_extrapolated": m.dilute_extrapolated,
            })
        })
        .collect();
    json!({
        "eta": r.eta,
        "negativity2": r.negativity2,
        "negativity_pt": r.negativity_pt,
        "pt_spectrum": r.spectrum,
        "modes": modes,
        "curve": {
            "eta": r.curve.eta,
            "negativity": r.curve.negativity,
            "eta_max": r.curve.eta_max,
            "n_max": r.curve.n_max,
        },
        "model_threshold_eta": r.model_threshold_eta,
        "model_threshold_omega": r.model_threshold_eta.map(|e| 2.0 * e),
        "verdict": match r.verdict {
            Verdict::Entangled => "entangled",
            Verdict::Undetected => "undetected",
        },
    })
}

fn farfield_json(s: &Setup) -> Result<Value, CliError> {
    let ff = FarFieldConfig::from_geometry(&s.ens, &s.ex, &s.part).context("far-field parameters")?;
    let (n_max, eta_max) = nmax_analytic(&ff);
    Ok(json!({
        "k0D": ff.d,
        "theta": ff.theta,
        "D0": ff.d0,
        "s_A": c(ff.s_a),
        "s_B": c(ff.s_b),
        "bound_omega": bound_omega(&ff),
        "N_max": n_max,
        "eta_max": eta_max,
    }))
}

fn report_options(cfg: &RunConfig, regime: &RegimeReport) -> ReportOptions {
    ReportOptions {
        max_pt_dim: cfg.max_pt_dim(),
        dilute: regime.dilute_ok,
    }
}

fn negativity_csv(r: &NegativityReport) -> String {
    let mut s = String::from("eta,N_model\n");
    for (e, n) in r.curve.eta.iter().zip(&r.curve.negativity) {
        let _ = writeln!(s, "{},{}", fmt_f64(*e), fmt_f64(*n));
    }
    s
}

fn csv_of(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> String {
    let mut buf = Vec::new();
    f(&mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

/// `v` is inlined in the JSON only up to this many pairs; `v.csv` always has it.
const JSON_PAIR_LIMIT: usize = 20_000;

pub fn run_solve(cfg: &RunConfig, opts: &RunOptions) -> Result<ResultBundle, CliError> {
    let eta = cfg.eta()?;
    let s = Setup::new(cfg, eta)?;
    let state = s.solve(cfg)?;
    let regime = s.regime(cfg);
    let grid = if cfg.eta_sweep.is_some() { cfg.eta_grid()? } else { default_grid() };
    let neg = negativity_report(&state, &s.part, &grid, &report_options(cfg, &regime)).context("negativity report")?;
    let n = s.ens.len();
    let exact = if n <= ORACLE_CAP {
        Some(exact_negativity(&s.z, &s.ex, &s.part).context("exact oracle")?)
    } else {
        None
    };
    let v = (pair_count(n) <= JSON_PAIR_LIMIT).then(|| {
        state
            .v
            .iter()
            .map(|(mu, nu, x)| json!({"mu": mu, "nu": nu, "re": x.re, "im": x.im}))
            .collect::<Vec<_>>()
    });
    let mut report = json!({
        "provenance": provenance(cfg, "solve"),
        "atoms": n,
        "delta": s.ex.delta,
        "eta": eta,
        "regime": regime_json(&regime),
        "u": state.u.iter().map(|x| c(*x)).collect::<Vec<_>>(),
        "v": v,
        "negativity": negativity_json(&neg),
        "negativity_exact": exact,
    });
    if cfg.farfield {
        report["farfield"] = farfield_json(&s)?;
    }
    let mut tables = vec![
        ("u.csv".to_string(), csv_of(|b| write_u_csv(b, &state.u))),
        ("v.csv".to_string(), csv_of(|b| write_v_csv(b, &state.v))),
        ("negativity.csv".to_string(), negativity_csv(&neg)),
    ];
    if opts.dump_z {
        tables.push(("z.csv".to_string(), csv_of(|b| write_z_csv(b, &s.z))));
    }
    Ok(ResultBundle { report, tables })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub eta: f64,
    pub n_model: f64,
    pub min_model: f64,
    pub n_pt: Option<f64>,
    pub n_exact: Option<f64>,
    pub error: Option<String>,
}

fn sweep_point(
    state: &PerturbState,
    setup: &Setup,
    pairs: &[(f64, f64)],
    eta: f64,
    pt: bool,
    exact: bool,
) -> SweepRow {
    let mut row = SweepRow {
        eta,
        n_model: model_negativity(pairs, eta),
        min_model: model_min_eigenvalue(pairs, eta),
        n_pt: None,
        n_exact: None,
        error: None,
    };
    let mut errors = Vec::new();
    if pt {
        match build_pt_matrix(&state.with_eta(eta), &setup.part) {
            Ok(m) => row.n_pt = Some(pt_negativity(&m).0),
            Err(e) => errors.push(format!("partial transpose: {e}")),
        }
    }
    if exact {
        match exact_negativity(&setup.z, &setup.ex.with_eta(eta), &setup.part) {
            Ok(x) => row.n_exact = Some(x),
            Err(e) => errors.push(format!("exact oracle: {e}")),
        }
    }
    if !errors.is_empty() {
        row.error = Some(errors.join("; "));
    }
    row
}

/// Linear interpolation of the last negative-to-non-negative crossing.
pub fn last_sign_change(eta: &[f64], f: &[f64]) -> Option<f64> {
    (0..eta.len().saturating_sub(1))
        .rev()
        .find(|&k| f[k] < 0.0 && f[k + 1] >= 0.0)
        .map(|k| eta[k] + (eta[k + 1] - eta[k]) * (-f[k]) / (f[k + 1] - f[k]))
}

pub fn run_sweep(cfg: &RunConfig, opts: &RunOptions) -> Result<ResultBundle, CliError> {
    let grid = cfg.eta_grid()?;
    let s = Setup::new(cfg, grid[0])?;
    let state = s.solve(cfg)?;
    let regime = s.regime(cfg);
    let neg = negativity_report(&state, &s.part, &grid, &report_options(cfg, &regime)).context("negativity report")?;
    let pairs = neg.lambda_pairs();
    let n_ab = s.part.n_ab();
    let pt = 1 + n_ab + pair_count(n_ab) <= cfg.max_pt_dim();
    let exact = s.ens.len() <= ORACLE_CAP;

    let pool = thread_pool(opts.parallel)?;
    let rows: Vec<SweepRow> = pool.install(|| {
        grid.par_iter()
            .map(|&eta| sweep_point(&state, &s, &pairs, eta, pt, exact))
            .collect()
    });

    let mins: Vec<f64> = rows.iter().map(|r| r.min_model).collect();
    let threshold = last_sign_change(&grid, &mins);
    let (k_best, _) = rows
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bk, bv), (k, r)| if r.n_model > bv { (k, r.n_model) } else { (bk, bv) });
    let failures: Vec<Value> = rows
        .iter()
        .enumerate()
        .filter_map(|(k, r)| r.error.as_ref().map(|e| json!({"index": k, "eta": r.eta, "error": e})))
        .collect();

    let mut csv = String::from("eta,N_model,N_pt");
    if exact {
        csv.push_str(",N_exact");
    }
    csv.push_str(",min_eigenvalue_model,error\n");
    for r in &rows {
        let _ = write!(csv, "{},{},{}", fmt_f64(r.eta), fmt_f64(r.n_model), opt_csv(r.n_pt));
        if exact {
            let _ = write!(csv, ",{}", opt_csv(r.n_exact));
        }
        let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        let _ = writeln!(csv, ",{},{err}", fmt_f64(r.min_model));
    }

    let mut report = json!({
        "provenance": provenance(cfg, "sweep"),
        "atoms": s.ens.len(),
        "delta": s.ex.delta,
        "regime": regime_json(&regime),
        "points": grid.len(),
        "threshold": {
            "eta": threshold,
            "omega": threshold.map(|e| 2.0 * e),
            "model_eta": neg.model_threshold_eta,
            "model_omega": neg.model_threshold_eta.map(|e| 2.0 * e),
        },
        "extremum": {
            "grid_eta": grid[k_best],
            "grid_negativity": rows[k_best].n_model,
            "eta_max": neg.curve.eta_max,
            "n_max": neg.curve.n_max,
        },
        "modes": negativity_json(&neg)["modes"].clone(),
        "failures": failures,
    });
    if cfg.farfield {
        report["farfield"] = farfield_json(&s)?;
    }
    Ok(ResultBundle {
        report,
        tables: vec![("sweep.csv".to_string(), csv)],
    })
}

pub fn run_bounds(cfg: &RunConfig) -> Result<ResultBundle, CliError> {
    let delta = cfg.check_delta()?;
    let cfg_err = |path: &str, message: &str| CliError::Config {
        path: path.into(),
        message: message.into(),
    };
    let (ff, spacing, omega) = match &cfg.bounds {
        Some(b) => {
            let k0d = match (b.k0d, b.distance, b.k0_inverse) {
                (Some(k), _, _) => k,
                (None, Some(d), Some(k)) => {
                    if !(k > 0.0) {
                        return Err(cfg_err("bounds.k0_inverse", "must be positive"));
                    }
                    d / k
                }
                _ => return Err(cfg_err("bounds.k0D", "required (or bounds.distance with bounds.k0_inverse)")),
            };
            if !(k0d > 0.0 && k0d.is_finite()) {
                return Err(cfg_err("bounds.k0D", "must be positive"));
            }
            if b.n_a == 0 {
                return Err(cfg_err("bounds.n_A", "must be positive"));
            }
            if b.n_b == 0 {
                return Err(cfg_err("bounds.n_B", "must be positive"));
            }
            if !b.theta.is_finite() {
                return Err(cfg_err("bounds.theta", "must be finite"));
            }
            let ff = FarFieldConfig::from_parameters(b.n_a, b.n_b, b.theta, k0d, delta).context("far-field parameters")?;
            (ff, b.spacing, b.omega)
        }
        None => {
            let s = Setup::new(cfg, cfg.eta.unwrap_or(0.0))?;
            let ff = FarFieldConfig::from_geometry(&s.ens, &s.ex, &s.part).context("far-field parameters")?;
            (ff, None, None)
        }
    };
    let (n_max, eta_max) = nmax_analytic(&ff);
    let length = match (spacing, omega) {
        (Some(d), Some(o)) => match lmin_bound(d, delta, ff.d, o, ff.theta) {
            Ok(l) => Some(l),
            Err(dipolar::Error::NotApplicable(msg)) => {
                log::warn!("L_min not applicable: {msg}");
                None
            }
            Err(e) => return Err(CliError::Config {
                path: "bounds".into(),
                message: e.to_string(),
            }),
        },
        _ => None,
    };
    let report = json!({
        "provenance": provenance(cfg, "bounds"),
        "k0D": ff.d,
        "D0": ff.d0,
        "bound_omega": bound_omega(&ff),
        "N_max": n_max,
        "eta_max": eta_max,
        "L_min": length.map(|l| l.l_min),
        "n_min": length.map(|l| l.n_min),
    });
    Ok(ResultBundle {
        report,
        tables: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub eta: f64,
    pub n_exact: Option<f64>,
    pub n_perturbative: f64,
    pub error: Option<String>,
}

pub fn run_oracle_compare(cfg: &RunConfig, opts: &RunOptions) -> Result<ResultBundle, CliError> {
    let etas = cfg.eta_points()?;
    let s = Setup::new(cfg, etas[0])?;
    if s.ens.len() > ORACLE_CAP {
        return Err(CliError::Config {
            path: "geometry".into(),
            message: format!("oracle-compare handles at most {ORACLE_CAP} atoms, got {}", s.ens.len()),
        });
    }
    let state = s.solve(cfg)?;
    let weight = lambda2_spectrum(&build_v(&state, &s.part)).negative_weight();
    let pool = thread_pool(opts.parallel)?;
    let rows: Vec<OracleRow> = pool.install(|| {
        etas.par_iter()
            .map(|&eta| {
                let (n_exact, error) = match exact_negativity(&s.z, &s.ex.with_eta(eta), &s.part) {
                    Ok(x) => (Some(x), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                OracleRow {
                    eta,
                    n_exact,
                    n_perturbative: eta * eta * weight,
                    error,
                }
            })
            .collect()
    });
    let mut csv = String::from("eta,N_exact,N_perturbative,abs_error\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            fmt_f64(r.eta),
            opt_csv(r.n_exact),
            fmt_f64(r.n_perturbative),
            opt_csv(r.n_exact.map(|x| (x - r.n_perturbative).abs()))
        );
    }
    let failures: Vec<Value> = rows
        .iter()
        .enumerate()
        .filter_map(|(k, r)| r.error.as_ref().map(|e| json!({"index": k, "eta": r.eta, "error": e})))
        .collect();
    let max_error = rows
        .iter()
        .filter_map(|r| r.n_exact.map(|x| (x - r.n_perturbative).abs()))
        .fold(None, |acc: Option<f64>, e| Some(acc.map_or(e, |a| a.max(e))));
    let report = json!({
        "provenance": provenance(cfg, "oracle-compare"),
        "atoms": s.ens.len(),
        "delta": s.ex.delta,
        "points": rows.len(),
        "max_abs_error": max_error,
        "failures": failures,
    });
    Ok(ResultBundle {
        report,
        tables: vec![("oracle.csv".to_string(), csv)],
    })
}
