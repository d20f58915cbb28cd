use std::process::Command;

use dipolar::dilute::{bound_omega, quartic_spectrum, FarFieldConfig};
use dipolar::model::Drive;
use dipolar::perturb::PairSolverOptions;
use dipolar::{coupling_matrix, solve_state, Ensemble, Vec3};
use dipolar_cli::run::{run_bounds, run_oracle_compare, run_solve, run_sweep, RunOptions};
use dipolar_cli::{run_validate, CliError, Fault, RunConfig};
use num_complex::Complex64;
use serde_json::Value;

fn config(text: &str) -> RunConfig {
    RunConfig::from_json(text).unwrap()
}

const PAIR: &str = r#"{
    "geometry": {"mode": "explicit", "positions": [[0, 0, 0], [1, 0, 0]]},
    "dipole": [0, 0, 1],
    "beam": {"direction": [0, 0, 1]},
    "delta": 0.0,
    "eta": 0.05,
    "partition": {"A": [0], "B": [1]}
}"#;

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

#[test]
fn two_atom_negativity_matches_closed_form() {
    let bundle = run_solve(&config(PAIR), &RunOptions::default()).unwrap();
    let r = 1.0f64;
    // Atoms on x, dipole on z: z12 = (3/4) e^{ir} (i + r - i r²) / r³.
    let i = Complex64::i();
    let z12 = 0.75 * Complex64::from_polar(1.0, r) * (i + r - i * r * r) / r.powi(3);
    let v12 = -2.0 * z12 / ((0.5 + z12) * (0.5 + z12));
    let expected = 0.05 * 0.05 * v12.norm();
    let got = f(&bundle.report["negativity"]["negativity2"]);
    assert!((got - expected).abs() <= 1e-12 * expected, "{got} vs {expected}");
    let v = &bundle.report["v"][0];
    assert!((f(&v["re"]) - v12.re).abs() < 1e-12 && (f(&v["im"]) - v12.im).abs() < 1e-12);
    assert!(bundle.report["negativity_exact"].is_number());
    assert_eq!(bundle.table("u.csv").unwrap().lines().count(), 3);
    assert_eq!(bundle.table("v.csv").unwrap().lines().count(), 2);
}

#[test]
fn empty_partition_names_the_field() {
    let mut cfg = config(PAIR);
    cfg.partition.as_mut().unwrap().a.clear();
    match run_solve(&cfg, &RunOptions::default()) {
        Err(e @ CliError::Config { .. }) => {
            assert!(e.to_string().contains("partition.A"), "{e}");
            assert_eq!(e.exit_code(), 2);
        }
        other => panic!("expected config error, got {other:?}"),
    }
}

#[test]
fn config_errors_carry_paths() {
    let bad = [
        (r#"{"dipole": [0, 0, 2], "eta": 0.1}"#, "dipole"),
        (r#"{"geometry": {"mode": "lattice"}, "dipole": [0, 0, 1], "eta": 0.1}"#, "geometry.lattice"),
        (r#"{"eta": -0.1}"#, "eta"),
        (
            r#"{"geometry": {"mode": "explicit", "positions": [[0,0,0],[1,0,0]]}, "dipole": [0,0,1],
                "beam": {"direction": [0,0,1], "mask": [5]}, "eta": 0.1, "partition": {"A": [0], "B": [1]}}"#,
            "beam.mask[0]",
        ),
        (
            r#"{"geometry": {"mode": "explicit", "positions": [[0,0,0],[1,0,0]]}, "dipole": [0,0,1],
                "beam": {"direction": [0,0,1]}, "eta": 0.1, "partition": {"A": [0], "B": [0]}}"#,
            "partition.B[0]",
        ),
    ];
    for (text, path) in bad {
        let cfg = config(text);
        match run_solve(&cfg, &RunOptions::default()) {
            Err(CliError::Config { path: p, .. }) => assert_eq!(p, path),
            other => panic!("{text}: expected config error at {path}, got {other:?}"),
        }
    }
}

#[test]
fn dark_groups_become_correlated() {
    let text = r#"{
        "geometry": {"mode": "explicit", "positions": [[0, 0, 0], [1.5, 0.4, 0], [-0.3, 1.7, 0.5]]},
        "dipole": [0, 0, 1],
        "beam": {"direction": [1, 0, 0], "mask": [1, 2]},
        "delta": 0.5,
        "eta": 0.05,
        "partition": {"A": [1], "B": [2]}
    }"#;
    let bundle = run_solve(&config(text), &RunOptions::default()).unwrap();
    let u = bundle.report["u"].as_array().unwrap();
    assert!(f(&u[0][0]).abs() + f(&u[0][1]).abs() > 0.1);

    let ens = Ensemble::new(
        vec![Vec3::zeros(), Vec3::new(1.5, 0.4, 0.0), Vec3::new(-0.3, 1.7, 0.5)],
        Vec3::new(0.0, 0.0, 1.0),
    )
    .unwrap();
    let drive = Drive::new(
        0.5,
        0.05,
        dipolar::model::Beam::Masked {
            direction: Vec3::new(1.0, 0.0, 0.0),
            illuminated: [0].into_iter().collect(),
        },
    )
    .unwrap();
    let ex = drive.excitation(&ens).unwrap();
    let st = solve_state(&coupling_matrix(&ens).unwrap(), &ex, &PairSolverOptions::default()).unwrap();
    let v12 = st.v.get(1, 2);
    assert!(v12.norm() > 1e-3);
    let row = bundle.report["v"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["mu"] == 1 && r["nu"] == 2)
        .unwrap();
    assert_eq!((f(&row["re"]), f(&row["im"])), (v12.re, v12.im));
    assert!(f(&bundle.report["negativity"]["negativity2"]) > 0.0);
}

fn farfield_config(points: usize, max: f64) -> String {
    format!(
        r#"{{
        "geometry": {{"mode": "explicit", "positions": [[0, 0, 0], [0, 12, 3], [4000, 0, 0], [4000, 5, 11]]}},
        "dipole": [0, 0, 1],
        "beam": {{"direction": [0, 0, 1]}},
        "delta": 0.0,
        "eta_sweep": {{"min": 0.0005, "max": {max}, "points": {points}}},
        "partition": {{"A": [0, 1], "B": [2, 3]}},
        "farfield": true
    }}"#
    )
}

#[test]
fn sweep_is_independent_of_parallelism() {
    let cfg = config(&farfield_config(60, 0.1));
    let serial = run_sweep(&cfg, &RunOptions { parallel: 1, dump_z: false }).unwrap();
    let parallel = run_sweep(&cfg, &RunOptions { parallel: 8, dump_z: false }).unwrap();
    assert_eq!(serial.table("sweep.csv"), parallel.table("sweep.csv"));
    assert_eq!(serial.report, parallel.report);
    let again = run_sweep(&cfg, &RunOptions { parallel: 1, dump_z: false }).unwrap();
    assert_eq!(serial, again);
    let header = serial.table("sweep.csv").unwrap().lines().next().unwrap();
    assert_eq!(header, "eta,N_model,N_pt,N_exact,min_eigenvalue_model,error");
}

#[test]
fn farfield_sweep_threshold_tracks_bound() {
    let cfg = config(&farfield_config(400, 0.03));
    let bundle = run_sweep(&cfg, &RunOptions::default()).unwrap();
    let omega = f(&bundle.report["threshold"]["omega"]);
    let bound = f(&bundle.report["farfield"]["bound_omega"]);
    // Two-atom groups have large phase sums; the largest quartic root then
    // moves the threshold by (Λ+/y)^{1/4}.
    let s = |k: &str| {
        let v = &bundle.report["farfield"][k];
        Complex64::new(f(&v[0]), f(&v[1]))
    };
    let ff = FarFieldConfig::from_parameters(2, 2, std::f64::consts::FRAC_PI_2, f(&bundle.report["farfield"]["k0D"]), 0.0)
        .unwrap()
        .with_phase_sums(s("s_A"), s("s_B"));
    let shift = (quartic_spectrum(&ff)[0] / ff.y.sqrt()).sqrt();
    assert!((omega / (bound * shift) - 1.0).abs() <= 0.01, "{omega} vs {bound} (shift {shift})");
    let analytic = f(&bundle.report["threshold"]["model_omega"]);
    assert!((omega - analytic).abs() <= 1e-3 * analytic);
}

#[test]
fn below_threshold_grid_is_entangled_everywhere() {
    let cfg = config(&farfield_config(40, 0.002));
    let bundle = run_sweep(&cfg, &RunOptions::default()).unwrap();
    let csv = bundle.table("sweep.csv").unwrap();
    for line in csv.lines().skip(1) {
        let n_model: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(n_model > 0.0, "{line}");
    }
    assert!(bundle.report["threshold"]["eta"].is_null());
}

#[test]
fn bounds_reproduce_length_example() {
    let cfg = config(
        r#"{"bounds": {"n_A": 1, "n_B": 1, "theta": 1.5707963267948966, "distance": 1e6, "k0_inverse": 0.1,
            "spacing": 1.0, "omega": 0.1}}"#,
    );
    let b = run_bounds(&cfg).unwrap();
    let l = f(&b.report["L_min"]);
    assert!((48.0..=54.0).contains(&l), "{l}");
    let ff = FarFieldConfig::from_parameters(1, 1, std::f64::consts::FRAC_PI_2, 1e7, 0.0).unwrap();
    assert_eq!(f(&b.report["bound_omega"]), bound_omega(&ff));
    assert_eq!(f(&b.report["eta_max"]), bound_omega(&ff) / 8f64.sqrt());
    for key in ["D0", "N_max", "n_min"] {
        assert!(b.report[key].is_number(), "{key}");
    }
}

#[test]
fn oracle_compare_error_shrinks_with_drive() {
    let mut cfg = config(PAIR);
    cfg.eta = None;
    cfg.eta_sweep = Some(dipolar_cli::config::EtaSweep {
        min: 0.01,
        max: 0.04,
        points: 3,
        log: true,
    });
    let b = run_oracle_compare(&cfg, &RunOptions { parallel: 3, dump_z: false }).unwrap();
    let csv = b.table("oracle.csv").unwrap();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(csv.lines().next().unwrap(), "eta,N_exact,N_perturbative,abs_error");
    assert_eq!(rows.len(), 3);
    for w in rows.windows(2) {
        let ratio = w[1][3] / w[0][3];
        assert!((8.0..=32.0).contains(&ratio), "{ratio}");
    }
}

#[test]
fn validate_passes_and_fault_is_caught() {
    let cfg = RunConfig::default();
    let ok = run_validate(&cfg, None).unwrap();
    assert_eq!(ok.report["passed"], true);
    let bad = run_validate(&cfg, Some(Fault::ZAsymmetry)).unwrap();
    assert_eq!(bad.report["passed"], false);
    let failing: Vec<&str> = bad.report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["passed"] == false)
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert!(failing.contains(&"z_symmetry"), "{failing:?}");
}

#[test]
fn provenance_identifies_the_config() {
    let a = run_solve(&config(PAIR), &RunOptions::default()).unwrap();
    let p = &a.report["provenance"];
    assert_eq!(p["config_sha256"], config(PAIR).sha256());
    assert_eq!(p["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(p["command"], "solve");
    let mut other = config(PAIR);
    other.delta = 0.1;
    assert_ne!(other.sha256(), config(PAIR).sha256());
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dipolar"))
}

#[test]
fn binary_exit_codes_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("pair.json");
    std::fs::write(&cfg_path, PAIR).unwrap();
    let out = dir.path().join("solve");
    let status = binary()
        .args(["solve", "--dump-z", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    for name in ["report.json", "u.csv", "v.csv", "z.csv", "negativity.csv"] {
        assert!(out.join(name).exists(), "{name}");
    }
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["provenance"]["seed"], 1);

    let bad_path = dir.path().join("bad.json");
    std::fs::write(&bad_path, PAIR.replace(r#""A": [0]"#, r#""A": []"#)).unwrap();
    let o = binary().arg("solve").arg("--config").arg(&bad_path).arg("--out").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("partition.A"));

    let unknown = dir.path().join("unknown.json");
    std::fs::write(&unknown, r#"{"dipole": [0, 0, 1], "colour": "red"}"#).unwrap();
    let o = binary().arg("solve").arg("--config").arg(&unknown).arg("--out").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(2));

    let far = dir.path().join("far.json");
    std::fs::write(
        &far,
        PAIR.replace("[1, 0, 0]", "[0.01, 0, 0]").replace(r#""delta": 0.0"#, r#""delta": 1e308"#),
    )
    .unwrap();
    let o = binary().arg("solve").arg("--config").arg(&far).arg("--out").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));

    let v = dir.path().join("validate");
    let status = binary().arg("validate").arg("--out").arg(&v).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let status = binary()
        .args(["validate", "--inject", "z-asymmetry", "--out"])
        .arg(&v)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(4));
}

#[test]
fn seed_flag_overrides_random_geometry() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("random.json");
    std::fs::write(
        &cfg_path,
        r#"{
        "geometry": {"mode": "random", "random": {"count": 4, "size": [5, 5, 5], "seed": 3}},
        "dipole": [0, 0, 1],
        "beam": {"direction": [0, 0.6, 0.8]},
        "eta": 0.02,
        "partition": {"A": [0, 1], "B": [2, 3]}
    }"#,
    )
    .unwrap();
    let run = |seed: &str, out: &str| -> Value {
        let out = dir.path().join(out);
        let status = binary()
            .arg("solve")
            .arg("--config")
            .arg(&cfg_path)
            .args(["--seed", seed, "--out"])
            .arg(&out)
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
    };
    let a = run("7", "a");
    let b = run("7", "b");
    let c = run("8", "c");
    assert_eq!(a, b);
    assert_eq!(a["provenance"]["seed"], 7);
    assert_ne!(a["u"], c["u"]);
    assert_ne!(a["provenance"]["config_sha256"], c["provenance"]["config_sha256"]);
}
