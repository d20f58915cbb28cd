use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dipolar_cli::{
    run_bounds, run_oracle_compare, run_solve, run_sweep, run_validate, CliError, Fault, ResultBundle, RunConfig,
    RunOptions,
};

#[derive(Parser)]
#[command(name = "dipolar", version, about = "Entanglement of weakly driven atoms coupled through the vacuum")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (default: `out`, or `out` from the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for sweeps and oracle comparisons.
    #[arg(long, global = true)]
    parallel: Option<usize>,

    /// Overrides every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Second-order state and negativity report at one drive strength.
    Solve {
        /// Also write the coupling matrix to z.csv.
        #[arg(long)]
        dump_z: bool,
    },
    /// Negativity over the `eta_sweep` grid.
    Sweep,
    /// Far-field threshold, maximum negativity and minimal group size.
    Bounds,
    /// Exact against perturbative negativity (at most 5 atoms).
    OracleCompare,
    /// Run the invariant suite.
    Validate {
        /// Corrupt an input on purpose (`z-asymmetry`).
        #[arg(long)]
        inject: Option<Fault>,
    },
}

fn run(cli: Cli) -> Result<(ResultBundle, PathBuf), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None if matches!(cli.command, Command::Validate { .. }) => RunConfig::default(),
        None => {
            return Err(CliError::Config {
                path: "--config".into(),
                message: "required".into(),
            })
        }
    };
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    let opts = RunOptions {
        parallel: cfg.parallelism(cli.parallel)?,
        dump_z: matches!(cli.command, Command::Solve { dump_z: true }),
    };
    let out = cli
        .out
        .or_else(|| cfg.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let bundle = match cli.command {
        Command::Solve { .. } => run_solve(&cfg, &opts)?,
        Command::Sweep => run_sweep(&cfg, &opts)?,
        Command::Bounds => run_bounds(&cfg)?,
        Command::OracleCompare => run_oracle_compare(&cfg, &opts)?,
        Command::Validate { inject } => run_validate(&cfg, inject)?,
    };
    bundle.write_to(&out)?;
    Ok((bundle, out))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok((bundle, out)) => {
            if let Some(checks) = bundle.report["checks"].as_array() {
                for c in checks {
                    println!(
                        "{:<28} {:>8}  {:e} ({})",
                        c["name"].as_str().unwrap_or("?"),
                        if c["passed"] == true { "pass" } else { "FAIL" },
                        c["value"].as_f64().unwrap_or(f64::NAN),
                        c["limit"].as_str().unwrap_or("")
                    );
                }
            }
            println!("results written to {}", out.display());
            if bundle.report["passed"] == false {
                let err = CliError::Validation("one or more checks failed".into());
                eprintln!("error: {err}");
                return ExitCode::from(err.exit_code() as u8);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
