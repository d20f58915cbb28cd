//! Configuration-driven runs of the `dipolar` library: solves, drive sweeps,
//! far-field bounds, oracle comparisons and the invariant suite.

pub mod config;
pub mod error;
pub mod run;
pub mod validate;

pub use config::RunConfig;
pub use error::CliError;
pub use run::{run_bounds, run_oracle_compare, run_solve, run_sweep, ResultBundle, RunOptions};
pub use validate::{run_validate, Fault};
