//! Weakly driven two-level atoms coupled through the vacuum field: steady
//! states to second order in the drive and entanglement between groups.

pub mod coupling;
pub mod dilute;
pub mod entanglement;
pub mod error;
pub mod hilbert;
pub mod io;
pub mod krylov;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod perturb;

pub use coupling::{coupling_matrix, pair_coupling, CouplingMatrix};
pub use error::{Error, Result};
pub use model::{Drive, Ensemble, Excitation, GeometrySpec, Partition, Vec3};
pub use perturb::{solve_state, PerturbState};
