//! Binary support vector classification.

pub mod file;
mod kernel;
mod model;
mod oracle;
mod smo;

pub use kernel::KernelSpec;
pub use model::{Label, SupportVector, SvmModel, TrainingSet};
pub use oracle::{brute_force_qp, MAX_ORACLE_SIZE};
pub use smo::{dual_objective, solve_dual, train_smo, SmoParams, SmoSolution};
