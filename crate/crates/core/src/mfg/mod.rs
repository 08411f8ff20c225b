//! Mean field games: problem definitions, the closed-form test solution,
//! PDE residuals and the adversarial solver.

mod oracle;
mod problem;
mod residual;
mod train;

pub use oracle::{one_dim_partition, ClosedFormSolution, OracleValues};
pub use problem::{DensityFn, ErgodicMfgProblem, SpatialCost, TdMfgProblem};
pub use residual::{
    ergodic_residuals, ergodic_residuals_from_jets, exp_density, fp_residual, hamiltonian, hjb_residual, Field, SpatialJet,
};
pub use train::{
    build_networks, evaluation_points, log_normalizer, oracle_errors, relative_l2_error, td_losses, torus_grid, train_mfgan,
    LossTerms, MfgProblem, MfgRun, OptimizerKind, SolverConfig, TraceRow,
};
