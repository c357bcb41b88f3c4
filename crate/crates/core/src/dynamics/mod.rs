//! Stochastic integrators, trajectories and their on-disk format.

mod integrator;
mod io;
mod trajectory;

pub use integrator::{
    step_euler_maruyama, step_splitting, BoundaryPolicy, IntegratorConfig, Scheme, MAX_HALVINGS,
};
pub use io::{read_csv, read_ensemble_csv, write_csv, write_ensemble_csv, CSV_HEADER_TAG, ENSEMBLE_HEADER_TAG};
pub use trajectory::{
    ensemble_run, ensemble_snapshots, run_chain, simulate, simulate_chain, step_normals, PathAudit,
    RunSummary, Trajectory,
};
