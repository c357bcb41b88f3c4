//! Checks of sampling correctness against the augmented Gibbs measure.

mod contraction;
mod gibbs;
mod report;
mod stationarity;
mod stats;
mod tv;

pub use contraction::{log_mean_and_se, log_sum_exp, lyapunov_contraction, ContractionReport, ContractionRow};
pub use gibbs::{gibbs_log_density, gibbs_log_ratio, normal_cdf, GibbsModel, Moments};
pub use report::{diagnose, AuditSummary, DiagnoseOptions, DiagnosticsReport, ErgodicRow, KsTable};
pub use stationarity::{stationarity_residual, stationarity_residual_with, TestFunction};
pub use stats::{
    burn_in, ergodic_average, ks_distance, ks_two_sample, mean_var, temperature_by_particle,
    temperature_estimate, temperature_of_states, ErgodicEstimate,
};
pub use tv::{tv_decay, Binning, TvDecay, MIN_ENSEMBLE};
