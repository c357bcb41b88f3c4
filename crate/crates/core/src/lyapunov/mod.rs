//! The Lyapunov function W = exp(beta0 H + psi0 + psi1 + psi2), the generator,
//! and numerical certification of the drift bound.

mod certify;
mod cutoff;
mod generator;
mod params;
mod psi;

pub use certify::{
    certify_auto, drift_certify, AutoCertReport, AutoConfig, CertConfig, CertReport, RegionTally, RoundLog, Violation,
};
pub use cutoff::{smooth_step, Cutoff, CutoffSet, Jet1};
pub use generator::{
    drift_breakdown, drift_ratio, fd_jet, generator_apply, generator_from_jet, generator_of_h_closed_form, generator_split,
    split_from_jet, DriftBreakdown, OperatorSplit,
};
pub use params::{select_params, xi_star_floor, LyapunovParams, ScaleSeeds};
pub use psi::{
    hamiltonian_jet, lyapunov_v, lyapunov_v_jet, psi0, psi0_jet, psi1, psi1_jet, psi2, psi2_jet, psi_total,
    v_and_w, FieldJet, VW,
};
