//! Support sets of the transitions and explicit controls that reach them.

mod distance;
mod path;

pub use distance::{
    min_xi, o_distance, o_distance_with, support_member, DistanceKind, ODistance, RoadmapConfig,
    SupportQuery,
};
pub use path::{
    build_control_path, integrate_control, verify_control, verify_control_with, ControlPath,
    ControlSample, EndpointReport, EtaPerturbation, PathKind, FEASIBILITY_TOL, SAMPLE_POINTS,
};
