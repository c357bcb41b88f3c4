use std::io::BufReader;
use std::path::PathBuf;

use nhb::config::RunConfig;
use nhb::control::{build_control_path, min_xi, support_member, verify_control, SupportQuery};
use nhb::diagnostics::{diagnose, DiagnoseOptions, GibbsModel};
use nhb::dynamics::{read_csv, simulate_chain, write_csv};
use nhb::model::State;
use proptest::prelude::*;

fn load(name: &str) -> RunConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    RunConfig::load(&path).unwrap()
}

#[test]
fn shipped_configs_validate() {
    for name in ["harmonic.toml", "double_well.toml", "tv_left.toml", "tv_right.toml"] {
        let cfg = load(name);
        cfg.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn simulate_round_trip_diagnose() {
    let cfg = load("harmonic.toml");
    let pot = cfg.validate().unwrap();
    let mut ic = cfg.integrator_config().unwrap();
    ic.n_steps = 50_000;
    let x0 = cfg.initial_state(&pot);
    let trajs: Vec<_> = (0..2)
        .map(|c| simulate_chain(&x0, &ic, pot.as_ref(), &cfg.system, 10, c).unwrap())
        .collect();

    let mut buf = Vec::new();
    write_csv(&trajs[0], &mut buf).unwrap();
    let back = read_csv(BufReader::new(&buf[..])).unwrap();
    assert_eq!(back.states, trajs[0].states);
    assert_eq!(back.times, trajs[0].times);

    let model = GibbsModel::new(pot.clone(), &cfg.system).unwrap();
    let rep = diagnose(&trajs, &model, &DiagnoseOptions::default()).unwrap();
    assert_eq!(rep.trajectories, 2);
    assert!((rep.temperature - 1.0).abs() < 0.05, "{}", rep.temperature);
    assert!(rep.ks.q.unwrap() < 0.05);
    assert_eq!(rep.audit.bound_violations, 0);
}

#[test]
fn configured_control_targets_are_reached() {
    let cfg = load("harmonic.toml");
    let pot = cfg.validate().unwrap();
    let c = cfg.control.as_ref().unwrap();
    let o = c.origin.as_ref().unwrap();
    let origin = State::new(o.q.clone(), o.p.clone(), o.xi);
    for t in &c.targets {
        let floor = min_xi(&origin, c.horizon, &t.q, &cfg.system, pot.as_ref()).unwrap();
        let xi = t.xi.unwrap_or_else(|| floor + t.xi_above_min.unwrap());
        let target = State::new(t.q.clone(), t.p.clone(), xi);
        let query = SupportQuery {
            origin: origin.clone(),
            horizon: c.horizon,
            target: target.clone(),
        };
        assert!(support_member(&query, pot.as_ref(), &cfg.system).unwrap());
        let path = build_control_path(&origin, c.horizon, &target, c.delta, t.dwell, pot.as_ref(), &cfg.system).unwrap();
        let rep = verify_control(&path, &origin, pot.as_ref(), &cfg.system).unwrap();
        assert!(rep.passes(1e-6), "{:?}", rep.max_error);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // Any target strictly above the floor is reached by the constructed control.
    #[test]
    fn interior_targets_verify(q2 in -1.5f64..1.5, p2 in -1.0f64..1.0, above in 0.05f64..3.0, t in 0.5f64..2.0) {
        let cfg = load("harmonic.toml");
        let pot = cfg.validate().unwrap();
        let origin = State::new(vec![0.2], vec![-0.3], 0.1);
        let floor = min_xi(&origin, t, &[q2], &cfg.system, pot.as_ref()).unwrap();
        let target = State::new(vec![q2], vec![p2], floor + above);
        let path = build_control_path(&origin, t, &target, 1e-6, None, pot.as_ref(), &cfg.system).unwrap();
        let rep = verify_control(&path, &origin, pot.as_ref(), &cfg.system).unwrap();
        prop_assert!(rep.passes(1e-6), "max error {}", rep.max_error);
    }
}
