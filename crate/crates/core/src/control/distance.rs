//! O-distance, the least reachable thermostat value and support membership.

use petgraph::algo::dijkstra;
use petgraph::graph::{NodeIndex, UnGraph};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, NhbError, Result};
use crate::model::{position_distance, Potential, State, SystemParams};
use crate::rng;

/// How an O-distance value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    /// Convex domain: the straight-line distance is the geodesic distance.
    Exact,
    /// Non-convex domain, but the straight segment stays inside. Still exact.
    Segment,
    /// Shortest path on a random roadmap. An upper bound only.
    RoadmapUpperBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ODistance {
    pub length: f64,
    pub kind: DistanceKind,
}

/// Budget for the roadmap fallback.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoadmapConfig {
    pub nodes: usize,
    pub neighbours: usize,
    /// Interior samples checked per segment on top of the exact segment test.
    pub segment_samples: usize,
    pub seed: u64,
}

impl Default for RoadmapConfig {
    fn default() -> Self {
        Self {
            nodes: 400,
            neighbours: 12,
            segment_samples: 64,
            seed: 17,
        }
    }
}

fn check_position(q: &[f64], pot: &dyn Potential, params: &SystemParams, what: &str) -> Result<()> {
    if q.len() != params.n_coords() {
        return Err(contract(format!(
            "{what} has {} coordinates, expected {}",
            q.len(),
            params.n_coords()
        )));
    }
    if !pot.in_domain(q) {
        return Err(NhbError::Domain(format!("{what} = {q:?}")));
    }
    Ok(())
}

/// Straight segment test: the potential's own segment check plus dense sampling.
pub(crate) fn segment_clear(a: &[f64], b: &[f64], pot: &dyn Potential, samples: usize) -> bool {
    if !pot.segment_in_domain(a, b) {
        return false;
    }
    let mut x = vec![0.0; a.len()];
    (1..samples).all(|i| {
        let s = i as f64 / samples as f64;
        for (j, xj) in x.iter_mut().enumerate() {
            *xj = a[j] + s * (b[j] - a[j]);
        }
        pot.in_domain(&x)
    })
}

/// Length of the shortest in-domain path between two configurations, measured
/// in the mass-weighted norm.
pub fn o_distance(q: &[f64], q2: &[f64], pot: &dyn Potential, params: &SystemParams) -> Result<ODistance> {
    o_distance_with(q, q2, pot, params, &RoadmapConfig::default())
}

pub fn o_distance_with(
    q: &[f64],
    q2: &[f64],
    pot: &dyn Potential,
    params: &SystemParams,
    cfg: &RoadmapConfig,
) -> Result<ODistance> {
    check_position(q, pot, params, "q")?;
    check_position(q2, pot, params, "q'")?;
    let straight = position_distance(q, q2, params);
    if pot.is_convex_domain() {
        return Ok(ODistance {
            length: straight,
            kind: DistanceKind::Exact,
        });
    }
    if segment_clear(q, q2, pot, cfg.segment_samples) {
        return Ok(ODistance {
            length: straight,
            kind: DistanceKind::Segment,
        });
    }
    roadmap(q, q2, pot, params, cfg)
}

fn roadmap(
    q: &[f64],
    q2: &[f64],
    pot: &dyn Potential,
    params: &SystemParams,
    cfg: &RoadmapConfig,
) -> Result<ODistance> {
    let n = q.len();
    // sample a box around both endpoints, generous enough to route around a barrier
    let spread = q
        .iter()
        .zip(q2)
        .map(|(a, b)| (a - b).abs())
        .fold(1.0, f64::max);
    let centre: Vec<f64> = q.iter().zip(q2).map(|(a, b)| 0.5 * (a + b)).collect();
    let half = 1.5 * spread;

    let mut points: Vec<Vec<f64>> = vec![q.to_vec(), q2.to_vec()];
    let mut rng = rng::stream(cfg.seed, 0);
    let mut attempts = 0;
    while points.len() < cfg.nodes + 2 && attempts < 20 * cfg.nodes {
        attempts += 1;
        let x: Vec<f64> = (0..n).map(|j| centre[j] + half * (2.0 * rng.gen::<f64>() - 1.0)).collect();
        if pot.in_domain(&x) {
            points.push(x);
        }
    }

    let mut graph = UnGraph::<(), f64>::with_capacity(points.len(), points.len() * cfg.neighbours);
    let idx: Vec<NodeIndex> = points.iter().map(|_| graph.add_node(())).collect();
    for i in 0..points.len() {
        let mut near: Vec<(f64, usize)> = (0..points.len())
            .filter(|&j| j != i)
            .map(|j| (position_distance(&points[i], &points[j], params), j))
            .collect();
        near.sort_by(|a, b| a.0.total_cmp(&b.0));
        for &(d, j) in near.iter().take(cfg.neighbours) {
            if graph.find_edge(idx[i], idx[j]).is_none()
                && segment_clear(&points[i], &points[j], pot, cfg.segment_samples)
            {
                graph.add_edge(idx[i], idx[j], d);
            }
        }
    }
    let dist = dijkstra(&graph, idx[0], Some(idx[1]), |e| *e.weight());
    match dist.get(&idx[1]) {
        Some(&length) => Ok(ODistance {
            length,
            kind: DistanceKind::RoadmapUpperBound,
        }),
        None => Err(NhbError::Unreachable(format!(
            "no in-domain path from {q:?} to {q2:?} on a {}-node roadmap",
            points.len()
        ))),
    }
}

/// Smallest thermostat value reachable at position q' after time t:
/// xi + L^2 / (t a) - t kB T k N / a.
pub fn min_xi(x: &State, t: f64, q2: &[f64], params: &SystemParams, pot: &dyn Potential) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(contract(format!("horizon must be positive, got {t}")));
    }
    x.check_dims(params)?;
    let l = o_distance(&x.q, q2, pot, params)?.length;
    Ok(min_xi_from_length(x.xi, t, l, params))
}

pub(crate) fn min_xi_from_length(xi: f64, t: f64, l: f64, params: &SystemParams) -> f64 {
    xi + l * l / (t * params.a) - t * params.kbt() * params.dof() / params.a
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportQuery {
    pub origin: State,
    pub horizon: f64,
    pub target: State,
}

/// Whether `target` lies in the support of the transition from `origin` over `horizon`.
pub fn support_member(query: &SupportQuery, pot: &dyn Potential, params: &SystemParams) -> Result<bool> {
    query.target.check_dims(params)?;
    if !pot.in_domain(&query.origin.q) || !pot.in_domain(&query.target.q) {
        return Err(NhbError::Domain("support query endpoints must lie in the domain".into()));
    }
    let floor = min_xi(&query.origin, query.horizon, &query.target.q, params, pot)?;
    Ok(query.target.xi >= floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_potential, PotentialSpec};

    fn harmonic(params: &SystemParams) -> crate::model::PotentialHandle {
        make_potential(&PotentialSpec::Harmonic { c: 0.5, zeta: None }, params).unwrap()
    }

    fn lj_pair() -> (SystemParams, crate::model::PotentialHandle) {
        let params = SystemParams::new(2, 1, vec![1.0, 1.0], 1.0, 1.0, 1.0, 1.0).unwrap();
        let pot = make_potential(
            &PotentialSpec::LennardJones {
                epsilon: 1.0,
                r_min: 1.0,
                confinement: 0.1,
                zeta: None,
            },
            &params,
        )
        .unwrap();
        (params, pot)
    }

    #[test]
    fn euclidean_and_mass_weighted() {
        let p1 = SystemParams::unit_1d();
        let d = o_distance(&[0.0], &[3.0], harmonic(&p1).as_ref(), &p1).unwrap();
        assert_eq!(d.length, 3.0);
        assert_eq!(d.kind, DistanceKind::Exact);
        let p4 = SystemParams::new(1, 1, vec![4.0], 1.0, 1.0, 1.0, 1.0).unwrap();
        let d = o_distance(&[0.0], &[3.0], harmonic(&p4).as_ref(), &p4).unwrap();
        assert_eq!(d.length, 6.0);
    }

    #[test]
    fn lj_pair_on_a_line_cannot_swap() {
        let (params, pot) = lj_pair();
        let err = o_distance(&[-1.0, 1.0], &[1.0, -1.0], pot.as_ref(), &params).unwrap_err();
        assert!(matches!(err, NhbError::Unreachable(_)), "{err}");
        // same ordering is reachable in a straight line
        let d = o_distance(&[-1.0, 1.0], &[-2.0, 0.5], pot.as_ref(), &params).unwrap();
        assert_eq!(d.kind, DistanceKind::Segment);
        assert!((d.length - (1.0f64 + 0.25).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn lj_in_plane_routes_around_coincidence() {
        let params = SystemParams::new(2, 2, vec![1.0, 1.0], 1.0, 1.0, 1.0, 1.0).unwrap();
        let pot = make_potential(
            &PotentialSpec::LennardJones {
                epsilon: 1.0,
                r_min: 1.0,
                confinement: 0.1,
                zeta: None,
            },
            &params,
        )
        .unwrap();
        let q = [-1.0, 0.0, 1.0, 0.0];
        let q2 = [1.0, 0.0, -1.0, 0.0];
        let d = o_distance(&q, &q2, pot.as_ref(), &params).unwrap();
        assert_eq!(d.kind, DistanceKind::RoadmapUpperBound);
        assert!(d.length >= position_distance(&q, &q2, &params));
        assert!(d.length.is_finite());
    }

    #[test]
    fn min_xi_examples() {
        let params = SystemParams::unit_1d();
        let pot = harmonic(&params);
        let x = State::zeros(1);
        let v = min_xi(&x, 1.0, &[0.3], &params, pot.as_ref()).unwrap();
        assert!((v - (-0.91)).abs() < 1e-15);
        let drain = min_xi(&x, 2.5, &[0.0], &params, pot.as_ref()).unwrap();
        assert_eq!(drain, -2.5);
        let longer = min_xi(&x, 3.0, &[0.0], &params, pot.as_ref()).unwrap();
        assert!(longer < drain);
        assert!(min_xi(&x, 0.0, &[0.0], &params, pot.as_ref()).is_err());
    }

    #[test]
    fn membership_is_closed() {
        let params = SystemParams::unit_1d();
        let pot = harmonic(&params);
        let origin = State::zeros(1);
        let floor = min_xi(&origin, 1.0, &[0.3], &params, pot.as_ref()).unwrap();
        let query = |xi| SupportQuery {
            origin: origin.clone(),
            horizon: 1.0,
            target: State::new(vec![0.3], vec![5.0], xi),
        };
        assert!(support_member(&query(floor), pot.as_ref(), &params).unwrap());
        assert!(!support_member(&query(floor - 1e-3), pot.as_ref(), &params).unwrap());
    }

    proptest::proptest! {
        #[test]
        fn min_xi_shifts_with_xi(xi in -5.0f64..5.0, c in -3.0f64..3.0, q2 in -4.0f64..4.0, t in 0.1f64..5.0) {
            let params = SystemParams::unit_1d();
            let pot = harmonic(&params);
            let a = min_xi(&State::new(vec![0.2], vec![0.0], xi), t, &[q2], &params, pot.as_ref()).unwrap();
            let b = min_xi(&State::new(vec![0.2], vec![0.0], xi + c), t, &[q2], &params, pot.as_ref()).unwrap();
            proptest::prop_assert!((b - a - c).abs() <= 1e-12 * (1.0 + a.abs() + b.abs()));
        }
    }
}
