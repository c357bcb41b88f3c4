//! Piecewise-linear control paths with mollified corners, and forward verification.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::distance::{min_xi_from_length, segment_clear};
use crate::error::{contract, NhbError, Result};
use crate::model::{position_distance, Potential, State, SystemParams};
use crate::quadrature::{apply_rule, GL20};

/// Absolute slack (scaled by 1 + |floor|) below the least reachable xi' that is
/// still treated as the boundary rather than rejected.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Grid size of the stored samples.
pub const SAMPLE_POINTS: usize = 1001;

// Smoothstep S(x) = 3x^2 - 2x^3 and its integrals. S(x) + S(1 - x) = 1, so a
// blend centred on a corner displaces exactly as far as the sharp corner does.
fn smooth(x: f64) -> f64 {
    x * x * (3.0 - 2.0 * x)
}
fn smooth_d(x: f64) -> f64 {
    6.0 * x * (1.0 - x)
}
fn smooth_int(x: f64) -> f64 {
    x * x * x * (1.0 - 0.5 * x)
}
fn smooth_sq_int(x: f64) -> f64 {
    let x5 = x.powi(5);
    x5 * (1.8 - 2.0 * x + 4.0 / 7.0 * x * x)
}

#[derive(Debug, Clone)]
enum Shape {
    Linear { v: Vec<f64> },
    Blend { v1: Vec<f64>, v2: Vec<f64> },
}

#[derive(Debug, Clone)]
struct Piece {
    t0: f64,
    t1: f64,
    x0: Vec<f64>,
    /// Running integral of |P|_m^2 at t0.
    k0: f64,
    shape: Shape,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    /// Straight transit, reaching the least xi' up to an O(delta) excess.
    Boundary,
    /// Transit of duration s followed by a rest at q' - delta v'.
    Dwell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSample {
    pub t: f64,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub xi: f64,
    pub eta: Vec<f64>,
}

/// A position path through phase space together with the control that drives
/// the deterministic system along it.
#[derive(Debug, Clone, Serialize)]
pub struct ControlPath {
    pub kind: PathKind,
    pub horizon: f64,
    pub delta: f64,
    pub dwell_split: Option<f64>,
    /// Corner times of the unmollified path.
    pub knots: Vec<f64>,
    pub origin: State,
    /// Endpoint the path is built for. For a forced dwell split its xi is the realised value.
    pub target: State,
    pub requested_xi: f64,
    /// Least reachable xi' at the target position.
    pub min_xi: f64,
    /// xi(t) along the path itself.
    pub path_xi: f64,
    /// Integral of |P|_m^2 over [0, t].
    pub kinetic_integral: f64,
    pub distance: f64,
    pub samples: Vec<ControlSample>,
    #[serde(skip)]
    pieces: Vec<Piece>,
    #[serde(skip)]
    params: SystemParams,
}

fn norm_m(v: &[f64], w: &[f64], params: &SystemParams) -> f64 {
    v.iter()
        .zip(w)
        .enumerate()
        .map(|(j, (a, b))| params.coord_mass(j) * a * b)
        .sum()
}

/// Segments (start time, velocity) ending at `t`, turned into linear and blend pieces.
fn assemble(q: &[f64], segs: &[(f64, Vec<f64>)], t: f64, delta: f64, params: &SystemParams) -> Vec<Piece> {
    let n = segs.len();
    let ends: Vec<f64> = (0..n).map(|k| if k + 1 < n { segs[k + 1].0 } else { t }).collect();
    let len = |k: usize| ends[k] - segs[k].0;
    // corner k sits between segment k-1 and k
    let width: Vec<f64> = (0..=n)
        .map(|k| {
            if k == 0 || k == n {
                0.0
            } else {
                (0.1 * delta).min(0.5 * len(k - 1)).min(0.5 * len(k))
            }
        })
        .collect();
    let mut pieces = Vec::with_capacity(2 * n);
    let mut x = q.to_vec();
    let mut k_acc = 0.0;
    for k in 0..n {
        let v = &segs[k].1;
        let a = segs[k].0 + 0.5 * width[k];
        let b = ends[k] - 0.5 * width[k + 1];
        pieces.push(Piece {
            t0: a,
            t1: b,
            x0: x.clone(),
            k0: k_acc,
            shape: Shape::Linear { v: v.clone() },
        });
        for (xj, vj) in x.iter_mut().zip(v) {
            *xj += (b - a) * vj;
        }
        k_acc += (b - a) * norm_m(v, v, params);
        if k + 1 < n {
            let w = width[k + 1];
            let v2 = &segs[k + 1].1;
            pieces.push(Piece {
                t0: b,
                t1: b + w,
                x0: x.clone(),
                k0: k_acc,
                shape: Shape::Blend {
                    v1: v.clone(),
                    v2: v2.clone(),
                },
            });
            for j in 0..x.len() {
                x[j] += 0.5 * w * (v[j] + v2[j]);
            }
            let d: Vec<f64> = v2.iter().zip(v).map(|(a, b)| a - b).collect();
            k_acc += w * (norm_m(v, v, params) + norm_m(v, &d, params) + 13.0 / 35.0 * norm_m(&d, &d, params));
        }
    }
    pieces
}

/// Velocity segments of the dwell path; `s == t` gives the plain transit.
fn segments(q: &[f64], v: &[f64], q2: &[f64], v2: &[f64], t: f64, delta: f64, s: f64) -> Vec<(f64, Vec<f64>)> {
    let a: Vec<f64> = q.iter().zip(v).map(|(x, u)| x + delta * u).collect();
    let b: Vec<f64> = q2.iter().zip(v2).map(|(x, u)| x - delta * u).collect();
    let mid: Vec<f64> = b.iter().zip(&a).map(|(y, x)| (y - x) / (s - 2.0 * delta)).collect();
    let mut segs = vec![(0.0, v.to_vec()), (delta, mid)];
    if s < t {
        segs.push((s - delta, vec![0.0; q.len()]));
    }
    segs.push((t - delta, v2.to_vec()));
    segs
}

fn velocities(p: &[f64], params: &SystemParams) -> Vec<f64> {
    p.iter().enumerate().map(|(j, x)| x / params.coord_mass(j)).collect()
}

fn total_kinetic(pieces: &[Piece], params: &SystemParams) -> f64 {
    let last = pieces.last().expect("path has pieces");
    last.k0 + piece_kinetic(last, last.t1 - last.t0, params)
}

fn piece_kinetic(piece: &Piece, tau: f64, params: &SystemParams) -> f64 {
    match &piece.shape {
        Shape::Linear { v } => tau * norm_m(v, v, params),
        Shape::Blend { v1, v2 } => {
            let w = piece.t1 - piece.t0;
            let x = (tau / w).clamp(0.0, 1.0);
            let d: Vec<f64> = v2.iter().zip(v1).map(|(a, b)| a - b).collect();
            w * (norm_m(v1, v1, params) * x
                + 2.0 * norm_m(v1, &d, params) * smooth_int(x)
                + norm_m(&d, &d, params) * smooth_sq_int(x))
        }
    }
}

impl ControlPath {
    /// Position, velocity, acceleration and running kinetic integral at time u.
    fn jet(&self, u: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>, f64) {
        let i = self.pieces.partition_point(|p| p.t1 < u).min(self.pieces.len() - 1);
        self.jet_local(i, u - self.pieces[i].t0)
    }

    // Local time tau keeps full relative precision inside narrow blends, where
    // the acceleration scales like 1/width^2 in tau.
    fn jet_local(&self, i: usize, tau: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>, f64) {
        let piece = &self.pieces[i];
        let kin = piece.k0 + piece_kinetic(piece, tau, &self.params);
        match &piece.shape {
            Shape::Linear { v } => {
                let q = piece.x0.iter().zip(v).map(|(x, vj)| x + tau * vj).collect();
                (q, v.clone(), vec![0.0; v.len()], kin)
            }
            Shape::Blend { v1, v2 } => {
                let w = piece.t1 - piece.t0;
                let x = (tau / w).clamp(0.0, 1.0);
                let (s, ds, is) = (smooth(x), smooth_d(x), smooth_int(x));
                let n = v1.len();
                let mut q = vec![0.0; n];
                let mut vel = vec![0.0; n];
                let mut acc = vec![0.0; n];
                for j in 0..n {
                    let d = v2[j] - v1[j];
                    q[j] = piece.x0[j] + w * (v1[j] * x + d * is);
                    vel[j] = v1[j] + d * s;
                    acc[j] = d * ds / w;
                }
                (q, vel, acc, kin)
            }
        }
    }

    /// Phase-space point of the path at time u, with P = m dphi/du.
    pub fn state_at(&self, u: f64) -> State {
        let (q, v, _, kin) = self.jet(u);
        let p = v
            .iter()
            .enumerate()
            .map(|(j, x)| x * self.params.coord_mass(j))
            .collect();
        State::new(q, p, self.xi_from_kinetic(u, kin))
    }

    fn xi_from_kinetic(&self, u: f64, kin: f64) -> f64 {
        let pr = &self.params;
        self.origin.xi + kin / pr.a - u * pr.kbt() * pr.dof() / pr.a
    }

    /// Control read off the momentum equation along the path.
    pub fn eta_at(&self, u: f64, pot: &dyn Potential) -> Vec<f64> {
        let i = self.pieces.partition_point(|p| p.t1 < u).min(self.pieces.len() - 1);
        self.eta_local(i, u - self.pieces[i].t0, pot)
    }

    /// Control on smooth piece `i` at offset `tau` from its start.
    pub fn eta_local(&self, i: usize, tau: f64, pot: &dyn Potential) -> Vec<f64> {
        let pr = &self.params;
        let (q, v, acc, kin) = self.jet_local(i, tau);
        let xi = self.xi_from_kinetic(self.pieces[i].t0 + tau, kin);
        let g = pot.grad_vec(&q);
        let sigma = (2.0 * pr.gamma * pr.kbt()).sqrt();
        (0..v.len())
            .map(|j| {
                let m = pr.coord_mass(j);
                let p = m * v[j];
                (m * acc[j] + xi * p + pr.gamma * p / m + g[j]) / sigma
            })
            .collect()
    }

    /// Integral of |P|_m over [0, t], the arc length of the position path.
    pub fn arc_length(&self) -> f64 {
        self.pieces
            .iter()
            .map(|piece| {
                apply_rule(&GL20, piece.t0, piece.t1, |u| {
                    let (_, v, _, _) = self.jet(u);
                    norm_m(&v, &v, &self.params).sqrt()
                })
            })
            .sum()
    }

    /// Start and end times of the smooth pieces (linear runs and corner blends).
    pub fn piece_bounds(&self) -> Vec<(f64, f64)> {
        self.pieces.iter().map(|p| (p.t0, p.t1)).collect()
    }

    /// Samples as CSV with columns t, q*, p*, xi, eta*.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.origin.q.len();
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|j| format!("q{j}")));
        header.extend((0..n).map(|j| format!("p{j}")));
        header.push("xi".into());
        header.extend((0..n).map(|j| format!("eta{j}")));
        writeln!(w, "{}", header.join(","))?;
        for s in &self.samples {
            let mut row = vec![format!("{:e}", s.t)];
            row.extend(s.q.iter().chain(&s.p).map(|x| format!("{x:e}")));
            row.push(format!("{:e}", s.xi));
            row.extend(s.eta.iter().map(|x| format!("{x:e}")));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Build a path from `x` to `target` over time `t` whose control realises the
/// target under the deterministic system. `dwell` forces the transit duration;
/// otherwise it is solved for so that xi(t) hits the requested value.
pub fn build_control_path(
    x: &State,
    t: f64,
    target: &State,
    delta: f64,
    dwell: Option<f64>,
    pot: &dyn Potential,
    params: &SystemParams,
) -> Result<ControlPath> {
    x.check_dims(params)?;
    target.check_dims(params)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(contract(format!("horizon must be positive, got {t}")));
    }
    if !(delta > 0.0 && delta < 0.5 * t) {
        return Err(contract(format!("delta must lie in (0, t/2), got {delta}")));
    }
    if !x.is_finite() || !target.is_finite() {
        return Err(contract("states must be finite"));
    }
    if !pot.in_domain(&x.q) || !pot.in_domain(&target.q) {
        return Err(NhbError::Domain("path endpoints must lie in the domain".into()));
    }
    let v = velocities(&x.p, params);
    let v2 = velocities(&target.p, params);
    let l = position_distance(&x.q, &target.q, params);
    let floor = min_xi_from_length(x.xi, t, l, params);
    let drain = t * params.kbt() * params.dof();
    let tol = FEASIBILITY_TOL * (1.0 + floor.abs());
    let kinetic_of = |s: f64| {
        let segs = segments(&x.q, &v, &target.q, &v2, t, delta, s);
        total_kinetic(&assemble(&x.q, &segs, t, delta, params), params)
    };

    let (kind, s) = match dwell {
        Some(s) => {
            if !(s > 2.0 * delta && s <= t) {
                return Err(contract(format!("dwell split must lie in (2 delta, t], got {s}")));
            }
            (if s < t { PathKind::Dwell } else { PathKind::Boundary }, s)
        }
        None => {
            if target.xi < floor - tol {
                return Err(NhbError::Infeasible(format!(
                    "xi' = {} lies below the least reachable value {floor} at this position",
                    target.xi
                )));
            }
            let needed = params.a * (target.xi - x.xi) + drain;
            if needed <= kinetic_of(t) {
                (PathKind::Boundary, t)
            } else {
                (PathKind::Dwell, solve_split(&kinetic_of, needed, t, delta)?)
            }
        }
    };

    let segs = segments(&x.q, &v, &target.q, &v2, t, delta, s);
    let pieces = assemble(&x.q, &segs, t, delta, params);
    let kinetic = total_kinetic(&pieces, params);
    let knots = segs.iter().skip(1).map(|(t0, _)| *t0).collect();
    let path_xi = x.xi + (kinetic - drain) / params.a;
    let mut realised = target.clone();
    if dwell.is_some() {
        realised.xi = path_xi;
    }
    let mut path = ControlPath {
        kind,
        horizon: t,
        delta,
        dwell_split: (s < t).then_some(s),
        knots,
        origin: x.clone(),
        target: realised,
        requested_xi: target.xi,
        min_xi: floor,
        path_xi,
        kinetic_integral: kinetic,
        distance: l,
        samples: Vec::new(),
        pieces,
        params: params.clone(),
    };
    check_path_domain(&path, pot)?;
    path.samples = (0..SAMPLE_POINTS)
        .map(|i| {
            let u = t * i as f64 / (SAMPLE_POINTS - 1) as f64;
            let st = path.state_at(u);
            ControlSample {
                t: u,
                eta: path.eta_at(u, pot),
                q: st.q,
                p: st.p,
                xi: st.xi,
            }
        })
        .collect();
    Ok(path)
}

fn check_path_domain(path: &ControlPath, pot: &dyn Potential) -> Result<()> {
    for piece in &path.pieces {
        let a = path.jet(piece.t0).0;
        let b = path.jet(piece.t1).0;
        let ok = match piece.shape {
            Shape::Linear { .. } => segment_clear(&a, &b, pot, 64),
            Shape::Blend { .. } => (0..=16).all(|i| {
                let u = piece.t0 + (piece.t1 - piece.t0) * i as f64 / 16.0;
                pot.in_domain(&path.jet(u).0)
            }),
        };
        if !ok {
            return Err(NhbError::Infeasible(format!(
                "straight-line construction leaves the domain on [{}, {}]",
                piece.t0, piece.t1
            )));
        }
    }
    Ok(())
}

/// Transit duration s in (2 delta, t) with kinetic_of(s) = needed. The kinetic
/// integral blows up as s approaches 2 delta, so a bracket exists whenever the
/// transit has nonzero length.
fn solve_split(kinetic_of: &dyn Fn(f64) -> f64, needed: f64, t: f64, delta: f64) -> Result<f64> {
    let floor = 2.0 * delta;
    let mut hi = t;
    let mut lo = floor + 0.5 * (t - floor);
    let mut bracketed = false;
    for _ in 0..200 {
        if kinetic_of(lo) >= needed {
            bracketed = true;
            break;
        }
        hi = lo;
        lo = floor + 0.5 * (lo - floor);
        if lo <= floor {
            break;
        }
    }
    if !bracketed {
        return Err(NhbError::Infeasible(
            "dwell split bisection failed to bracket the required kinetic integral".into(),
        ));
    }
    // kinetic_of(lo) >= needed > kinetic_of(hi)
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if kinetic_of(mid) >= needed {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (flo, fhi) = (kinetic_of(lo), kinetic_of(hi));
    Ok(if (flo - needed).abs() <= (fhi - needed).abs() { lo } else { hi })
}

/// Endpoint comparison of the integrated control system against the path target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointReport {
    pub endpoint: State,
    pub target: State,
    pub q_error: Vec<f64>,
    pub p_error: Vec<f64>,
    pub xi_error: f64,
    pub max_error: f64,
    pub steps: usize,
}

impl EndpointReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_error < tol
    }
}

/// An additive change to one control coordinate on a time window, for checking
/// that verification notices a wrong control.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaPerturbation {
    pub from: f64,
    pub to: f64,
    pub coord: usize,
    pub amount: f64,
}

/// Integrates the controlled deterministic system from `x` with RK4 and compares
/// the endpoint with the path's target.
pub fn verify_control(path: &ControlPath, x: &State, pot: &dyn Potential, params: &SystemParams) -> Result<EndpointReport> {
    verify_control_with(path, x, pot, params, None)
}

pub fn verify_control_with(
    path: &ControlPath,
    x: &State,
    pot: &dyn Potential,
    params: &SystemParams,
    perturbation: Option<EtaPerturbation>,
) -> Result<EndpointReport> {
    let bounds = path.piece_bounds();
    let eta = |i: usize, tau: f64| {
        let mut e = path.eta_local(i, tau, pot);
        if let Some(pt) = perturbation {
            let u = bounds[i].0 + tau;
            if u >= pt.from && u <= pt.to {
                e[pt.coord] += pt.amount;
            }
        }
        e
    };
    let (endpoint, steps) = integrate_control(x, &bounds, path.horizon / 20_000.0, &eta, pot, params)?;
    let target = path.target.clone();
    let q_error: Vec<f64> = endpoint.q.iter().zip(&target.q).map(|(a, b)| (a - b).abs()).collect();
    let p_error: Vec<f64> = endpoint.p.iter().zip(&target.p).map(|(a, b)| (a - b).abs()).collect();
    let xi_error = (endpoint.xi - target.xi).abs();
    let max_error = q_error.iter().chain(&p_error).fold(xi_error, |m, v| m.max(*v));
    Ok(EndpointReport {
        endpoint,
        target,
        q_error,
        p_error,
        xi_error,
        max_error,
        steps,
    })
}

/// RK4 on the controlled deterministic system over consecutive smooth pieces,
/// with steps no longer than `h_max` and at least 32 per piece. The control is
/// called as `eta(piece, tau)` with tau the offset from the piece start.
/// Returns the endpoint and the number of steps taken.
pub fn integrate_control(
    x: &State,
    pieces: &[(f64, f64)],
    h_max: f64,
    eta: &dyn Fn(usize, f64) -> Vec<f64>,
    pot: &dyn Potential,
    params: &SystemParams,
) -> Result<(State, usize)> {
    x.check_dims(params)?;
    if !(h_max > 0.0) {
        return Err(contract("step bound must be positive"));
    }
    let n = params.n_coords();
    let sigma = (2.0 * params.gamma * params.kbt()).sqrt();
    // y = (q, p, xi)
    let rhs = |piece: usize, tau: f64, y: &[f64]| -> Vec<f64> {
        let (q, p, xi) = (&y[..n], &y[n..2 * n], y[2 * n]);
        let g = pot.grad_vec(q);
        let e = eta(piece, tau);
        let mut out = vec![0.0; 2 * n + 1];
        let mut kin = 0.0;
        for j in 0..n {
            let m = params.coord_mass(j);
            out[j] = p[j] / m;
            out[n + j] = -xi * p[j] - params.gamma * p[j] / m - g[j] + sigma * e[j];
            kin += p[j] * p[j] / m;
        }
        out[2 * n] = (kin - params.dof() * params.kbt()) / params.a;
        out
    };
    let axpy = |y: &[f64], k: &[f64], c: f64| -> Vec<f64> { y.iter().zip(k).map(|(a, b)| a + c * b).collect() };
    let mut y: Vec<f64> = x.q.iter().chain(&x.p).cloned().chain([x.xi]).collect();
    let mut steps = 0;
    for (k, &(t0, t1)) in pieces.iter().enumerate() {
        let len = t1 - t0;
        if len <= 0.0 {
            continue;
        }
        let m = ((len / h_max).ceil() as usize).max(32);
        let h = len / m as f64;
        for i in 0..m {
            let tau = h * i as f64;
            let k1 = rhs(k, tau, &y);
            let k2 = rhs(k, tau + 0.5 * h, &axpy(&y, &k1, 0.5 * h));
            let k3 = rhs(k, tau + 0.5 * h, &axpy(&y, &k2, 0.5 * h));
            let k4 = rhs(k, tau + h, &axpy(&y, &k3, h));
            for j in 0..y.len() {
                y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
            steps += 1;
            if y.iter().any(|v| !v.is_finite()) || !pot.in_domain(&y[..n]) {
                return Err(NhbError::Domain(format!(
                    "control system left the domain at t = {} with q = {:?}",
                    t0 + tau + h,
                    &y[..n]
                )));
            }
        }
    }
    Ok((State::new(y[..n].to_vec(), y[n..2 * n].to_vec(), y[2 * n]), steps))
}
