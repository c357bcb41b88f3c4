//! One-step maps of the thermostatted SDE.

use serde::{Deserialize, Serialize};

use crate::error::{contract, NhbError, Result};
use crate::model::{momentum_norm_sq, Potential, State, SystemParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    EulerMaruyama,
    Splitting,
}

/// What to do when a step would put q outside the domain of U.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryPolicy {
    /// Fail the run at the first such step.
    RejectStep,
    /// Retry as two half steps joined by a Brownian bridge, recursively.
    HalveDt,
}

/// Deepest recursion of the halve_dt policy.
pub const MAX_HALVINGS: u32 = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    pub dt: f64,
    pub n_steps: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_policy")]
    pub boundary_policy: BoundaryPolicy,
}

fn default_scheme() -> Scheme {
    Scheme::Splitting
}

fn default_policy() -> BoundaryPolicy {
    BoundaryPolicy::HalveDt
}

impl IntegratorConfig {
    pub fn new(scheme: Scheme, dt: f64, n_steps: u64, seed: u64) -> Self {
        Self {
            scheme,
            dt,
            n_steps,
            seed,
            boundary_policy: BoundaryPolicy::HalveDt,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(NhbError::Rejected(format!("dt must be positive, got {}", self.dt)));
        }
        Ok(())
    }
}

/// Quadrature of the kinetic term over one accepted (sub)step: the increment of
/// sum w |p|_m^2 and of the discrete arc length sum w |p|_m.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct StepQuad {
    pub kin: f64,
    pub arc: f64,
}

fn check_inputs(x: &State, dt: f64, noise: &[f64], pot: &dyn Potential, params: &SystemParams) -> Result<()> {
    x.check_dims(params)?;
    if noise.len() != params.n_coords() {
        return Err(contract(format!(
            "expected {} noise values, got {}",
            params.n_coords(),
            noise.len()
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(contract(format!("dt must be positive, got {dt}")));
    }
    if !pot.in_domain(&x.q) {
        return Err(NhbError::Domain(format!("start q = {:?}", x.q)));
    }
    Ok(())
}

/// Euler-Maruyama step. `noise` holds kN standard normals. The xi update uses
/// the pre-step momentum, so xi' - xi = dt (|p|_m^2 - kN kBT) / a exactly.
pub fn step_euler_maruyama(
    x: &State,
    dt: f64,
    noise: &[f64],
    pot: &dyn Potential,
    params: &SystemParams,
) -> Result<State> {
    check_inputs(x, dt, noise, pot, params)?;
    let dw: Vec<f64> = noise.iter().map(|z| z * dt.sqrt()).collect();
    let mut g = vec![0.0; x.q.len()];
    em(x, dt, &dw, pot, params, &mut g).map(|(y, _)| y)
}

/// Strang splitting xi/2, B/2, O, A, B/2, xi/2. B solves the linear momentum
/// drift with xi and grad U frozen, O adds the matching exact OU noise, A moves
/// q, and the two xi half steps together form a trapezoid rule in |p|_m^2.
pub fn step_splitting(
    x: &State,
    dt: f64,
    noise: &[f64],
    pot: &dyn Potential,
    params: &SystemParams,
) -> Result<State> {
    check_inputs(x, dt, noise, pot, params)?;
    let dw: Vec<f64> = noise.iter().map(|z| z * dt.sqrt()).collect();
    let mut g = vec![0.0; x.q.len()];
    splitting(x, dt, &dw, pot, params, &mut g).map(|(y, _)| y)
}

// Both inner steps take Brownian increments dw (variance h) rather than
// standard normals, which is what bridge refinement produces.
pub(crate) fn em(
    x: &State,
    h: f64,
    dw: &[f64],
    pot: &dyn Potential,
    params: &SystemParams,
    g: &mut [f64],
) -> Result<(State, StepQuad)> {
    let sigma = (2.0 * params.gamma * params.kbt()).sqrt();
    let drain = params.dof() * params.kbt() / params.a;
    pot.grad(&x.q, g);
    let n2 = momentum_norm_sq(&x.p, params);
    let n = x.q.len();
    let mut q = Vec::with_capacity(n);
    let mut p = Vec::with_capacity(n);
    for j in 0..n {
        let m = params.coord_mass(j);
        q.push(x.q[j] + h * x.p[j] / m);
        p.push(x.p[j] - h * ((x.xi + params.gamma / m) * x.p[j] + g[j]) + sigma * dw[j]);
    }
    let xi = x.xi + h * n2 / params.a - h * drain;
    if !pot.segment_in_domain(&x.q, &q) {
        return Err(NhbError::Domain(format!("q = {q:?}")));
    }
    let y = State { q, p, xi };
    accept(&y, pot)?;
    Ok((y, StepQuad { kin: h * n2, arc: h * n2.sqrt() }))
}

pub(crate) fn splitting(
    x: &State,
    h: f64,
    dw: &[f64],
    pot: &dyn Potential,
    params: &SystemParams,
    g: &mut [f64],
) -> Result<(State, StepQuad)> {
    let sigma = (2.0 * params.gamma * params.kbt()).sqrt();
    let half_drain = 0.5 * h * params.dof() * params.kbt() / params.a;
    let n = x.q.len();
    let n0 = momentum_norm_sq(&x.p, params);
    let xi_half = x.xi + 0.5 * h * n0 / params.a - half_drain;

    pot.grad(&x.q, g);
    let mut p = x.p.clone();
    let mut q = x.q.clone();
    for j in 0..n {
        let m = params.coord_mass(j);
        let c = xi_half + params.gamma / m;
        p[j] = linear_drift(p[j], c, g[j], 0.5 * h);
        p[j] += sigma * phi(2.0 * c * h).sqrt() * dw[j];
        q[j] += h * p[j] / m;
    }
    if !pot.segment_in_domain(&x.q, &q) {
        return Err(NhbError::Domain(format!("q = {q:?}")));
    }
    pot.grad(&q, g);
    for j in 0..n {
        let c = xi_half + params.gamma / params.coord_mass(j);
        p[j] = linear_drift(p[j], c, g[j], 0.5 * h);
    }
    let n1 = momentum_norm_sq(&p, params);
    let xi = xi_half + 0.5 * h * n1 / params.a - half_drain;
    let y = State { q, p, xi };
    accept(&y, pot)?;
    let quad = StepQuad {
        kin: 0.5 * h * (n0 + n1),
        arc: 0.5 * h * (n0.sqrt() + n1.sqrt()),
    };
    Ok((y, quad))
}

fn accept(y: &State, pot: &dyn Potential) -> Result<()> {
    if !y.is_finite() {
        return Err(NhbError::Domain("non-finite state".into()));
    }
    if !pot.in_domain(&y.q) || !pot.value(&y.q).is_finite() {
        return Err(NhbError::Domain(format!("q = {:?}", y.q)));
    }
    Ok(())
}

// Exact flow of p' = -c p - g over time tau.
#[inline]
fn linear_drift(p: f64, c: f64, g: f64, tau: f64) -> f64 {
    p * (-c * tau).exp() - g * tau * phi(c * tau)
}

// (1 - e^{-x}) / x, continuous through 0.
#[inline]
fn phi(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - 0.5 * x
    } else {
        -(-x).exp_m1() / x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_potential, PotentialSpec};

    #[derive(Debug)]
    struct Flat;
    impl Potential for Flat {
        fn n_coords(&self) -> usize {
            1
        }
        fn value(&self, _: &[f64]) -> f64 {
            0.0
        }
        fn grad(&self, _: &[f64], out: &mut [f64]) {
            out.fill(0.0);
        }
        fn hess(&self, _: &[f64], out: &mut [f64]) {
            out.fill(0.0);
        }
        fn in_domain(&self, _: &[f64]) -> bool {
            true
        }
        fn zeta(&self) -> f64 {
            1.0
        }
        fn is_convex_domain(&self) -> bool {
            true
        }
        fn name(&self) -> &str {
            "flat"
        }
    }

    #[test]
    fn em_rest_state_only_drains_xi() {
        let params = SystemParams::unit_1d();
        let x = State::new(vec![0.0], vec![0.0], 0.3);
        let y = step_euler_maruyama(&x, 0.01, &[0.0], &Flat, &params).unwrap();
        assert_eq!(y.q, vec![0.0]);
        assert_eq!(y.p, vec![0.0]);
        assert!((y.xi - (0.3 - 0.01)).abs() < 1e-15);
    }

    #[test]
    fn em_xi_increment_example() {
        let params = SystemParams::unit_1d();
        let x = State::new(vec![0.0], vec![2.0], 0.0);
        let y = step_euler_maruyama(&x, 0.01, &[0.7], &Flat, &params).unwrap();
        assert!((y.xi - 0.03).abs() < 1e-15);
    }

    #[test]
    fn splitting_linear_momentum_decay() {
        // |p|_m^2 = kN kBT keeps the first xi half step at xi exactly
        let params = SystemParams::unit_1d();
        let c = 0.4;
        let dt = 0.05;
        let x = State::new(vec![0.0], vec![1.0], c);
        let y = step_splitting(&x, dt, &[0.0], &Flat, &params).unwrap();
        let want = (-(c + 1.0) * dt).exp();
        assert!((y.p[0] - want).abs() < 1e-15, "{} vs {want}", y.p[0]);
    }

    #[test]
    fn splitting_energy_error_is_second_order() {
        // huge thermostat mass keeps xi at 0 to rounding
        let mut params = SystemParams::unit_1d();
        params.gamma = 0.0;
        params.a = 1e15;
        let pot = make_potential(&PotentialSpec::Harmonic { c: 0.5, zeta: None }, &params).unwrap();
        let period = std::f64::consts::TAU;
        let drift = |n: usize| {
            let dt = period / n as f64;
            let mut g = vec![0.0];
            let mut x = State::new(vec![1.0], vec![0.0], 0.0);
            let mut worst: f64 = 0.0;
            for _ in 0..n {
                x = splitting(&x, dt, &[0.0], pot.as_ref(), &params, &mut g).unwrap().0;
                let e = 0.5 * x.p[0] * x.p[0] + 0.5 * x.q[0] * x.q[0];
                worst = worst.max((e - 0.5).abs());
            }
            worst
        };
        let (e1, e2) = (drift(200), drift(400));
        assert!(e1 < 1e-3);
        let ratio = e1 / e2;
        assert!((ratio - 4.0).abs() < 0.3, "energy error ratio {ratio}");
    }

    #[test]
    fn xi_never_drops_faster_than_drainage() {
        let params = SystemParams::unit_1d();
        let pot = make_potential(&PotentialSpec::Harmonic { c: 0.5, zeta: None }, &params).unwrap();
        let mut g = vec![0.0];
        for &(p, z) in &[(0.0, 1.3), (3.0, -2.0), (-0.2, 0.1)] {
            let x = State::new(vec![0.5], vec![p], -1.0);
            for step in [em, splitting] {
                let (y, _) = step(&x, 0.01, &[z * 0.1], pot.as_ref(), &params, &mut g).unwrap();
                assert!(y.xi - x.xi >= -0.01 - 1e-15);
            }
        }
    }

    #[test]
    fn leaving_domain_is_reported() {
        let params = SystemParams::new(2, 1, vec![1.0, 1.0], 1.0, 1.0, 1.0, 1.0).unwrap();
        let pot = make_potential(
            &PotentialSpec::LennardJones { epsilon: 1.0, r_min: 1.0, confinement: 0.1, zeta: None },
            &params,
        )
        .unwrap();
        // particle 0 jumps past particle 1 in one step
        let x = State::new(vec![0.0, 1.0], vec![150.0, 0.0], 0.0);
        let err = step_euler_maruyama(&x, 0.01, &[0.0, 0.0], pot.as_ref(), &params).unwrap_err();
        assert!(matches!(err, NhbError::Domain(_)));
    }

    #[test]
    fn phi_is_smooth_through_zero() {
        assert_eq!(phi(0.0), 1.0);
        assert!((phi(1e-7) - phi(-1e-7)).abs() < 2e-7);
        assert!((phi(1.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
    }
}
