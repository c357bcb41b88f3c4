//! The generator of the dynamics, by analytic jets or by finite differences.

use super::params::LyapunovParams;
use super::psi::{hamiltonian_jet, lyapunov_v_jet, psi0_jet, psi1_jet, psi2_jet, FieldJet};
use crate::error::{NhbError, Result};
use crate::model::{momentum_norm_sq, Potential, State, SystemParams};

/// The three pieces of the generator: transport in q, the momentum
/// Ornstein-Uhlenbeck-like part, and the thermostat drift in xi.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct OperatorSplit {
    /// sum_i m_i^-1 p_i . grad_{q_i}
    pub t1: f64,
    /// -sum_i (xi + gamma/m_i) p_i . grad_{p_i} - grad U . grad_p + (gamma/beta) Laplacian_p
    pub a: f64,
    /// a^-1 (|p|_m^2 - kN/beta) d/dxi
    pub t2: f64,
}

impl OperatorSplit {
    pub fn total(&self) -> f64 {
        self.t1 + self.a + self.t2
    }
}

pub fn split_from_jet(jet: &FieldJet, x: &State, pot: &dyn Potential, params: &SystemParams) -> OperatorSplit {
    let n = x.q.len();
    let grad_u = pot.grad_vec(&x.q);
    let mut t1 = 0.0;
    let mut drift_p = 0.0;
    for j in 0..n {
        let m = params.coord_mass(j);
        t1 += x.p[j] / m * jet.grad_q[j];
        drift_p -= ((x.xi + params.gamma / m) * x.p[j] + grad_u[j]) * jet.grad_p[j];
    }
    let a = drift_p + params.gamma / params.beta() * jet.lap_p;
    let t2 = (momentum_norm_sq(&x.p, params) - params.dof() / params.beta()) / params.a * jet.d_xi;
    OperatorSplit { t1, a, t2 }
}

/// L phi from the derivatives in `jet`, written as one sum.
pub fn generator_from_jet(jet: &FieldJet, x: &State, pot: &dyn Potential, params: &SystemParams) -> f64 {
    let n = x.q.len();
    let grad_u = pot.grad_vec(&x.q);
    let beta = params.beta();
    let mut acc = 0.0;
    for j in 0..n {
        let m = params.coord_mass(j);
        acc += x.p[j] / m * jet.grad_q[j] - (x.xi + params.gamma / m) * x.p[j] * jet.grad_p[j]
            - grad_u[j] * jet.grad_p[j];
    }
    acc + (momentum_norm_sq(&x.p, params) - params.dof() / beta) / params.a * jet.d_xi
        + params.gamma / beta * jet.lap_p
}

const FIRST_STEP: f64 = 1e-4;
const SECOND_STEP: f64 = 1e-3;

fn shifted(x: &State, kind: u8, k: usize, h: f64) -> State {
    let mut y = x.clone();
    match kind {
        0 => y.q[k] += h,
        1 => y.p[k] += h,
        _ => y.xi += h,
    }
    y
}

/// Richardson-extrapolated central differences of `phi` at `x`.
///
/// Steps scale with max(1, |coordinate|): 1e-4 for first derivatives and
/// 1e-3 for the second derivatives in p.
pub fn fd_jet(phi: &dyn Fn(&State) -> f64, x: &State, pot: &dyn Potential) -> Result<FieldJet> {
    let n = x.q.len();
    let f0 = phi(x);
    let mut jet = FieldJet::zero(n);
    jet.value = f0;
    let d1 = |kind: u8, k: usize, c: f64| -> f64 {
        let h = FIRST_STEP * c.abs().max(1.0);
        let cd = |h: f64| (phi(&shifted(x, kind, k, h)) - phi(&shifted(x, kind, k, -h))) / (2.0 * h);
        (4.0 * cd(0.5 * h) - cd(h)) / 3.0
    };
    for k in 0..n {
        let h = FIRST_STEP * x.q[k].abs().max(1.0);
        for s in [h, -h] {
            let q = shifted(x, 0, k, s).q;
            if !pot.in_domain(&q) || !pot.value(&q).is_finite() {
                return Err(NhbError::Stencil { coordinate: k });
            }
        }
        jet.grad_q[k] = d1(0, k, x.q[k]);
        jet.grad_p[k] = d1(1, k, x.p[k]);
        let h = SECOND_STEP * x.p[k].abs().max(1.0);
        let sd = |h: f64| (phi(&shifted(x, 1, k, h)) - 2.0 * f0 + phi(&shifted(x, 1, k, -h))) / (h * h);
        jet.lap_p += (4.0 * sd(0.5 * h) - sd(h)) / 3.0;
    }
    jet.d_xi = d1(2, 0, x.xi);
    Ok(jet)
}

/// L phi at `x` with derivatives of `phi` taken by finite differences.
pub fn generator_apply(
    phi: &dyn Fn(&State) -> f64,
    x: &State,
    pot: &dyn Potential,
    params: &SystemParams,
) -> Result<f64> {
    x.check_dims(params)?;
    let jet = fd_jet(phi, x, pot)?;
    Ok(generator_from_jet(&jet, x, pot, params))
}

/// Same as `generator_apply` but returned piece by piece.
pub fn generator_split(
    phi: &dyn Fn(&State) -> f64,
    x: &State,
    pot: &dyn Potential,
    params: &SystemParams,
) -> Result<OperatorSplit> {
    x.check_dims(params)?;
    let jet = fd_jet(phi, x, pot)?;
    Ok(split_from_jet(&jet, x, pot, params))
}

/// LV + (gamma/beta) |grad_p V|^2, which equals LW / W for W = exp(V).
pub fn drift_ratio(x: &State, pot: &dyn Potential, lp: &LyapunovParams, params: &SystemParams) -> Result<f64> {
    x.check_dims(params)?;
    let jet = lyapunov_v_jet(x, pot, lp, params)?;
    let grad_sq: f64 = jet.grad_p.iter().map(|g| g * g).sum();
    Ok(generator_from_jet(&jet, x, pot, params) + params.gamma / params.beta() * grad_sq)
}

/// drift_ratio split by source: the generator applied to each piece of V,
/// and the quadratic term (gamma/beta)|grad_p V|^2.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct DriftBreakdown {
    pub base: f64,
    pub psi0: f64,
    pub psi1: f64,
    pub psi2: f64,
    pub quadratic: f64,
}

impl DriftBreakdown {
    pub fn total(&self) -> f64 {
        self.base + self.psi0 + self.psi1 + self.psi2 + self.quadratic
    }
}

pub fn drift_breakdown(
    x: &State,
    pot: &dyn Potential,
    lp: &LyapunovParams,
    params: &SystemParams,
) -> Result<DriftBreakdown> {
    x.check_dims(params)?;
    let h = hamiltonian_jet(x, pot, params)?;
    let j0 = psi0_jet(x, lp, params);
    let j1 = psi1_jet(x, pot, lp);
    let j2 = psi2_jet(x, pot, lp, params);
    let quad: f64 = (0..x.p.len())
        .map(|k| {
            let g = lp.beta0 * h.grad_p[k] + j0.grad_p[k] + j1.grad_p[k] + j2.grad_p[k];
            g * g
        })
        .sum();
    let gen = |j: &FieldJet| generator_from_jet(j, x, pot, params);
    Ok(DriftBreakdown {
        base: lp.beta0 * gen(&h),
        psi0: gen(&j0),
        psi1: gen(&j1),
        psi2: gen(&j2),
        quadratic: params.gamma / params.beta() * quad,
    })
}

/// LH in closed form: -xi kN/beta - gamma sum p^2/m^2 + (gamma/beta) sum 1/m.
pub fn generator_of_h_closed_form(x: &State, params: &SystemParams) -> f64 {
    let beta = params.beta();
    let mut acc = -x.xi * params.dof() / beta;
    for (j, p) in x.p.iter().enumerate() {
        let m = params.coord_mass(j);
        acc += -params.gamma * p * p / (m * m) + params.gamma / (beta * m);
    }
    acc
}
