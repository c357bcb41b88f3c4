//! Parameters of the Lyapunov function and their selection rule.

use serde::{Deserialize, Serialize};

use super::cutoff::CutoffSet;
use crate::error::{NhbError, Result};
use crate::model::SystemParams;
use crate::specfun::{beta_star, dawson_max};

/// Parameters of W = exp(beta0 H + psi0 + psi1 + psi2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovParams {
    pub beta0: f64,
    /// Budget in the sandwich exp((beta0 - eps0) H) <= W <= exp((beta0 + eps0) H).
    pub eps0: f64,
    /// Working slack used inside the rate formulas.
    pub eps: f64,
    pub delta: f64,
    pub alpha: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub k_star: f64,
    pub p_star: f64,
    pub u_star: f64,
    pub xi_star: f64,
    pub k1: f64,
}

/// Starting values for the three scales grown by the certification loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleSeeds {
    pub p_star: f64,
    pub u_star: f64,
    pub xi_star: f64,
}

impl ScaleSeeds {
    /// p* = U* = 1 and xi* one unit above its floor.
    pub fn minimal(params: &SystemParams) -> Self {
        Self {
            p_star: 1.0,
            u_star: 1.0,
            xi_star: xi_star_floor(params) + 1.0,
        }
    }
}

/// max_j 3 gamma / m_j + 1; xi* must exceed this.
pub fn xi_star_floor(params: &SystemParams) -> f64 {
    3.0 * params.gamma / params.min_mass() + 1.0
}

impl LyapunovParams {
    pub fn cutoffs(&self) -> CutoffSet {
        CutoffSet::new(self.k_star, self.xi_star)
    }

    pub fn validate(&self, params: &SystemParams) -> Result<()> {
        let bs = beta_star(params);
        if !(self.beta0 > 0.0 && self.beta0 < bs) {
            return Err(NhbError::Rejected(format!(
                "beta0 = {} must satisfy 0 < beta0 < beta* = beta/(8 D_max^2) = {bs:.6}",
                self.beta0
            )));
        }
        if !(self.eps0 > 0.0 && self.eps0 < self.beta0) {
            return Err(NhbError::Rejected(format!(
                "eps0 = {} must lie in (0, beta0)",
                self.eps0
            )));
        }
        let floor = xi_star_floor(params);
        if !(self.xi_star > floor) {
            return Err(NhbError::Rejected(format!(
                "xi* = {} must exceed max_j 3 gamma/m_j + 1 = {floor}",
                self.xi_star
            )));
        }
        let dmax = (self.eps0 / 3.0).min(0.5 * (bs - self.beta0));
        if self.delta > dmax * (1.0 + 1e-12) || self.delta <= 0.0 {
            return Err(NhbError::Rejected(format!(
                "delta = {} must lie in (0, {dmax}]",
                self.delta
            )));
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("p_star", self.p_star),
            ("u_star", self.u_star),
            ("k_star", self.k_star),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(NhbError::Rejected(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Fill in delta, eps, alpha1, alpha2, K* from (alpha, beta0, eps0); p*, U*, xi*
/// come from `seeds` and are grown later by certification.
///
/// The working eps is half of the smaller of delta and the admissible bound
/// min{1/2 - beta0/(2 beta), 1/2, beta* - beta0 - delta}.
pub fn select_params(
    alpha: f64,
    beta0: f64,
    eps0: f64,
    params: &SystemParams,
    seeds: ScaleSeeds,
) -> Result<LyapunovParams> {
    let beta = params.beta();
    let bs = beta_star(params);
    if !(alpha > 0.0) {
        return Err(NhbError::Rejected(format!("alpha must be positive, got {alpha}")));
    }
    if !(beta0 > 0.0 && beta0 < bs) {
        return Err(NhbError::Rejected(format!(
            "beta0 = {beta0} violates beta0 < beta* = beta/(8 D_max^2) = {bs:.6}"
        )));
    }
    if !(eps0 > 0.0 && eps0 < beta0) {
        return Err(NhbError::Rejected(format!("eps0 = {eps0} must lie in (0, beta0)")));
    }
    let kn = params.dof();
    let k1 = params.k1();
    let delta = (eps0 / 3.0).min(0.5 * (bs - beta0));
    let bound = (0.5 - beta0 / (2.0 * beta)).min(0.5).min(bs - beta0 - delta);
    let eps = (0.5 * delta).min(0.5 * bound);
    let alpha1 = 2.0 * alpha + 2.0 * (beta0 / beta) * k1 + 2.0 * ((beta0 + delta + eps) / beta) * kn;
    let d = dawson_max().d_max;
    let alpha2 = 1.0 / (4.0 * d * d);
    let k_star = beta * alpha / (beta0 * kn) + k1 / kn + (beta0 + delta + eps) / beta0;
    let lp = LyapunovParams {
        beta0,
        eps0,
        eps,
        delta,
        alpha,
        alpha1,
        alpha2,
        k_star,
        p_star: seeds.p_star,
        u_star: seeds.u_star,
        xi_star: seeds.xi_star,
        k1,
    };
    lp.validate(params)?;
    Ok(lp)
}
