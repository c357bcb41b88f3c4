//! Phase-space state, system parameters and the Hamiltonian.

mod normality;
mod potential;

pub use normality::{normality_spotcheck, NormalityReport, NormalitySample};
pub use potential::{
    make_potential, DoubleWell, Harmonic, LennardJones, Polynomial, Potential, PotentialHandle,
    PotentialSpec,
};

use serde::{Deserialize, Serialize};

use crate::error::{contract, NhbError, Result};

/// Physical constants and sizes of the particle system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    pub n_particles: usize,
    pub dim: usize,
    pub masses: Vec<f64>,
    pub gamma: f64,
    pub kb: f64,
    pub temperature: f64,
    pub a: f64,
}

impl SystemParams {
    pub fn new(
        n_particles: usize,
        dim: usize,
        masses: Vec<f64>,
        gamma: f64,
        kb: f64,
        temperature: f64,
        a: f64,
    ) -> Result<Self> {
        let params = Self {
            n_particles,
            dim,
            masses,
            gamma,
            kb,
            temperature,
            a,
        };
        params.validate()?;
        Ok(params)
    }

    /// One particle in one dimension with unit constants.
    pub fn unit_1d() -> Self {
        Self {
            n_particles: 1,
            dim: 1,
            masses: vec![1.0],
            gamma: 1.0,
            kb: 1.0,
            temperature: 1.0,
            a: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 || self.dim == 0 {
            return Err(NhbError::Rejected(
                "particle count and dimension must be at least 1".into(),
            ));
        }
        if self.masses.len() != self.n_particles {
            return Err(NhbError::Rejected(format!(
                "expected {} masses, got {}",
                self.n_particles,
                self.masses.len()
            )));
        }
        if self.masses.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(NhbError::Rejected("all masses must be positive".into()));
        }
        for (name, v) in [
            ("gamma", self.gamma),
            ("kb", self.kb),
            ("temperature", self.temperature),
            ("a", self.a),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(NhbError::Rejected(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Inverse temperature 1/(kB T).
    pub fn beta(&self) -> f64 {
        1.0 / (self.kb * self.temperature)
    }

    pub fn kbt(&self) -> f64 {
        self.kb * self.temperature
    }

    /// Number of coordinates, k N.
    pub fn n_coords(&self) -> usize {
        self.n_particles * self.dim
    }

    /// k N as a real number.
    pub fn dof(&self) -> f64 {
        self.n_coords() as f64
    }

    /// Mass attached to flat coordinate index `j`.
    #[inline]
    pub fn coord_mass(&self, j: usize) -> f64 {
        self.masses[j / self.dim]
    }

    /// gamma * sum_i 1/m_i.
    pub fn k1(&self) -> f64 {
        self.gamma * self.masses.iter().map(|m| 1.0 / m).sum::<f64>()
    }

    pub fn min_mass(&self) -> f64 {
        self.masses.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// A point (q, p, xi) of the extended phase space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub xi: f64,
}

impl State {
    pub fn new(q: Vec<f64>, p: Vec<f64>, xi: f64) -> Self {
        Self { q, p, xi }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            q: vec![0.0; n],
            p: vec![0.0; n],
            xi: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.xi.is_finite()
            && self.q.iter().all(|v| v.is_finite())
            && self.p.iter().all(|v| v.is_finite())
    }

    pub(crate) fn check_dims(&self, params: &SystemParams) -> Result<()> {
        let n = params.n_coords();
        if self.q.len() != n || self.p.len() != n {
            return Err(contract(format!(
                "state has {} positions and {} momenta, expected {n}",
                self.q.len(),
                self.p.len()
            )));
        }
        Ok(())
    }
}

/// Squared mass-weighted momentum norm sum_i |p_i|^2 / m_i.
pub fn momentum_norm_sq(p: &[f64], params: &SystemParams) -> f64 {
    p.iter()
        .enumerate()
        .map(|(j, v)| v * v / params.coord_mass(j))
        .sum()
}

/// Mass-weighted position distance sqrt(sum_i m_i |q_i - q'_i|^2).
///
/// This is the norm under which the arc length of a position path equals the
/// time integral of the mass-weighted momentum norm.
pub fn position_distance(q: &[f64], q2: &[f64], params: &SystemParams) -> f64 {
    q.iter()
        .zip(q2)
        .enumerate()
        .map(|(j, (a, b))| params.coord_mass(j) * (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Kinetic energy (1/2) sum_i |p_i|^2 / m_i.
pub fn kinetic_energy(p: &[f64], params: &SystemParams) -> Result<f64> {
    if p.len() != params.n_coords() {
        return Err(contract(format!(
            "momentum has {} coordinates, expected {}",
            p.len(),
            params.n_coords()
        )));
    }
    Ok(0.5 * momentum_norm_sq(p, params))
}

/// H(q, p, xi) = |p|_m^2 / 2 + U(q) + a xi^2 / 2.
pub fn hamiltonian(x: &State, pot: &dyn Potential, params: &SystemParams) -> Result<f64> {
    x.check_dims(params)?;
    if !pot.in_domain(&x.q) {
        return Err(NhbError::Domain(format!("q = {:?}", x.q)));
    }
    let u = pot.value(&x.q);
    if !u.is_finite() {
        return Err(NhbError::Domain(format!("U(q) = {u}")));
    }
    Ok(0.5 * momentum_norm_sq(&x.p, params) + u + 0.5 * params.a * x.xi * x.xi)
}
