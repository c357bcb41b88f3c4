//! The augmented Gibbs measure exp(-beta H) / Z and its marginals.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{contract, NhbError, Result};
use crate::model::{hamiltonian, Potential, PotentialHandle, State, SystemParams};
use crate::quadrature::{apply_rule, box_integral, GL20};

/// Cells per unit length of the q-marginal CDF table.
const CDF_CELLS_PER_UNIT: f64 = 200.0;

#[derive(Debug, Clone)]
pub struct GibbsModel {
    pub pot: PotentialHandle,
    pub params: SystemParams,
    pub beta: f64,
    /// log of the full normalization; only available when kN <= 2.
    pub log_z: Option<f64>,
    /// log of the configurational part, int exp(-beta U) dq.
    pub log_zq: Option<f64>,
    q_table: Option<QTable>,
}

// Cumulative integral of exp(-beta (U - u0)) on a uniform grid over [lo, hi].
#[derive(Debug, Clone)]
struct QTable {
    lo: f64,
    cell: f64,
    u0: f64,
    cum: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Moments {
    pub mean: f64,
    pub var: f64,
}

impl GibbsModel {
    pub fn new(pot: PotentialHandle, params: &SystemParams) -> Result<Self> {
        params.validate()?;
        let n = params.n_coords();
        if pot.n_coords() != n {
            return Err(contract(format!(
                "potential has {} coordinates, system has {n}",
                pot.n_coords()
            )));
        }
        let beta = params.beta();
        let (log_zq, q_table) = match n {
            1 => {
                let t = q_table(pot.as_ref(), beta)?;
                (Some(t.cum.last().unwrap().ln() - beta * t.u0), Some(t))
            }
            2 => (Some(log_zq_2d(pot.as_ref(), beta)?), None),
            _ => (None, None),
        };
        let log_z = log_zq.map(|lz| lz + log_z_momentum(params) + log_z_xi(params));
        Ok(Self {
            pot,
            params: params.clone(),
            beta,
            log_z,
            log_zq,
            q_table,
        })
    }

    /// CDF of the q-marginal; one-coordinate systems only.
    pub fn q_cdf(&self, x: f64) -> Result<f64> {
        let t = self
            .q_table
            .as_ref()
            .ok_or_else(|| contract("q_cdf needs a one-coordinate system"))?;
        let total = *t.cum.last().unwrap();
        let s = (x - t.lo) / t.cell;
        if s <= 0.0 {
            return Ok(0.0);
        }
        let i = s.floor() as usize;
        if i >= t.cum.len() - 1 {
            return Ok(1.0);
        }
        let a = t.lo + t.cell * i as f64;
        let part = apply_rule(&GL20, a, x, |y| boltzmann(self.pot.as_ref(), &[y], self.beta, t.u0));
        Ok(((t.cum[i] + part) / total).clamp(0.0, 1.0))
    }

    /// Density of the q-marginal; one-coordinate systems only.
    pub fn q_density(&self, x: f64) -> Result<f64> {
        let lz = self
            .log_zq
            .filter(|_| self.params.n_coords() == 1)
            .ok_or_else(|| contract("q_density needs a one-coordinate system"))?;
        let u = self.pot.value(&[x]);
        Ok(if u.is_finite() { (-self.beta * u - lz).exp() } else { 0.0 })
    }

    /// Momentum coordinate j is N(0, m_j kBT).
    pub fn p_cdf(&self, j: usize, x: f64) -> f64 {
        normal_cdf(x / (self.params.coord_mass(j) * self.params.kbt()).sqrt())
    }

    /// xi is N(0, kBT / a).
    pub fn xi_cdf(&self, x: f64) -> f64 {
        normal_cdf(x / self.xi_moments().var.sqrt())
    }

    pub fn xi_moments(&self) -> Moments {
        Moments {
            mean: 0.0,
            var: self.params.kbt() / self.params.a,
        }
    }
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

fn log_z_momentum(params: &SystemParams) -> f64 {
    (0..params.n_coords())
        .map(|j| 0.5 * (2.0 * PI * params.coord_mass(j) * params.kbt()).ln())
        .sum()
}

fn log_z_xi(params: &SystemParams) -> f64 {
    0.5 * (2.0 * PI * params.kbt() / params.a).ln()
}

#[inline]
fn boltzmann(pot: &dyn Potential, q: &[f64], beta: f64, u0: f64) -> f64 {
    let u = pot.value(q);
    if u.is_finite() {
        (-beta * (u - u0)).exp()
    } else {
        0.0
    }
}

// Smallest grid value of U on [-l, l]^n, and whether exp(-beta (U - u_min)) is
// below 1e-26 on the whole boundary of the box.
fn box_probe(pot: &dyn Potential, beta: f64, l: f64, n: usize) -> (f64, bool) {
    let m = 400;
    let grid: Vec<f64> = (0..=m).map(|i| -l + 2.0 * l * i as f64 / m as f64).collect();
    let mut u_min = f64::INFINITY;
    let mut edge_min = f64::INFINITY;
    let mut visit = |q: &[f64], edge: bool| {
        let u = pot.value(q);
        if u.is_finite() {
            u_min = u_min.min(u);
            if edge {
                edge_min = edge_min.min(u);
            }
        }
    };
    match n {
        1 => {
            for &x in &grid {
                visit(&[x], x.abs() == l);
            }
        }
        _ => {
            let coarse: Vec<f64> = grid.iter().step_by(4).copied().collect();
            for &x in &coarse {
                for &y in &coarse {
                    visit(&[x, y], false);
                }
            }
            for &x in &grid {
                for q in [[x, -l], [x, l], [-l, x], [l, x]] {
                    visit(&q, true);
                }
            }
        }
    }
    (u_min, beta * (edge_min - u_min) > 60.0)
}

fn support_box(pot: &dyn Potential, beta: f64, n: usize) -> Result<(f64, f64)> {
    let mut l = 4.0;
    for _ in 0..40 {
        let (u0, tails_ok) = box_probe(pot, beta, l, n);
        if tails_ok && u0.is_finite() {
            return Ok((l, u0));
        }
        l *= 1.5;
    }
    Err(NhbError::Rejected(format!(
        "could not find a box holding the Boltzmann mass of {}",
        pot.name()
    )))
}

fn q_table(pot: &dyn Potential, beta: f64) -> Result<QTable> {
    let (l, u0) = support_box(pot, beta, 1)?;
    let cells = (2.0 * l * CDF_CELLS_PER_UNIT).ceil() as usize;
    let cell = 2.0 * l / cells as f64;
    let mut cum = Vec::with_capacity(cells + 1);
    let mut acc = 0.0;
    cum.push(0.0);
    for i in 0..cells {
        let a = -l + cell * i as f64;
        acc += apply_rule(&GL20, a, a + cell, |y| boltzmann(pot, &[y], beta, u0));
        cum.push(acc);
    }
    if !(acc > 0.0 && acc.is_finite()) {
        return Err(NhbError::Rejected("Boltzmann weight has no mass".into()));
    }
    Ok(QTable { lo: -l, cell, u0, cum })
}

fn log_zq_2d(pot: &dyn Potential, beta: f64) -> Result<f64> {
    let (l, u0) = support_box(pot, beta, 2)?;
    let f = |q: &[f64]| boltzmann(pot, q, beta, u0);
    let panels = (8.0 * l).ceil() as usize;
    let coarse = box_integral(2, -l, l, panels, &f);
    let fine = box_integral(2, -l, l, 2 * panels, &f);
    if !((fine - coarse).abs() <= 1e-8 * fine && fine > 0.0) {
        return Err(NhbError::Rejected(format!(
            "configurational integral not converged ({coarse} vs {fine})"
        )));
    }
    Ok(fine.ln() - beta * u0)
}

/// -beta H(x) - log Z; -inf outside the domain.
pub fn gibbs_log_density(x: &State, model: &GibbsModel) -> Result<f64> {
    let log_z = model
        .log_z
        .ok_or_else(|| contract("log Z is only computed for kN <= 2; use density ratios"))?;
    x.check_dims(&model.params)?;
    if !model.pot.in_domain(&x.q) {
        return Ok(f64::NEG_INFINITY);
    }
    match hamiltonian(x, model.pot.as_ref(), &model.params) {
        Ok(h) => Ok(-model.beta * h - log_z),
        Err(NhbError::Domain(_)) => Ok(f64::NEG_INFINITY),
        Err(e) => Err(e),
    }
}

/// log of density(x1) / density(x2), which needs no normalization.
pub fn gibbs_log_ratio(x1: &State, x2: &State, model: &GibbsModel) -> Result<f64> {
    let h1 = hamiltonian(x1, model.pot.as_ref(), &model.params)?;
    let h2 = hamiltonian(x2, model.pot.as_ref(), &model.params)?;
    Ok(-model.beta * (h1 - h2))
}
