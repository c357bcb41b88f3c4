//! Weak-form check that exp(-beta H) is annihilated by the adjoint generator:
//! E[L phi] = 0 under the invariant law for smooth, rapidly decaying phi.

use serde::{Deserialize, Serialize};

use super::gibbs::GibbsModel;
use crate::error::{contract, Result};
use crate::quadrature::gauss_legendre;

/// phi(q, p, xi) = prod_d x_d^{n_d} exp(-x_d^2 / (2 s_d^2)); an infinite scale
/// drops that envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub powers: [u32; 3],
    pub scales: [f64; 3],
}

impl TestFunction {
    /// Ten polynomial-times-Gaussian test functions.
    pub fn battery() -> Vec<TestFunction> {
        const P: [[u32; 3]; 10] = [
            [1, 0, 0],
            [0, 1, 0],
            [0, 0, 1],
            [1, 1, 0],
            [2, 0, 0],
            [0, 2, 0],
            [0, 1, 1],
            [1, 0, 1],
            [0, 2, 1],
            [1, 1, 1],
        ];
        P.iter()
            .map(|&powers| TestFunction {
                powers,
                scales: [1.5, 1.5, 1.5],
            })
            .collect()
    }

    fn factor(&self, d: usize, x: f64) -> [f64; 3] {
        let n = self.powers[d] as i32;
        let inv = 1.0 / (self.scales[d] * self.scales[d]);
        let e = (-0.5 * x * x * inv).exp();
        let pw = |k: i32| if k < 0 { 0.0 } else { x.powi(k) };
        let nf = n as f64;
        [
            pw(n) * e,
            (nf * pw(n - 1) - pw(n + 1) * inv) * e,
            (nf * (nf - 1.0) * pw(n - 2) - (2.0 * nf + 1.0) * pw(n) * inv + pw(n + 2) * inv * inv) * e,
        ]
    }
}

/// Largest |E[L phi]| over the battery under exp(-beta H).
pub fn stationarity_residual(model: &GibbsModel, battery: &[TestFunction]) -> Result<f64> {
    let beta = model.beta;
    let pot = model.pot.clone();
    let m = model.params.masses[0];
    let a = model.params.a;
    stationarity_residual_with(
        model,
        &|q, p, xi| {
            let u = pot.value(&[q]);
            -beta * (u + 0.5 * p * p / m + 0.5 * a * xi * xi)
        },
        battery,
    )
}

/// Same check for an arbitrary unnormalized log density.
pub fn stationarity_residual_with(
    model: &GibbsModel,
    log_density: &dyn Fn(f64, f64, f64) -> f64,
    battery: &[TestFunction],
) -> Result<f64> {
    let params = &model.params;
    if params.n_coords() != 1 {
        return Err(contract("stationarity_residual is defined for one coordinate"));
    }
    let kbt = params.kbt();
    let m = params.masses[0];
    let (g, a) = (params.gamma, params.a);
    let q_half = q_extent(model)?;
    let p_half = 12.0 * (m * kbt).sqrt();
    let xi_half = 12.0 * (kbt / a).sqrt();
    let qn = nodes(-q_half, q_half, 12);
    let pn = nodes(-p_half, p_half, 10);
    let xn = nodes(-xi_half, xi_half, 10);

    // The test functions factor over (q, p, xi), so tabulate each factor once.
    let table = |d: usize, pts: &[(f64, f64)]| -> Vec<Vec<[f64; 3]>> {
        battery.iter().map(|f| pts.iter().map(|&(x, _)| f.factor(d, x)).collect()).collect()
    };
    let (tq, tp, tx) = (table(0, &qn), table(1, &pn), table(2, &xn));
    let grads: Vec<f64> = qn.iter().map(|&(q, _)| model.pot.grad_vec(&[q])[0]).collect();

    let mut logs = Vec::with_capacity(qn.len() * pn.len() * xn.len());
    for &(q, _) in &qn {
        for &(p, _) in &pn {
            for &(xi, _) in &xn {
                logs.push(log_density(q, p, xi));
            }
        }
    }
    let shift = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut mass = 0.0;
    let mut sums = vec![0.0; battery.len()];
    let mut idx = 0;
    for (iq, &(_, wq)) in qn.iter().enumerate() {
        for (ip, &(p, wp)) in pn.iter().enumerate() {
            for (ix, &(xi, wx)) in xn.iter().enumerate() {
                let rho = wq * wp * wx * (logs[idx] - shift).exp();
                idx += 1;
                if rho == 0.0 {
                    continue;
                }
                mass += rho;
                let drift_p = -(xi + g / m) * p - grads[iq];
                let drift_xi = (p * p / m - kbt) / a;
                for (k, s) in sums.iter_mut().enumerate() {
                    let [fq, dfq, _] = tq[k][iq];
                    let [fp, dfp, ddfp] = tp[k][ip];
                    let [fx, dfx, _] = tx[k][ix];
                    let l = (p / m) * dfq * fp * fx
                        + drift_p * fq * dfp * fx
                        + g * kbt * fq * ddfp * fx
                        + drift_xi * fq * fp * dfx;
                    *s += rho * l;
                }
            }
        }
    }
    if !(mass > 0.0) {
        return Err(contract("density has no mass on the quadrature box"));
    }
    Ok(sums.iter().map(|s| (s / mass).abs()).fold(0.0, f64::max))
}

fn q_extent(model: &GibbsModel) -> Result<f64> {
    let mut l: f64 = 4.0;
    for _ in 0..40 {
        if model.q_cdf(-l)? < 1e-18 && 1.0 - model.q_cdf(l)? < 1e-16 {
            return Ok(l);
        }
        l *= 1.5;
    }
    Err(contract("q-marginal has no bounded support box"))
}

fn nodes(lo: f64, hi: f64, panels: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(20);
    let h = (hi - lo) / panels as f64;
    let mut out = Vec::with_capacity(panels * x.len());
    for i in 0..panels {
        let a = lo + h * i as f64;
        for (xi, wi) in x.iter().zip(&w) {
            out.push((a + 0.5 * h * (1.0 + xi), 0.5 * h * wi));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_potential, PotentialSpec, SystemParams};

    fn model(spec: PotentialSpec) -> GibbsModel {
        let params = SystemParams::unit_1d();
        GibbsModel::new(make_potential(&spec, &params).unwrap(), &params).unwrap()
    }

    #[test]
    fn constant_function_contributes_nothing() {
        let m = model(PotentialSpec::Harmonic { c: 0.5, zeta: None });
        let one = TestFunction { powers: [0; 3], scales: [f64::INFINITY; 3] };
        assert_eq!(stationarity_residual(&m, &[one]).unwrap(), 0.0);
    }

    #[test]
    fn harmonic_battery_vanishes() {
        let m = model(PotentialSpec::Harmonic { c: 0.5, zeta: None });
        let r = stationarity_residual(&m, &TestFunction::battery()).unwrap();
        assert!(r < 1e-5, "{r}");
    }

    #[test]
    fn double_well_battery_vanishes() {
        let m = model(PotentialSpec::DoubleWell { c1: 0.25, c2: 0.5, c3: None, zeta: None });
        let r = stationarity_residual(&m, &TestFunction::battery()).unwrap();
        assert!(r < 1e-5, "{r}");
    }

    #[test]
    fn wrong_temperature_is_detected() {
        let m = model(PotentialSpec::Harmonic { c: 0.5, zeta: None });
        let wrong = |q: f64, p: f64, xi: f64| -2.0 * (0.5 * q * q + 0.5 * p * p + 0.5 * xi * xi);
        let r = stationarity_residual_with(&m, &wrong, &TestFunction::battery()).unwrap();
        assert!(r > 1e-2, "{r}");
    }

    #[test]
    fn factor_derivatives_match_differences() {
        let f = TestFunction { powers: [3, 0, 2], scales: [1.2, 0.7, 2.0] };
        for d in 0..3 {
            for &x in &[-1.3, 0.2, 0.9] {
                let h = 1e-4;
                let [v, d1, d2] = f.factor(d, x);
                let [vp, ..] = f.factor(d, x + h);
                let [vm, ..] = f.factor(d, x - h);
                assert!((d1 - (vp - vm) / (2.0 * h)).abs() < 1e-6);
                assert!((d2 - (vp - 2.0 * v + vm) / (h * h)).abs() < 1e-5);
            }
        }
    }
}
