//! Monte-Carlo check of E_x W(x(t)) <= exp(-alpha t) W(x) + K / alpha.
//!
//! W = exp(V) is astronomically large on any certified compact set, so every
//! quantity is carried in log space.

use serde::Serialize;

use crate::dynamics::{ensemble_snapshots, IntegratorConfig};
use crate::error::{contract, Result};
use crate::lyapunov::{lyapunov_v, LyapunovParams};
use crate::model::{Potential, State, SystemParams};

#[derive(Debug, Clone, Serialize)]
pub struct ContractionRow {
    pub t: f64,
    pub ln_mean_w: f64,
    /// log of the standard error of the mean of W.
    pub ln_se: f64,
    /// log(exp(-alpha t) W(x) + K / alpha + 3 SE).
    pub ln_bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContractionReport {
    pub ln_w0: f64,
    pub alpha: f64,
    pub ln_k: f64,
    pub chains: usize,
    pub rows: Vec<ContractionRow>,
    pub pass: bool,
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// log of the sample mean of exp(v) and log of its standard error.
pub fn log_mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let mean = w.iter().sum::<f64>() / n;
    let var = w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (m + mean.ln(), m + 0.5 * (var / n).ln())
}

#[allow(clippy::too_many_arguments)]
pub fn lyapunov_contraction(
    x: &State,
    pot: &dyn Potential,
    lp: &LyapunovParams,
    params: &SystemParams,
    cfg: &IntegratorConfig,
    chains: usize,
    times: &[f64],
    ln_k: f64,
) -> Result<ContractionReport> {
    if chains < 2 || times.iter().any(|t| !(*t >= 0.0)) {
        return Err(contract("contraction check needs >= 2 chains and non-negative times"));
    }
    let alpha = lp.alpha;
    let ln_w0 = lyapunov_v(x, pot, lp, params)?;
    let steps: Vec<u64> = times.iter().map(|t| (t / cfg.dt).round() as u64).collect();
    let mut order: Vec<usize> = (0..steps.len()).collect();
    order.sort_by_key(|&i| steps[i]);
    let sorted: Vec<u64> = order.iter().map(|&i| steps[i]).collect();
    let x0s = vec![x.clone(); chains];
    let snaps = ensemble_snapshots(&x0s, cfg, pot, params, &sorted)?;
    let mut rows = vec![None; times.len()];
    for (k, &i) in order.iter().enumerate() {
        let v: Result<Vec<f64>> = snaps[k].iter().map(|s| lyapunov_v(s, pot, lp, params)).collect();
        let (ln_mean_w, ln_se) = log_mean_and_se(&v?);
        let t = sorted[k] as f64 * cfg.dt;
        let ln_bound = log_sum_exp(&[-alpha * t + ln_w0, ln_k - alpha.ln(), 3f64.ln() + ln_se]);
        rows[i] = Some(ContractionRow {
            t,
            ln_mean_w,
            ln_se,
            ln_bound,
            pass: ln_mean_w <= ln_bound,
        });
    }
    let rows: Vec<ContractionRow> = rows.into_iter().map(Option::unwrap).collect();
    let pass = rows.iter().all(|r| r.pass);
    Ok(ContractionReport {
        ln_w0,
        alpha,
        ln_k,
        chains,
        rows,
        pass,
    })
}
