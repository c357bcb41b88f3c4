//! Sample statistics along trajectories.

use serde::Serialize;

use crate::dynamics::Trajectory;
use crate::error::{contract, Result};
use crate::model::{momentum_norm_sq, State, SystemParams};

/// sup_x |F_n(x) - F(x)|, checking both sides of every jump of F_n so that
/// step-function references are handled exactly.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(contract("ks_distance needs at least one sample"));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(contract("ks_distance got a NaN sample"));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        let x = xs[i];
        let mut j = i;
        while j < xs.len() && xs[j] == x {
            j += 1;
        }
        let below = i as f64 / n;
        let at = j as f64 / n;
        d = d.max((cdf(x) - at).abs()).max((cdf(x.next_down()) - below).abs());
        i = j;
    }
    Ok(d)
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(contract("ks_two_sample needs two non-empty samples"));
    }
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Mean of |p|_m^2 / (kN) over the stored states, converging to kBT.
pub fn temperature_estimate(traj: &Trajectory, params: &SystemParams) -> Result<f64> {
    temperature_of_states(&traj.states, params)
}

pub fn temperature_of_states(states: &[State], params: &SystemParams) -> Result<f64> {
    if states.is_empty() {
        return Err(contract("temperature estimate needs a non-empty trajectory"));
    }
    let s: f64 = states.iter().map(|x| momentum_norm_sq(&x.p, params)).sum();
    Ok(s / (states.len() as f64 * params.dof()))
}

/// Per-particle kinetic temperatures |p_i|^2 / (m_i k); equal under equipartition.
pub fn temperature_by_particle(states: &[State], params: &SystemParams) -> Result<Vec<f64>> {
    if states.is_empty() {
        return Err(contract("temperature estimate needs a non-empty trajectory"));
    }
    let k = params.dim;
    let mut out = vec![0.0; params.n_particles];
    for x in states {
        for (i, o) in out.iter_mut().enumerate() {
            let s: f64 = x.p[i * k..(i + 1) * k].iter().map(|v| v * v).sum();
            *o += s / params.masses[i];
        }
    }
    for o in &mut out {
        *o /= states.len() as f64 * k as f64;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ErgodicEstimate {
    pub mean: f64,
    /// Batch-means standard error.
    pub se: f64,
    pub batches: usize,
}

/// Trapezoid time average of f along the stored states, with a batch-means
/// standard error from up to 20 contiguous batches.
pub fn ergodic_average(f: impl Fn(&State) -> f64, traj: &Trajectory) -> Result<ErgodicEstimate> {
    if traj.states.len() < 2 || traj.times.len() != traj.states.len() {
        return Err(contract("ergodic_average needs at least two timed states"));
    }
    let v: Vec<f64> = traj.states.iter().map(&f).collect();
    let mean = trapezoid_mean(&traj.times, &v);
    let segments = traj.states.len() - 1;
    let batches = segments.min(20);
    let se = if batches >= 2 {
        let per = segments / batches;
        let means: Vec<f64> = (0..batches)
            .map(|b| {
                let lo = b * per;
                let hi = if b + 1 == batches { segments } else { lo + per };
                trapezoid_mean(&traj.times[lo..=hi], &v[lo..=hi])
            })
            .collect();
        let m0 = means[0];
        let mb = m0 + means.iter().map(|m| m - m0).sum::<f64>() / batches as f64;
        let var = means.iter().map(|m| (m - mb) * (m - mb)).sum::<f64>() / (batches - 1) as f64;
        (var / batches as f64).sqrt()
    } else {
        f64::NAN
    };
    Ok(ErgodicEstimate { mean, se, batches })
}

// Written relative to v[0] so a constant integrand returns that constant
// exactly.
fn trapezoid_mean(t: &[f64], v: &[f64]) -> f64 {
    let base = v[0];
    let mut acc = 0.0;
    let mut span = 0.0;
    for k in 1..t.len() {
        let w = t[k] - t[k - 1];
        acc += 0.5 * w * ((v[k] - base) + (v[k - 1] - base));
        span += w;
    }
    if span > 0.0 {
        base + acc / span
    } else {
        base
    }
}

/// Sample mean and unbiased variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, v)
}

/// Drop the leading `fraction` of stored states.
pub fn burn_in(traj: &Trajectory, fraction: f64) -> Trajectory {
    let k = ((traj.states.len() as f64) * fraction.clamp(0.0, 1.0)).floor() as usize;
    let mut out = traj.clone();
    out.states.drain(..k.min(out.states.len().saturating_sub(1)));
    out.times.drain(..k.min(out.times.len().saturating_sub(1)));
    out
}
