//! Spot check of the Hessian growth condition along probes where U blows up.

use serde::Serialize;

use super::Potential;

#[derive(Debug, Clone, Serialize)]
pub struct NormalitySample {
    pub u: f64,
    pub grad_norm: f64,
    /// Frobenius norm of the Hessian divided by |grad U|^zeta.
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NormalityReport {
    pub potential: String,
    pub zeta: f64,
    pub samples: Vec<NormalitySample>,
    pub grad_increasing: bool,
    pub ratio_decreasing: bool,
    pub pass: bool,
}

/// Default probes: a diagonal ray out to |q| = 1e4, and for non-convex
/// domains also the first two particles approaching coincidence.
pub fn default_probe(pot: &dyn Potential, dim: usize) -> Vec<Vec<f64>> {
    let n = pot.n_coords();
    let mut probes = Vec::new();
    if pot.is_convex_domain() {
        let unit = 1.0 / (n as f64).sqrt();
        for k in 0..=8 {
            let r = 10f64.powf(k as f64 * 0.5);
            probes.push(vec![r * unit; n]);
        }
    } else {
        // particle i placed at i * 1.0 along the first axis, particle 1 slides onto particle 0
        for k in 0..=6 {
            let r = 10f64.powf(-0.25 * k as f64);
            let mut q = vec![0.0; n];
            for i in 0..n / dim {
                q[i * dim] = 2.0 * i as f64;
            }
            q[dim] = r;
            probes.push(q);
        }
    }
    probes
}

/// Evaluate |grad U| and |hess U| / |grad U|^zeta along `probe` (or the default
/// probe). Report only: never errors.
pub fn normality_spotcheck(pot: &dyn Potential, dim: usize, probe: Option<&[Vec<f64>]>) -> NormalityReport {
    let owned;
    let probe = match probe {
        Some(p) => p,
        None => {
            owned = default_probe(pot, dim);
            &owned
        }
    };
    let zeta = pot.zeta();
    let mut samples: Vec<NormalitySample> = probe
        .iter()
        .filter(|q| pot.in_domain(q))
        .map(|q| {
            let g = pot.grad_vec(q);
            let h = pot.hess_vec(q);
            let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            let hn = h.iter().map(|v| v * v).sum::<f64>().sqrt();
            NormalitySample {
                u: pot.value(q),
                grad_norm: gn,
                ratio: hn / gn.powf(zeta),
            }
        })
        .collect();
    samples.sort_by(|a, b| a.u.total_cmp(&b.u));

    // Judge monotonicity on the tail: the samples within the last decade of U,
    // plus the one preceding it so there is always a comparison.
    let ok = samples.len() >= 2;
    let (grad_increasing, ratio_decreasing) = if ok {
        let u_max = samples.last().unwrap().u;
        let first = samples
            .iter()
            .position(|s| s.u >= u_max / 10.0)
            .unwrap_or(0)
            .saturating_sub(1)
            .min(samples.len() - 2);
        let tail = &samples[first..];
        (
            tail.windows(2).all(|w| w[1].grad_norm > w[0].grad_norm),
            tail.windows(2).all(|w| w[1].ratio < w[0].ratio),
        )
    } else {
        (false, false)
    };
    NormalityReport {
        potential: pot.name().to_string(),
        zeta,
        samples,
        grad_increasing,
        ratio_decreasing,
        pass: ok && grad_increasing && ratio_decreasing,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_potential, PotentialSpec, SystemParams};

    #[test]
    fn harmonic_probe_passes() {
        let params = SystemParams::unit_1d();
        let pot = make_potential(&PotentialSpec::Harmonic { c: 0.5, zeta: None }, &params).unwrap();
        let probe = vec![vec![10.0], vec![100.0], vec![1000.0]];
        let r = normality_spotcheck(pot.as_ref(), 1, Some(&probe));
        assert!(r.pass, "{r:?}");
        assert_eq!(r.samples.len(), 3);
    }

    #[test]
    fn double_well_default_probe_passes() {
        let params = SystemParams::unit_1d();
        let spec = PotentialSpec::DoubleWell { c1: 0.25, c2: 0.5, c3: None, zeta: None };
        let pot = make_potential(&spec, &params).unwrap();
        let r = normality_spotcheck(pot.as_ref(), 1, None);
        assert!(r.pass, "{r:?}");
        // closed form at q = 1e4: U' = q^3 - q, U'' = 3 q^2 - 1
        let q: f64 = 1e4;
        let last = r.samples.last().unwrap();
        let expect = (3.0 * q * q - 1.0) / (q.powi(3) - q).powf(1.5);
        assert!((last.ratio / expect - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lj_coincidence_probe_passes() {
        let params = SystemParams::new(2, 1, vec![1.0, 1.0], 1.0, 1.0, 1.0, 1.0).unwrap();
        let spec = PotentialSpec::LennardJones { epsilon: 1.0, r_min: 1.0, confinement: 0.1, zeta: None };
        let pot = make_potential(&spec, &params).unwrap();
        let r = normality_spotcheck(pot.as_ref(), 1, None);
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn flat_probe_fails() {
        let params = SystemParams::unit_1d();
        let pot = make_potential(&PotentialSpec::Harmonic { c: 0.5, zeta: None }, &params).unwrap();
        let r = normality_spotcheck(pot.as_ref(), 1, Some(&[vec![1.0], vec![1.0]]));
        assert!(!r.pass);
    }
}
