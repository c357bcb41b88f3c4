//! Histogram total-variation distance between two ensembles over time.

use serde::{Deserialize, Serialize};

use crate::error::{contract, NhbError, Result};
use crate::model::State;

/// Smallest ensemble accepted by `tv_decay`.
pub const MIN_ENSEMBLE: usize = 1000;

/// Bins on the (q_0, p_0) plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Binning {
    /// Per-snapshot Freedman-Diaconis widths from the pooled ensembles, widened
    /// when needed so no axis has more than `max_bins` bins. Uncapped FD bins
    /// resolve densities, which leaves the TV estimate dominated by noise.
    FreedmanDiaconis { max_bins: usize },
    Grid {
        q: [f64; 2],
        p: [f64; 2],
        nq: usize,
        np: usize,
    },
}

impl Default for Binning {
    fn default() -> Self {
        Binning::FreedmanDiaconis { max_bins: 12 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TvDecay {
    pub times: Vec<f64>,
    pub tv: Vec<f64>,
    /// Monte-Carlo noise level of tv at each time, from split-half comparisons.
    pub floor: Vec<f64>,
    /// Index range [start, end) used for the exponential fit.
    pub window: [usize; 2],
    /// Fitted log tv = intercept - rate t.
    pub rate: f64,
    pub intercept: f64,
    pub r2: f64,
    /// tv never rises by more than the noise floor inside [0, end).
    pub monotone: bool,
}

/// Compare ensembles `a[k]` and `b[k]` sampled at `times[k]`.
pub fn tv_decay(a: &[Vec<State>], b: &[Vec<State>], times: &[f64], binning: Binning) -> Result<TvDecay> {
    if a.len() != times.len() || b.len() != times.len() || times.is_empty() {
        return Err(contract("tv_decay needs one snapshot per time in each ensemble"));
    }
    let mut tv = Vec::with_capacity(times.len());
    let mut floor = Vec::with_capacity(times.len());
    for (sa, sb) in a.iter().zip(b) {
        if sa.len() != sb.len() || sa.len() < MIN_ENSEMBLE {
            return Err(contract(format!(
                "ensembles must have equal size >= {MIN_ENSEMBLE}, got {} and {}",
                sa.len(),
                sb.len()
            )));
        }
        let pa: Vec<[f64; 2]> = sa.iter().map(plane).collect();
        let pb: Vec<[f64; 2]> = sb.iter().map(plane).collect();
        let grid = make_grid(&pa, &pb, binning)?;
        tv.push(histogram_tv(&grid, &pa, &pb));
        let (a0, a1) = halves(&pa);
        let (b0, b1) = halves(&pb);
        let split = 0.5 * (histogram_tv(&grid, &a0, &a1) + histogram_tv(&grid, &b0, &b1));
        floor.push(split / std::f64::consts::SQRT_2);
    }

    // Fit from where the ensembles first overlap to just before the noise floor.
    let start = tv.iter().position(|&v| v < 0.95).unwrap_or(tv.len());
    let mut end = start;
    while end < tv.len() && tv[end] > 3.0 * floor[end] {
        end += 1;
    }
    let (rate, intercept, r2) = if end >= start + 3 {
        fit_exponential(&times[start..end], &tv[start..end])
    } else {
        (f64::NAN, f64::NAN, f64::NAN)
    };
    let monotone = (1..end.max(1)).all(|k| tv[k] <= tv[k - 1] + 2.0 * floor[k].max(floor[k - 1]));
    Ok(TvDecay {
        times: times.to_vec(),
        tv,
        floor,
        window: [start, end],
        rate,
        intercept,
        r2,
        monotone,
    })
}

fn plane(x: &State) -> [f64; 2] {
    [x.q[0], x.p[0]]
}

fn halves(v: &[[f64; 2]]) -> (Vec<[f64; 2]>, Vec<[f64; 2]>) {
    (v.iter().step_by(2).copied().collect(), v.iter().skip(1).step_by(2).copied().collect())
}

struct Grid {
    lo: [f64; 2],
    width: [f64; 2],
    n: [usize; 2],
}

impl Grid {
    fn index(&self, x: &[f64; 2]) -> Option<usize> {
        let mut idx = [0usize; 2];
        for d in 0..2 {
            let s = ((x[d] - self.lo[d]) / self.width[d]).floor();
            if !(s >= 0.0) {
                return None;
            }
            let s = s as usize;
            // the top edge belongs to the last bin
            idx[d] = if s == self.n[d] { s - 1 } else { s };
            if idx[d] >= self.n[d] {
                return None;
            }
        }
        Some(idx[0] * self.n[1] + idx[1])
    }
}

fn make_grid(a: &[[f64; 2]], b: &[[f64; 2]], binning: Binning) -> Result<Grid> {
    let degenerate = |msg: String| NhbError::Contract(format!("degenerate binning: {msg}"));
    if a.iter().chain(b).any(|x| !x[0].is_finite() || !x[1].is_finite()) {
        return Err(degenerate("non-finite sample".into()));
    }
    match binning {
        Binning::Grid { q, p, nq, np } => {
            if nq == 0 || np == 0 || !(q[1] > q[0]) || !(p[1] > p[0]) {
                return Err(degenerate(format!("grid q={q:?} p={p:?} bins {nq}x{np}")));
            }
            Ok(Grid {
                lo: [q[0], p[0]],
                width: [(q[1] - q[0]) / nq as f64, (p[1] - p[0]) / np as f64],
                n: [nq, np],
            })
        }
        Binning::FreedmanDiaconis { max_bins } => {
            if max_bins == 0 {
                return Err(degenerate("max_bins = 0".into()));
            }
            let mut lo = [0.0; 2];
            let mut width = [0.0; 2];
            let mut n = [0usize; 2];
            for d in 0..2 {
                let mut v: Vec<f64> = a.iter().chain(b).map(|x| x[d]).collect();
                v.sort_by(f64::total_cmp);
                let (min, max) = (v[0], v[v.len() - 1]);
                let iqr = quantile(&v, 0.75) - quantile(&v, 0.25);
                let range = max - min;
                lo[d] = min;
                if range == 0.0 {
                    width[d] = 1.0;
                    n[d] = 1;
                    continue;
                }
                let fd = 2.0 * iqr / (v.len() as f64).cbrt();
                let w = if fd > 0.0 { fd } else { range / (v.len() as f64).sqrt().ceil() };
                n[d] = ((range / w).ceil() as usize).clamp(1, max_bins);
                width[d] = range / n[d] as f64;
            }
            Ok(Grid { lo, width, n })
        }
    }
}

fn quantile(sorted: &[f64], f: f64) -> f64 {
    let pos = f * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (pos - i as f64) * (sorted[j] - sorted[i])
}

// Half the L1 distance between normalized histograms; samples outside a fixed
// grid form one extra shared bin.
fn histogram_tv(grid: &Grid, a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    let cells = grid.n[0] * grid.n[1] + 1;
    let mut ha = vec![0u32; cells];
    let mut hb = vec![0u32; cells];
    for x in a {
        ha[grid.index(x).unwrap_or(cells - 1)] += 1;
    }
    for x in b {
        hb[grid.index(x).unwrap_or(cells - 1)] += 1;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    0.5 * ha
        .iter()
        .zip(&hb)
        .map(|(&x, &y)| (x as f64 / na - y as f64 / nb).abs())
        .sum::<f64>()
}

// Least squares of log y on t; returns (rate, intercept, R^2).
fn fit_exponential(t: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = t.len() as f64;
    let mt = t.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let stt: f64 = t.iter().map(|x| (x - mt) * (x - mt)).sum();
    let sty: f64 = t.iter().zip(&ly).map(|(x, v)| (x - mt) * (v - my)).sum();
    let syy: f64 = ly.iter().map(|v| (v - my) * (v - my)).sum();
    let slope = sty / stt;
    let intercept = my - slope * mt;
    let r2 = if syy > 0.0 { sty * sty / (stt * syy) } else { 1.0 };
    (-slope, intercept, r2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn cloud(center: [f64; 2], n: usize, seed: u64) -> Vec<State> {
        let mut r = rng::stream(seed, 0);
        (0..n)
            .map(|_| {
                let (a, b) = rng::normal_pair(&mut r);
                State::new(vec![center[0] + a], vec![center[1] + b], 0.0)
            })
            .collect()
    }

    #[test]
    fn identical_ensembles_have_zero_tv() {
        let e = vec![cloud([0.0, 0.0], 1000, 1); 3];
        let r = tv_decay(&e, &e, &[0.0, 1.0, 2.0], Binning::default()).unwrap();
        assert!(r.tv.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn disjoint_deltas_have_unit_tv() {
        let a = vec![vec![State::new(vec![-3.0], vec![0.0], 0.0); 1000]];
        let b = vec![vec![State::new(vec![3.0], vec![0.0], 0.0); 1000]];
        let r = tv_decay(&a, &b, &[0.0], Binning::default()).unwrap();
        assert_eq!(r.tv[0], 1.0);
    }

    #[test]
    fn symmetric_and_relabel_invariant() {
        let a = vec![cloud([0.0, 0.0], 1500, 2)];
        let b = vec![cloud([0.5, -0.2], 1500, 3)];
        let ab = tv_decay(&a, &b, &[0.0], Binning::default()).unwrap();
        let ba = tv_decay(&b, &a, &[0.0], Binning::default()).unwrap();
        assert_eq!(ab.tv, ba.tv);
        // reversing both chain orders permutes samples, not bins
        let ra: Vec<Vec<State>> = a.iter().map(|s| s.iter().rev().cloned().collect()).collect();
        let rb: Vec<Vec<State>> = b.iter().map(|s| s.iter().rev().cloned().collect()).collect();
        let r = tv_decay(&ra, &rb, &[0.0], Binning::default()).unwrap();
        assert_eq!(r.tv, ab.tv);
    }

    #[test]
    fn exponential_fit_recovers_rate() {
        let t: Vec<f64> = (0..10).map(|i| i as f64 * 0.5).collect();
        let y: Vec<f64> = t.iter().map(|x| 0.8 * (-1.3 * x).exp()).collect();
        let (rate, c, r2) = fit_exponential(&t, &y);
        assert!((rate - 1.3).abs() < 1e-12 && (c - 0.8f64.ln()).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let a = vec![cloud([0.0, 0.0], 1000, 2)];
        let bad = Binning::Grid { q: [1.0, 1.0], p: [0.0, 1.0], nq: 4, np: 4 };
        assert!(tv_decay(&a, &a, &[0.0], bad).is_err());
        let small = vec![cloud([0.0, 0.0], 10, 2)];
        assert!(tv_decay(&small, &small, &[0.0], Binning::default()).is_err());
        let mut nan = a.clone();
        nan[0][3].q[0] = f64::NAN;
        assert!(tv_decay(&nan, &a, &[0.0], Binning::default()).is_err());
    }
}
