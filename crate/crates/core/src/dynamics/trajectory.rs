//! Trajectory simulation with counter-addressed noise and an in-run audit of
//! the pathwise xi bounds.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::integrator::{em, splitting, BoundaryPolicy, IntegratorConfig, Scheme, StepQuad, MAX_HALVINGS};
use crate::error::{NhbError, Result};
use crate::model::{Potential, State, SystemParams};
use crate::rng;

/// Running check of the discrete xi identity and its Cauchy-Schwarz bound.
///
/// With weights w summing to the elapsed time T, every scheme here satisfies
/// xi_n = xi_0 + (sum w |p|_m^2) / a - T kN kBT / a, and Cauchy-Schwarz gives
/// sum w |p|_m^2 >= L^2 / T for L = sum w |p|_m.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PathAudit {
    pub xi0: f64,
    pub elapsed: f64,
    pub kinetic_integral: f64,
    pub arc_length: f64,
    /// Largest relative mismatch of the xi identity over all steps.
    pub identity_residual: f64,
    /// Steps at which xi fell below the Cauchy-Schwarz bound.
    pub bound_violations: u64,
    /// Smallest xi_n - bound_n seen, after the first step.
    pub min_bound_slack: f64,
    #[serde(skip)]
    comp: [f64; 3],
}

impl PathAudit {
    fn new(xi0: f64) -> Self {
        Self {
            xi0,
            min_bound_slack: f64::INFINITY,
            ..Default::default()
        }
    }

    // Neumaier sums keep the audit's own rounding well below the tolerance.
    fn add(sum: &mut f64, comp: &mut f64, v: f64) {
        let t = *sum + v;
        if sum.abs() >= v.abs() {
            *comp += (*sum - t) + v;
        } else {
            *comp += (v - t) + *sum;
        }
        *sum = t;
    }

    fn record(&mut self, quad: StepQuad, h: f64, xi: f64, params: &SystemParams) {
        let [ct, ck, ca] = &mut self.comp;
        Self::add(&mut self.elapsed, ct, h);
        Self::add(&mut self.kinetic_integral, ck, quad.kin);
        Self::add(&mut self.arc_length, ca, quad.arc);
        let t = self.elapsed + self.comp[0];
        let kin = self.kinetic_integral + self.comp[1];
        let arc = self.arc_length + self.comp[2];
        let drain = t * params.dof() * params.kbt() / params.a;
        let gain = kin / params.a;
        let scale = self.xi0.abs() + xi.abs() + gain + drain;
        let resid = (xi - self.xi0 - gain + drain).abs() / scale.max(f64::MIN_POSITIVE);
        self.identity_residual = self.identity_residual.max(resid);
        let bound = self.xi0 + arc * arc / (params.a * t) - drain;
        let slack = xi - bound;
        self.min_bound_slack = self.min_bound_slack.min(slack);
        if slack < -1e-9 * scale {
            self.bound_violations += 1;
        }
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.bound_violations == 0 && self.identity_residual < tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub chain_id: u64,
    pub times: Vec<f64>,
    pub states: Vec<State>,
    /// Standard normals drawn, including bridge refinements.
    pub brownian_increments_consumed: u64,
    /// Number of step halvings performed by the boundary policy.
    pub halvings: u64,
    /// Absent for trajectories read back from disk.
    pub audit: Option<PathAudit>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> Option<&State> {
        self.states.last()
    }
}

// Step n of chain c draws particle i's k normals at word position
// (n N + i) * words_for_normals(k) of stream 2c. Bridge refinements for step n
// come from stream 2c + 1 starting at word n * 2^24.
struct Noise {
    main: ChaCha8Rng,
    refine: ChaCha8Rng,
    n_particles: u128,
    dim: usize,
    stride: u128,
    consumed: u64,
}

const REFINE_WORDS_PER_STEP: u128 = 1 << 24;

impl Noise {
    fn new(seed: u64, chain: u64, params: &SystemParams) -> Self {
        Self {
            main: rng::stream(seed, 2 * chain),
            refine: rng::stream(seed, 2 * chain + 1),
            n_particles: params.n_particles as u128,
            dim: params.dim,
            stride: rng::words_for_normals(params.dim),
            consumed: 0,
        }
    }

    fn step(&mut self, n: u64, out: &mut [f64]) {
        for (i, chunk) in out.chunks_mut(self.dim).enumerate() {
            let pos = (n as u128 * self.n_particles + i as u128) * self.stride;
            if self.main.get_word_pos() != pos {
                self.main.set_word_pos(pos);
            }
            rng::fill_normals(&mut self.main, chunk);
        }
        self.consumed += out.len() as u64;
    }

    fn start_refinement(&mut self, n: u64) {
        self.refine.set_word_pos(n as u128 * REFINE_WORDS_PER_STEP);
    }

    fn refinement(&mut self, out: &mut [f64]) {
        rng::fill_normals(&mut self.refine, out);
        self.consumed += out.len() as u64;
    }
}

/// The kN standard normals used by step `n` of chain `chain`.
pub fn step_normals(seed: u64, chain: u64, n: u64, params: &SystemParams) -> Vec<f64> {
    let mut noise = Noise::new(seed, chain, params);
    let mut out = vec![0.0; params.n_coords()];
    noise.step(n, &mut out);
    out
}

struct Runner<'a> {
    cfg: &'a IntegratorConfig,
    pot: &'a dyn Potential,
    params: &'a SystemParams,
    noise: Noise,
    audit: PathAudit,
    grad: Vec<f64>,
    halvings: u64,
    refining: bool,
}

impl Runner<'_> {
    fn raw_step(&mut self, x: &State, h: f64, dw: &[f64]) -> Result<(State, StepQuad)> {
        match self.cfg.scheme {
            Scheme::EulerMaruyama => em(x, h, dw, self.pot, self.params, &mut self.grad),
            Scheme::Splitting => splitting(x, h, dw, self.pot, self.params, &mut self.grad),
        }
    }

    // Advance x over h with Brownian increment dw, bisecting the interval on
    // domain failures. Returns the failure depth and reason on give-up.
    fn advance(&mut self, n: u64, x: &State, h: f64, dw: &[f64], depth: u32) -> std::result::Result<State, (u32, String)> {
        match self.raw_step(x, h, dw) {
            Ok((y, quad)) => {
                self.audit.record(quad, h, y.xi, self.params);
                Ok(y)
            }
            Err(NhbError::Domain(reason)) => {
                if self.cfg.boundary_policy == BoundaryPolicy::RejectStep || depth >= MAX_HALVINGS {
                    return Err((depth, reason));
                }
                if !self.refining {
                    self.noise.start_refinement(n);
                    self.refining = true;
                }
                self.halvings += 1;
                let mut z = vec![0.0; dw.len()];
                self.noise.refinement(&mut z);
                let s = 0.5 * h.sqrt();
                let dw1: Vec<f64> = dw.iter().zip(&z).map(|(w, z)| 0.5 * w + s * z).collect();
                let dw2: Vec<f64> = dw.iter().zip(&dw1).map(|(w, a)| w - a).collect();
                let mid = self.advance(n, x, 0.5 * h, &dw1, depth + 1)?;
                self.advance(n, &mid, 0.5 * h, &dw2, depth + 1)
            }
            Err(e) => Err((depth, e.to_string())),
        }
    }
}

/// Simulate chain 0. Stores x0 and every `thin`-th state, plus the final one.
pub fn simulate(
    x0: &State,
    cfg: &IntegratorConfig,
    pot: &dyn Potential,
    params: &SystemParams,
    thin: usize,
) -> Result<Trajectory> {
    simulate_chain(x0, cfg, pot, params, thin, 0)
}

pub fn simulate_chain(
    x0: &State,
    cfg: &IntegratorConfig,
    pot: &dyn Potential,
    params: &SystemParams,
    thin: usize,
    chain: u64,
) -> Result<Trajectory> {
    let mut times = vec![0.0];
    let mut states = vec![x0.clone()];
    let summary = run_chain(x0, cfg, pot, params, chain, |n, t, x| {
        if n % thin.max(1) as u64 == 0 || n == cfg.n_steps {
            times.push(t);
            states.push(x.clone());
        }
    })?;
    Ok(Trajectory {
        chain_id: chain,
        times,
        states,
        brownian_increments_consumed: summary.consumed,
        halvings: summary.halvings,
        audit: Some(summary.audit),
    })
}

/// Outcome of a chain run without stored states.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub last: State,
    pub consumed: u64,
    pub halvings: u64,
    pub audit: PathAudit,
}

/// Drive one chain, handing every accepted step (n >= 1, time t, state) to
/// `observe`. Useful for long runs whose statistics are folded on the fly.
pub fn run_chain(
    x0: &State,
    cfg: &IntegratorConfig,
    pot: &dyn Potential,
    params: &SystemParams,
    chain: u64,
    mut observe: impl FnMut(u64, f64, &State),
) -> Result<RunSummary> {
    cfg.validate()?;
    params.validate()?;
    x0.check_dims(params)?;
    if !x0.is_finite() || !pot.in_domain(&x0.q) || !pot.value(&x0.q).is_finite() {
        return Err(NhbError::Domain(format!("initial state {x0:?}")));
    }
    let nc = params.n_coords();
    let mut r = Runner {
        cfg,
        pot,
        params,
        noise: Noise::new(cfg.seed, chain, params),
        audit: PathAudit::new(x0.xi),
        grad: vec![0.0; nc],
        halvings: 0,
        refining: false,
    };
    let sqdt = cfg.dt.sqrt();
    let mut z = vec![0.0; nc];
    let mut x = x0.clone();
    for n in 0..cfg.n_steps {
        r.noise.step(n, &mut z);
        for v in z.iter_mut() {
            *v *= sqdt;
        }
        r.refining = false;
        x = match r.advance(n, &x, cfg.dt, &z, 0) {
            Ok(y) => y,
            Err((halvings, reason)) => {
                return Err(NhbError::StepFailed {
                    step: n,
                    halvings,
                    reason,
                    state: Box::new(x),
                })
            }
        };
        observe(n + 1, (n + 1) as f64 * cfg.dt, &x);
    }
    Ok(RunSummary {
        last: x,
        consumed: r.noise.consumed,
        halvings: r.halvings,
        audit: r.audit,
    })
}

/// Independent chains, chain i driven by stream i. Failed chains report their
/// error in place; the others still run.
pub fn ensemble_run(
    x0s: &[State],
    cfg: &IntegratorConfig,
    pot: &dyn Potential,
    params: &SystemParams,
    thin: usize,
) -> Vec<Result<Trajectory>> {
    x0s.par_iter()
        .enumerate()
        .map(|(i, x0)| simulate_chain(x0, cfg, pot, params, thin, i as u64))
        .collect()
}

/// Ensemble snapshots at the given step indices (sorted ascending), without
/// storing whole trajectories. Result is indexed [snapshot][chain].
pub fn ensemble_snapshots(
    x0s: &[State],
    cfg: &IntegratorConfig,
    pot: &dyn Potential,
    params: &SystemParams,
    steps: &[u64],
) -> Result<Vec<Vec<State>>> {
    let per_chain: Vec<Result<Vec<State>>> = x0s
        .par_iter()
        .enumerate()
        .map(|(i, x0)| {
            let mut out = Vec::with_capacity(steps.len());
            let mut next = 0;
            while next < steps.len() && steps[next] == 0 {
                out.push(x0.clone());
                next += 1;
            }
            let mut c = cfg.clone();
            c.n_steps = steps.last().copied().unwrap_or(0);
            run_chain(x0, &c, pot, params, i as u64, |n, _, x| {
                while next < steps.len() && steps[next] == n {
                    out.push(x.clone());
                    next += 1;
                }
            })?;
            Ok(out)
        })
        .collect();
    let mut table = vec![Vec::with_capacity(x0s.len()); steps.len()];
    for chain in per_chain {
        for (k, s) in chain?.into_iter().enumerate() {
            table[k].push(s);
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_potential, PotentialSpec};

    fn harmonic() -> (SystemParams, std::sync::Arc<dyn Potential>) {
        let params = SystemParams::unit_1d();
        let pot = make_potential(&PotentialSpec::Harmonic { c: 0.5, zeta: None }, &params).unwrap();
        (params, pot)
    }

    #[test]
    fn zero_steps_returns_start() {
        let (params, pot) = harmonic();
        let x0 = State::new(vec![0.1], vec![0.2], 0.3);
        let cfg = IntegratorConfig::new(Scheme::Splitting, 0.01, 0, 1);
        let t = simulate(&x0, &cfg, pot.as_ref(), &params, 1).unwrap();
        assert_eq!(t.states, vec![x0]);
        assert_eq!(t.times, vec![0.0]);
    }

    #[test]
    fn equal_seeds_give_identical_paths() {
        let (params, pot) = harmonic();
        let x0 = State::new(vec![0.1], vec![0.2], 0.3);
        for scheme in [Scheme::EulerMaruyama, Scheme::Splitting] {
            let cfg = IntegratorConfig::new(scheme, 0.01, 500, 9);
            let a = simulate(&x0, &cfg, pot.as_ref(), &params, 7).unwrap();
            let b = simulate(&x0, &cfg, pot.as_ref(), &params, 7).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.brownian_increments_consumed, 500);
        }
    }

    #[test]
    fn thinning_keeps_endpoints() {
        let (params, pot) = harmonic();
        let x0 = State::new(vec![0.1], vec![0.2], 0.3);
        let cfg = IntegratorConfig::new(Scheme::Splitting, 0.01, 25, 9);
        let t = simulate(&x0, &cfg, pot.as_ref(), &params, 10).unwrap();
        assert_eq!(t.times.len(), 4);
        assert!((t.times[3] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn noise_is_addressed_by_counter() {
        let mut params = SystemParams::unit_1d();
        params.n_particles = 3;
        params.dim = 3;
        params.masses = vec![1.0; 3];
        let a = step_normals(5, 2, 17, &params);
        let mut noise = Noise::new(5, 2, &params);
        let mut z = vec![0.0; 9];
        for n in 0..=17 {
            noise.step(n, &mut z);
        }
        assert_eq!(a, z);
        assert_ne!(step_normals(5, 3, 17, &params), a);
    }

    #[test]
    fn chains_differ_and_ignore_scheduling() {
        let (params, pot) = harmonic();
        let x0 = State::new(vec![0.0], vec![0.0], 0.0);
        let cfg = IntegratorConfig::new(Scheme::Splitting, 0.01, 200, 3);
        let par = ensemble_run(&[x0.clone(), x0.clone()], &cfg, pot.as_ref(), &params, 50);
        let a = par[0].as_ref().unwrap();
        let b = par[1].as_ref().unwrap();
        assert_ne!(a.states, b.states);
        let serial = simulate_chain(&x0, &cfg, pot.as_ref(), &params, 50, 1).unwrap();
        assert_eq!(&serial, b);
    }

    #[test]
    fn snapshots_match_full_trajectories() {
        let (params, pot) = harmonic();
        let x0s = vec![State::new(vec![1.0], vec![0.0], 0.0); 3];
        let cfg = IntegratorConfig::new(Scheme::Splitting, 0.01, 100, 3);
        let snaps = ensemble_snapshots(&x0s, &cfg, pot.as_ref(), &params, &[0, 50, 100]).unwrap();
        let full = ensemble_run(&x0s, &cfg, pot.as_ref(), &params, 50);
        for c in 0..3 {
            let t = full[c].as_ref().unwrap();
            for k in 0..3 {
                assert_eq!(snaps[k][c], t.states[k]);
            }
        }
    }

    #[test]
    fn audit_holds_for_both_schemes() {
        let (params, pot) = harmonic();
        let x0 = State::new(vec![2.0], vec![-1.0], -3.0);
        for scheme in [Scheme::EulerMaruyama, Scheme::Splitting] {
            let cfg = IntegratorConfig::new(scheme, 0.005, 20_000, 11);
            let t = simulate(&x0, &cfg, pot.as_ref(), &params, 1000).unwrap();
            let a = t.audit.unwrap();
            assert!(a.passes(1e-9), "{a:?}");
            assert!(a.min_bound_slack >= -1e-9);
            assert!((a.elapsed - 100.0).abs() < 1e-9);
        }
    }

    #[test]
    fn long_harmonic_run_stays_finite() {
        let (params, pot) = harmonic();
        let x0 = State::new(vec![0.0], vec![0.0], 0.0);
        let cfg = IntegratorConfig::new(Scheme::Splitting, 1e-3, 1_000_000, 4);
        let s = run_chain(&x0, &cfg, pot.as_ref(), &params, 0, |_, _, x| assert!(x.is_finite())).unwrap();
        assert!(s.audit.passes(1e-9));
    }

    // U = q^2/2 - ln q on q > 0
    #[derive(Debug)]
    struct Wall;
    impl Potential for Wall {
        fn n_coords(&self) -> usize {
            1
        }
        fn value(&self, q: &[f64]) -> f64 {
            if q[0] > 0.0 {
                0.5 * q[0] * q[0] - q[0].ln()
            } else {
                f64::INFINITY
            }
        }
        fn grad(&self, q: &[f64], out: &mut [f64]) {
            out[0] = q[0] - 1.0 / q[0];
        }
        fn hess(&self, q: &[f64], out: &mut [f64]) {
            out[0] = 1.0 + 1.0 / (q[0] * q[0]);
        }
        fn in_domain(&self, q: &[f64]) -> bool {
            q[0] > 0.0
        }
        fn zeta(&self) -> f64 {
            1.5
        }
        fn is_convex_domain(&self) -> bool {
            true
        }
        fn name(&self) -> &str {
            "wall"
        }
    }

    #[test]
    fn halving_rescues_steps_at_the_wall() {
        let params = SystemParams::unit_1d();
        let x0 = State::new(vec![0.1], vec![-5.0], 0.0);
        for scheme in [Scheme::EulerMaruyama, Scheme::Splitting] {
            let mut cfg = IntegratorConfig::new(scheme, 0.05, 2000, 1);
            let t = simulate(&x0, &cfg, &Wall, &params, 1).unwrap();
            assert!(t.halvings > 0);
            assert!(t.states.iter().all(|s| s.q[0] > 0.0));
            assert!(t.audit.as_ref().unwrap().passes(1e-9));
            assert!(t.brownian_increments_consumed > 2000);
            let again = simulate(&x0, &cfg, &Wall, &params, 1).unwrap();
            assert_eq!(t, again);

            cfg.boundary_policy = BoundaryPolicy::RejectStep;
            match simulate(&x0, &cfg, &Wall, &params, 1).unwrap_err() {
                NhbError::StepFailed { step, halvings, state, .. } => {
                    assert_eq!(step, 0);
                    assert_eq!(halvings, 0);
                    assert_eq!(*state, x0);
                }
                e => panic!("unexpected {e}"),
            }
        }
    }
}
