//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::sync::Arc;
use std::time::Instant;

use nhb::control::{build_control_path, min_xi, verify_control};
use nhb::diagnostics::{ks_distance, lyapunov_contraction, mean_var, tv_decay, Binning, GibbsModel};
use nhb::dynamics::{run_chain, IntegratorConfig, PathAudit, Scheme};
use nhb::error::NhbError;
use nhb::lyapunov::{
    certify_auto, drift_ratio, generator_apply, generator_of_h_closed_form, generator_split, lyapunov_v, select_params,
    AutoConfig, LyapunovParams, ScaleSeeds,
};
use nhb::model::{hamiltonian, make_potential, Potential, PotentialSpec, State, SystemParams};
use nhb::specfun::{beta_star_ratio, dawson};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn unit() -> SystemParams {
    SystemParams::unit_1d()
}

fn harmonic(params: &SystemParams) -> Arc<dyn Potential> {
    make_potential(&PotentialSpec::Harmonic { c: 0.5, zeta: None }, params).unwrap()
}

fn double_well(params: &SystemParams) -> Arc<dyn Potential> {
    make_potential(&PotentialSpec::DoubleWell { c1: 0.25, c2: 0.5, c3: None, zeta: None }, params).unwrap()
}

fn random_state(rng: &mut ChaCha8Rng, q: f64, p: f64, xi: f64) -> State {
    State::new(
        vec![rng.gen_range(-q..q)],
        vec![rng.gen_range(-p..p)],
        rng.gen_range(-xi..xi),
    )
}

fn beta_star_constant() -> Outcome {
    let b = beta_star_ratio();
    verdict((b - 0.427015).abs() <= 1e-4, format!("beta* = {b:.9}"))
}

fn dawson_suite() -> Outcome {
    let mut worst = 0.0f64;
    for i in 0..=200 {
        let z = -10.0 + 0.1 * i as f64;
        let h = 1e-3;
        let d1 = (dawson(z + h) - dawson(z - h)) / (2.0 * h);
        let d2 = (dawson(z + 0.5 * h) - dawson(z - 0.5 * h)) / h;
        let deriv = (4.0 * d2 - d1) / 3.0;
        worst = worst.max((deriv - (1.0 - 2.0 * z * dawson(z))).abs());
    }
    let tail = (2.0 * 100.0 * dawson(100.0) - 1.0).abs();
    // D(1) from 30-digit quadrature of exp(t^2 - 1) over [0, 1], frozen.
    let oracle = 0.538_079_506_912_768_4;
    let at_one = (dawson(1.0) - oracle).abs();
    verdict(
        worst < 1e-8 && tail < 1e-3 && at_one < 1e-10,
        format!("ode residual {worst:.2e}, |2zD-1| at 100 = {tail:.2e}, |D(1) - oracle| = {at_one:.2e}"),
    )
}

fn generator_identity() -> Outcome {
    let params = unit();
    let mut worst_rel = 0.0f64;
    let mut worst_split = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for pot in [harmonic(&params), double_well(&params)] {
        let h = |s: &State| hamiltonian(s, pot.as_ref(), &params).unwrap();
        for _ in 0..1000 {
            let x = random_state(&mut rng, 3.0, 3.0, 3.0);
            let fd = generator_apply(&h, &x, pot.as_ref(), &params).map_err(|e| e.to_string())?;
            let exact = generator_of_h_closed_form(&x, &params);
            worst_rel = worst_rel.max((fd - exact).abs() / exact.abs().max(1.0));
            let split = generator_split(&h, &x, pot.as_ref(), &params).map_err(|e| e.to_string())?;
            worst_split = worst_split.max((split.total() - fd).abs() / fd.abs().max(1.0));
        }
    }
    verdict(
        worst_rel < 1e-6 && worst_split < 1e-10,
        format!("max rel error {worst_rel:.2e}, split mismatch {worst_split:.2e} (2000 states)"),
    )
}

fn exponential_identity(lp: &LyapunovParams) -> Outcome {
    let params = unit();
    let pot = double_well(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let x = random_state(&mut rng, 3.0, 3.0, 8.0);
        // W / W(x) keeps the finite differences in range
        let v0 = lyapunov_v(&x, pot.as_ref(), lp, &params).map_err(|e| e.to_string())?;
        let w = |s: &State| (lyapunov_v(s, pot.as_ref(), lp, &params).unwrap() - v0).exp();
        let fd = generator_apply(&w, &x, pot.as_ref(), &params).map_err(|e| e.to_string())?;
        let dr = drift_ratio(&x, pot.as_ref(), lp, &params).map_err(|e| e.to_string())?;
        worst = worst.max((fd - dr).abs() / dr.abs().max(1.0));
    }
    verdict(worst < 1e-5, format!("max rel mismatch {worst:.2e} over 1000 states"))
}

struct Certified {
    lp: LyapunovParams,
    ln_k: f64,
}

fn drift_certification() -> (Outcome, Option<Certified>) {
    let params = unit();
    let pot = double_well(&params);
    let lp0 = select_params(1.0, 0.2, 0.06, &params, ScaleSeeds::minimal(&params)).unwrap();
    let rep = match certify_auto(pot.as_ref(), &lp0, &params, &AutoConfig::default()) {
        Ok(r) => r,
        Err(e) => return (Err(e.to_string()), None),
    };
    let Some(fin) = rep.report.as_ref() else {
        return (Err(format!("no certified shell after {} rounds", rep.rounds.len())), None);
    };
    let ok = rep.pass && fin.samples >= 100_000 && fin.drift_violations == 0 && fin.sandwich_violations == 0;
    let detail = format!(
        "shell [{:.0e}, {:.0e}], {} samples, drift violations {}, sandwich violations {}, p* = {}, U* = {}, xi* = {}, ln K = {:.1}",
        fin.shell[0],
        fin.shell[1],
        fin.samples,
        fin.drift_violations,
        fin.sandwich_violations,
        rep.params.p_star,
        rep.params.u_star,
        rep.params.xi_star,
        fin.ln_k
    );
    let cert = Certified {
        lp: rep.params.clone(),
        ln_k: fin.ln_k,
    };
    (verdict(ok, detail), Some(cert))
}

#[derive(Default)]
struct Audits {
    paths: usize,
    worst_residual: f64,
    violations: u64,
}

impl Audits {
    fn add(&mut self, a: &PathAudit) {
        self.paths += 1;
        self.worst_residual = self.worst_residual.max(a.identity_residual);
        self.violations += a.bound_violations;
    }
}

fn sampling(audits: &mut Audits) -> Outcome {
    let params = unit();
    let pot = double_well(&params);
    let model = GibbsModel::new(pot.clone(), &params).map_err(|e| e.to_string())?;
    let dt = 2e-3;
    let burn: u64 = 50_000;
    let kept: u64 = 5_000_000;
    let thin = 10;
    let chains = 8;
    let cfg = IntegratorConfig::new(Scheme::Splitting, dt, burn + kept, 606);
    let (mut qs, mut ps, mut xis) = (Vec::new(), Vec::new(), Vec::new());
    for c in 0..chains {
        let q0 = if c % 2 == 0 { 1.0 } else { -1.0 };
        let x0 = State::new(vec![q0], vec![0.0], 0.0);
        let summary = run_chain(&x0, &cfg, pot.as_ref(), &params, c, |n, _, x| {
            if n > burn && n % thin == 0 {
                qs.push(x.q[0]);
                ps.push(x.p[0]);
                xis.push(x.xi);
            }
        })
        .map_err(|e| e.to_string())?;
        audits.add(&summary.audit);
    }
    let ks = ks_distance(&qs, |x| model.q_cdf(x).unwrap()).map_err(|e| e.to_string())?;
    let temp = ps.iter().map(|p| p * p).sum::<f64>() / ps.len() as f64;
    let (m, v) = mean_var(&xis);
    let ok = ks < 0.01 && (temp - 1.0).abs() < 0.02 && m.abs() < 0.02 && (v - 1.0).abs() < 0.05;
    verdict(
        ok,
        format!(
            "{chains} chains x {kept} steps: KS(q) = {ks:.4}, T = {temp:.4}, mean xi = {m:.4}, var xi = {v:.4}"
        ),
    )
}

fn support_bounds(audits: &Audits) -> Outcome {
    verdict(
        audits.paths > 0 && audits.worst_residual < 1e-9 && audits.violations == 0,
        format!(
            "{} paths: max identity residual {:.2e}, bound violations {}",
            audits.paths, audits.worst_residual, audits.violations
        ),
    )
}

fn control_reachability() -> Outcome {
    let params = unit();
    let pot = harmonic(&params);
    let origin = State::new(vec![0.0], vec![0.4], 0.2);
    let t = 1.0;
    let delta = 1e-7;
    let floor = |q: f64| min_xi(&origin, t, &[q], &params, pot.as_ref()).unwrap();
    let cases = [
        ("boundary", State::new(vec![0.7], vec![-0.2], floor(0.7)), None),
        ("interior", State::new(vec![0.7], vec![-0.2], floor(0.7) + 1.5), None),
        ("dwell", State::new(vec![-0.5], vec![0.6], 0.0), Some(0.6)),
    ];
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, target, dwell) in cases {
        let path = build_control_path(&origin, t, &target, delta, dwell, pot.as_ref(), &params);
        let rep = path.and_then(|p| verify_control(&p, &origin, pot.as_ref(), &params));
        match rep {
            Ok(r) => {
                let per_coord = r.q_error.iter().chain(&r.p_error).chain([&r.xi_error]).fold(0.0f64, |a, e| a.max(e.abs()));
                ok &= per_coord < 1e-6;
                parts.push(format!("{name} {per_coord:.1e}"));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("{name} error: {e}"));
            }
        }
    }
    let bad = State::new(vec![0.7], vec![-0.2], floor(0.7) - 1e-3);
    let rejected = matches!(
        build_control_path(&origin, t, &bad, delta, None, pot.as_ref(), &params),
        Err(NhbError::Infeasible(_))
    );
    ok &= rejected;
    parts.push(format!("infeasible rejected: {rejected}"));
    verdict(ok, parts.join(", "))
}

fn contraction(cert: Option<&Certified>) -> Outcome {
    let cert = cert.ok_or("no certificate from the drift criterion")?;
    let params = unit();
    let pot = double_well(&params);
    let x = State::new(vec![1.5], vec![1.0], 1.0);
    let cfg = IntegratorConfig::new(Scheme::Splitting, 2e-3, 0, 909);
    let rep = lyapunov_contraction(&x, pot.as_ref(), &cert.lp, &params, &cfg, 10_000, &[0.5, 1.0, 2.0], cert.ln_k)
        .map_err(|e| e.to_string())?;
    let rows: Vec<String> = rep
        .rows
        .iter()
        .map(|r| format!("t={} ln E W = {:.3} <= {:.1}", r.t, r.ln_mean_w, r.ln_bound))
        .collect();
    verdict(rep.pass, format!("ln W(x) = {:.3}; {}", rep.ln_w0, rows.join(", ")))
}

fn tv_decay_criterion(audits: &mut Audits) -> Outcome {
    let params = unit();
    let pot = harmonic(&params);
    let every = 25u64;
    let n_snap = 61u64;
    let chains = 10_000;
    let mut ensembles = Vec::new();
    for (q0, seed) in [(-3.0, 11u64), (3.0, 12)] {
        let cfg = IntegratorConfig::new(Scheme::Splitting, 0.01, every * (n_snap - 1), seed);
        let x0 = State::new(vec![q0], vec![0.0], 0.0);
        let mut table = vec![Vec::with_capacity(chains); n_snap as usize];
        table[0] = vec![x0.clone(); chains];
        for c in 0..chains {
            let s = run_chain(&x0, &cfg, pot.as_ref(), &params, c as u64, |n, _, x| {
                if n % every == 0 {
                    table[(n / every) as usize].push(x.clone());
                }
            })
            .map_err(|e| e.to_string())?;
            audits.add(&s.audit);
        }
        ensembles.push(table);
    }
    let times: Vec<f64> = (0..n_snap).map(|k| (k * every) as f64 * 0.01).collect();
    let d = tv_decay(&ensembles[0], &ensembles[1], &times, Binning::default()).map_err(|e| e.to_string())?;
    verdict(
        d.monotone && d.r2 > 0.9,
        format!(
            "R^2 = {:.3}, rate = {:.3}, monotone = {}, fit window t in [{}, {}]",
            d.r2,
            d.rate,
            d.monotone,
            times[d.window[0]],
            times[d.window[1] - 1]
        ),
    )
}

fn main() {
    let mut audits = Audits::default();
    let mut failed = 0;
    let mut report = |n: usize, name: &str, start: Instant, o: Outcome| {
        let secs = start.elapsed().as_secs_f64();
        match o {
            Ok(d) => println!("criterion {n:>2} PASS  {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {d} [{secs:.1}s]");
            }
        }
    };

    let s = Instant::now();
    report(1, "beta* constant", s, beta_star_constant());
    let s = Instant::now();
    report(2, "Dawson suite", s, dawson_suite());
    let s = Instant::now();
    report(3, "generator identity", s, generator_identity());
    let s = Instant::now();
    let (o5, cert) = drift_certification();
    let t5 = s.elapsed();
    let s = Instant::now();
    // the identity is checked with the certified parameters so every perturbation is active
    let lp = cert.as_ref().map(|c| c.lp.clone()).unwrap_or_else(|| {
        let params = unit();
        select_params(1.0, 0.2, 0.06, &params, ScaleSeeds::minimal(&params)).unwrap()
    });
    report(4, "exponential-form identity", s, exponential_identity(&lp));
    report(5, "drift certification", Instant::now() - t5, o5);
    let s = Instant::now();
    let o6 = sampling(&mut audits);
    report(6, "sampling correctness", s, o6);
    let s = Instant::now();
    let o10 = tv_decay_criterion(&mut audits);
    let t10 = s.elapsed();
    let s = Instant::now();
    report(7, "pathwise support bounds", s, support_bounds(&audits));
    let s = Instant::now();
    report(8, "control reachability", s, control_reachability());
    let s = Instant::now();
    report(9, "Lyapunov contraction", s, contraction(cert.as_ref()));
    report(10, "TV decay", Instant::now() - t10, o10);

    println!("acceptance: {} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
