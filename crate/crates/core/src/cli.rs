//! Command-line front end. `run` parses arguments and returns the exit code.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::control::{build_control_path, min_xi, verify_control, EndpointReport, PathKind};
use crate::diagnostics::{diagnose, tv_decay, Binning, GibbsModel};
use crate::dynamics::{
    ensemble_run, ensemble_snapshots, read_csv, read_ensemble_csv, write_csv, write_ensemble_csv, PathAudit,
};
use crate::error::{NhbError, Result};
use crate::lyapunov::{certify_auto, drift_certify, AutoConfig, CertConfig};
use crate::model::State;
use crate::specfun::{beta_star_ratio, dawson, dawson_max, f_unit};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Endpoint error below which a control path counts as verified.
pub const CONTROL_TOL: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(name = "nhb", version, about = "Thermostatted Langevin sampler with Lyapunov certification")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the configured number of chains.
    #[arg(long, global = true)]
    pub chains: Option<usize>,
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run chains and write trajectories (or ensemble snapshots).
    Simulate,
    /// Compare trajectories with the Gibbs measure; optional TV decay of two ensembles.
    Diagnose {
        /// Trajectory CSV files.
        inputs: Vec<PathBuf>,
        #[arg(long, requires = "ensemble_b")]
        ensemble_a: Option<PathBuf>,
        #[arg(long, requires = "ensemble_a")]
        ensemble_b: Option<PathBuf>,
    },
    /// Certify the drift bound of the Lyapunov function.
    DriftCheck,
    /// Build and verify control paths to the configured targets.
    ControlDemo,
    /// Dawson's integral and the derived constants.
    Specfun {
        /// Points at which to tabulate D and F.
        #[arg(long, num_args = 1.., allow_negative_numbers = true)]
        z: Vec<f64>,
        /// kB T used for the absolute beta*.
        #[arg(long, default_value_t = 1.0)]
        kbt: f64,
    },
}

/// Parse `args` (including the program name) and run. Never panics on bad input.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &NhbError) -> i32 {
    match e {
        NhbError::Config(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Specfun { z, kbt } => cmd_specfun(z, *kbt),
        Command::Simulate => cmd_simulate(&Session::open(cli, "simulate")?),
        Command::Diagnose {
            inputs,
            ensemble_a,
            ensemble_b,
        } => cmd_diagnose(
            &Session::open(cli, "diagnose")?,
            inputs,
            ensemble_a.as_deref().zip(ensemble_b.as_deref()),
        ),
        Command::DriftCheck => cmd_drift_check(&Session::open(cli, "drift-check")?),
        Command::ControlDemo => cmd_control_demo(&Session::open(cli, "control-demo")?),
    }
}

/// A loaded, overridden and validated configuration plus output bookkeeping.
struct Session {
    cfg: RunConfig,
    pot: crate::model::PotentialHandle,
    command: &'static str,
    config_path: PathBuf,
    config_hash: String,
    out: PathBuf,
    quiet: bool,
}

#[derive(Serialize)]
struct OutputFile {
    file: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: String,
    config_sha256: &'a str,
    seed: u64,
    chains: usize,
    outputs: Vec<OutputFile>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Session {
    fn open(cli: &Cli, command: &'static str) -> Result<Self> {
        let path = cli
            .common
            .config
            .clone()
            .ok_or_else(|| NhbError::Config(format!("{command} needs --config PATH")))?;
        let bytes = fs::read(&path).map_err(|e| NhbError::Config(format!("cannot read {}: {e}", path.display())))?;
        let text = String::from_utf8(bytes.clone())
            .map_err(|_| NhbError::Config(format!("{} is not UTF-8", path.display())))?;
        let mut cfg = RunConfig::from_toml_str(&text)?;
        if let Some(s) = cli.common.seed {
            cfg.seed = s;
        }
        if let Some(c) = cli.common.chains {
            cfg.simulation.chains = c;
        }
        if let Some(o) = &cli.common.out {
            cfg.output_dir = o.clone();
        }
        let pot = cfg.validate()?;
        Ok(Self {
            out: cfg.output_dir.clone(),
            cfg,
            pot,
            command,
            config_path: path,
            config_hash: sha256_hex(&bytes),
            quiet: cli.common.quiet,
        })
    }

    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }

    fn ensure_out(&self) -> Result<()> {
        fs::create_dir_all(&self.out)?;
        Ok(())
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.out.join(name);
        let mut f = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut f, value)?;
        writeln!(f)?;
        f.flush()?;
        Ok(path)
    }

    fn write_manifest(&self, files: &[PathBuf]) -> Result<()> {
        let mut outputs = Vec::with_capacity(files.len());
        for f in files {
            outputs.push(OutputFile {
                file: f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
                sha256: sha256_hex(&fs::read(f)?),
            });
        }
        let m = Manifest {
            tool: "nhb",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            config: self.config_path.display().to_string(),
            config_sha256: &self.config_hash,
            seed: self.cfg.seed,
            chains: self.cfg.simulation.chains,
            outputs,
        };
        self.write_json("manifest.json", &m)?;
        Ok(())
    }
}

#[derive(Serialize)]
struct ChainSummary {
    chain: u64,
    stored_states: usize,
    brownian_increments_consumed: u64,
    halvings: u64,
    audit: Option<PathAudit>,
    last: Option<State>,
}

#[derive(Serialize)]
struct SimulateSummary {
    chains: Vec<ChainSummary>,
    failed: Vec<String>,
    dt: f64,
    n_steps: u64,
}

fn cmd_simulate(s: &Session) -> Result<()> {
    let ic = s.cfg.integrator_config()?;
    let x0 = s.cfg.initial_state(&s.pot);
    let x0s = vec![x0; s.cfg.simulation.chains];
    s.ensure_out()?;
    let mut files = Vec::new();

    if let Some(every) = s.cfg.simulation.snapshot_every {
        let steps: Vec<u64> = (0..=ic.n_steps).step_by(every as usize).collect();
        let table = ensemble_snapshots(&x0s, &ic, s.pot.as_ref(), &s.cfg.system, &steps)?;
        let times: Vec<f64> = steps.iter().map(|&n| n as f64 * ic.dt).collect();
        let path = s.out.join("ensemble.csv");
        let mut w = BufWriter::new(File::create(&path)?);
        write_ensemble_csv(&times, &table, &mut w)?;
        w.flush()?;
        files.push(path);
        s.write_manifest(&files)?;
        s.say(format!(
            "wrote {} snapshots of {} chains to {}",
            steps.len(),
            x0s.len(),
            s.out.display()
        ));
        return Ok(());
    }

    let results = ensemble_run(&x0s, &ic, s.pot.as_ref(), &s.cfg.system, s.cfg.simulation.thin);
    let mut chains = Vec::new();
    let mut failed = Vec::new();
    for (c, r) in results.into_iter().enumerate() {
        match r {
            Ok(traj) => {
                let path = s.out.join(format!("traj_chain{c:04}.csv"));
                let mut w = BufWriter::new(File::create(&path)?);
                write_csv(&traj, &mut w)?;
                w.flush()?;
                files.push(path);
                chains.push(ChainSummary {
                    chain: traj.chain_id,
                    stored_states: traj.len(),
                    brownian_increments_consumed: traj.brownian_increments_consumed,
                    halvings: traj.halvings,
                    last: traj.last().cloned(),
                    audit: traj.audit,
                });
            }
            Err(e) => failed.push(format!("chain {c}: {e}")),
        }
    }
    let summary = SimulateSummary {
        chains,
        failed: failed.clone(),
        dt: ic.dt,
        n_steps: ic.n_steps,
    };
    files.push(s.write_json("summary.json", &summary)?);
    s.write_manifest(&files)?;
    s.say(format!(
        "simulated {} chain(s), {} failed; outputs in {}",
        x0s.len(),
        failed.len(),
        s.out.display()
    ));
    if failed.is_empty() {
        Ok(())
    } else {
        Err(NhbError::Infeasible(failed.join("; ")))
    }
}

fn read_ensemble(path: &Path) -> Result<(Vec<f64>, Vec<Vec<State>>)> {
    read_ensemble_csv(BufReader::new(File::open(path)?))
}

fn cmd_diagnose(s: &Session, inputs: &[PathBuf], ensembles: Option<(&Path, &Path)>) -> Result<()> {
    if inputs.is_empty() && ensembles.is_none() {
        return Err(NhbError::Config(
            "diagnose needs trajectory files or --ensemble-a/--ensemble-b".into(),
        ));
    }
    let tv = match ensembles {
        Some((a, b)) => {
            let (ta, ea) = read_ensemble(a)?;
            let (tb, eb) = read_ensemble(b)?;
            if ta != tb {
                return Err(NhbError::Contract("ensembles were sampled at different times".into()));
            }
            let d = tv_decay(&ea, &eb, &ta, Binning::default())?;
            s.say(format!(
                "TV decay: rate {:.4}, R^2 {:.4} on snapshots [{}, {}), monotone {}",
                d.rate, d.r2, d.window[0], d.window[1], d.monotone
            ));
            Some(d)
        }
        None => None,
    };
    s.ensure_out()?;
    let path = if inputs.is_empty() {
        s.write_json("diagnostics.json", &serde_json::json!({ "tv_decay": tv }))?
    } else {
        let mut trajs = Vec::with_capacity(inputs.len());
        for p in inputs {
            let t = read_csv(BufReader::new(File::open(p)?))?;
            if t.is_empty() {
                return Err(NhbError::Contract(format!("{} holds no states", p.display())));
            }
            trajs.push(t);
        }
        let model = GibbsModel::new(s.pot.clone(), &s.cfg.system)?;
        let mut report = diagnose(&trajs, &model, &s.cfg.diagnostics)?;
        report.tv_decay = tv;
        s.say(format!(
            "T = {:.4}, mean xi = {:.4}, var xi = {:.4}, KS(q) = {}",
            report.temperature,
            report.xi.mean,
            report.xi.var,
            report.ks.q.map_or("n/a".into(), |v| format!("{v:.4}"))
        ));
        s.write_json("diagnostics.json", &report)?
    };
    s.write_manifest(&[path])?;
    Ok(())
}

fn cmd_drift_check(s: &Session) -> Result<()> {
    let lp = s.cfg.lyapunov_params()?;
    let l = s.cfg.lyapunov.as_ref().expect("checked by lyapunov_params");
    s.ensure_out()?;
    let (pass, summary, path) = match l.shell {
        Some([lo, hi]) => {
            let c = CertConfig::shell(lo, hi, l.n_samples, s.cfg.seed);
            let rep = drift_certify(s.pot.as_ref(), &lp, &s.cfg.system, &c)?;
            let msg = format!(
                "shell [{lo}, {hi}]: {} samples, {} drift and {} sandwich violations, ln K = {:.3}",
                rep.samples, rep.drift_violations, rep.sandwich_violations, rep.ln_k
            );
            (rep.pass, msg, s.write_json("cert.json", &rep)?)
        }
        None => {
            let cfg = AutoConfig {
                n_final: l.n_samples,
                seed: s.cfg.seed,
                ..AutoConfig::default()
            };
            let rep = certify_auto(s.pot.as_ref(), &lp, &s.cfg.system, &cfg)?;
            let msg = match (&rep.report, rep.certified_r) {
                (Some(r), Some(radius)) => format!(
                    "certified shell [{radius}, {}] after {} round(s): p* = {}, U* = {}, xi* = {}, ln K = {:.3}",
                    10.0 * radius,
                    rep.rounds.len(),
                    rep.params.p_star,
                    rep.params.u_star,
                    rep.params.xi_star,
                    r.ln_k
                ),
                _ => format!("no clean shell found in {} round(s)", rep.rounds.len()),
            };
            (rep.pass, msg, s.write_json("cert.json", &rep)?)
        }
    };
    s.write_manifest(&[path])?;
    s.say(format!("{} {summary}", if pass { "PASS" } else { "FAIL" }));
    if pass {
        Ok(())
    } else {
        Err(NhbError::Infeasible(format!("drift certificate failed: {summary}")))
    }
}

#[derive(Serialize)]
struct ControlEntry {
    index: usize,
    status: &'static str,
    message: Option<String>,
    min_xi: Option<f64>,
    target_xi: Option<f64>,
    kind: Option<PathKind>,
    dwell_split: Option<f64>,
    path_xi: Option<f64>,
    verification: Option<EndpointReport>,
}

fn cmd_control_demo(s: &Session) -> Result<()> {
    let c = s
        .cfg
        .control
        .as_ref()
        .ok_or_else(|| NhbError::Config("missing [control] table".into()))?;
    let params = &s.cfg.system;
    let pot = s.pot.as_ref();
    let x: State = match &c.origin {
        Some(o) => o.into(),
        None => s.cfg.initial_state(&s.pot),
    };
    s.ensure_out()?;
    let mut files = Vec::new();
    let mut entries = Vec::new();
    for (i, t) in c.targets.iter().enumerate() {
        let mut e = ControlEntry {
            index: i,
            status: "failed",
            message: None,
            min_xi: None,
            target_xi: None,
            kind: None,
            dwell_split: None,
            path_xi: None,
            verification: None,
        };
        let outcome = (|| -> Result<()> {
            let floor = min_xi(&x, c.horizon, &t.q, params, pot)?;
            e.min_xi = Some(floor);
            let xi = t.xi.unwrap_or_else(|| floor + t.xi_above_min.unwrap_or(0.0));
            e.target_xi = Some(xi);
            let target = State::new(t.q.clone(), t.p.clone(), xi);
            let path = build_control_path(&x, c.horizon, &target, c.delta, t.dwell, pot, params)?;
            e.kind = Some(path.kind);
            e.dwell_split = path.dwell_split;
            e.path_xi = Some(path.path_xi);
            let file = s.out.join(format!("control_path{i:02}.csv"));
            let mut w = BufWriter::new(File::create(&file)?);
            path.write_csv(&mut w)?;
            w.flush()?;
            files.push(file);
            let rep = verify_control(&path, &x, pot, params)?;
            let ok = rep.passes(CONTROL_TOL);
            e.verification = Some(rep);
            if !ok {
                return Err(NhbError::Infeasible(format!(
                    "endpoint error above {CONTROL_TOL}"
                )));
            }
            Ok(())
        })();
        match outcome {
            Ok(()) => e.status = "verified",
            Err(err) => {
                if matches!(err, NhbError::Infeasible(_)) && e.verification.is_none() {
                    e.status = "infeasible";
                }
                e.message = Some(err.to_string());
            }
        }
        s.say(format!(
            "target {i}: {}{}",
            e.status,
            e.verification
                .as_ref()
                .map_or(String::new(), |r| format!(", max endpoint error {:.3e}", r.max_error))
        ));
        entries.push(e);
    }
    files.push(s.write_json("control.json", &entries)?);
    s.write_manifest(&files)?;
    let bad: Vec<String> = entries
        .iter()
        .filter(|e| e.status != "verified")
        .map(|e| format!("target {}: {}", e.index, e.message.clone().unwrap_or_default()))
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(NhbError::Infeasible(bad.join("; ")))
    }
}

fn cmd_specfun(z: &[f64], kbt: f64) -> Result<()> {
    if !(kbt > 0.0 && kbt.is_finite()) {
        return Err(NhbError::Config(format!("--kbt must be positive, got {kbt}")));
    }
    let zs: Vec<f64> = if z.is_empty() {
        vec![-2.0, -1.0, 0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 100.0]
    } else {
        z.to_vec()
    };
    println!("{:>12} {:>22} {:>22}", "z", "D(z)", "F_unit(z)");
    for &v in &zs {
        println!("{v:>12} {:>22.15} {:>22.15}", dawson(v), f_unit(v));
    }
    let m = dawson_max();
    let ratio = beta_star_ratio();
    println!("z_star      = {:.15}", m.z_star);
    println!("D_max       = {:.15}", m.d_max);
    println!("beta*/beta  = {ratio:.15}");
    println!("beta* (kBT = {kbt}) = {:.15}", ratio / kbt);
    Ok(())
}
