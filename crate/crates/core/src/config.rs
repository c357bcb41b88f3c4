//! TOML run configuration.
//!
//! ```toml
//! schema_version = 1
//! seed = 7
//! output_dir = "out"
//!
//! [potential]
//! kind = "double_well"
//! c1 = 0.25
//! c2 = 0.5
//!
//! [system]
//! n_particles = 1
//! dim = 1
//! masses = [1.0]
//! gamma = 1.0
//! kb = 1.0
//! temperature = 1.0
//! a = 1.0
//!
//! [integrator]
//! scheme = "splitting"        # or "euler_maruyama"
//! dt = 0.002
//! n_steps = 100000
//! boundary_policy = "halve_dt" # or "reject_step"
//!
//! [simulation]
//! chains = 4
//! thin = 10
//! initial = { q = [1.0], p = [0.0], xi = 0.0 }
//!
//! [lyapunov]
//! alpha = 1.0
//! beta0 = 0.2
//! eps0 = "auto"               # or a number in (0, beta0)
//!
//! [diagnostics]
//! burn_in_fraction = 0.1
//!
//! [control]
//! horizon = 1.0
//! delta = 1e-6
//! targets = [{ q = [0.5], p = [0.0], xi_above_min = 0.0 }]
//! ```
//! Every table rejects unknown keys.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::DiagnoseOptions;
use crate::dynamics::{BoundaryPolicy, IntegratorConfig, Scheme};
use crate::error::{NhbError, Result};
use crate::lyapunov::{select_params, xi_star_floor, LyapunovParams, ScaleSeeds};
use crate::model::{make_potential, PotentialHandle, PotentialSpec, State, SystemParams};
use crate::specfun::beta_star;

pub const SCHEMA_VERSION: u32 = 1;

/// eps0 picked as this fraction of beta0 when the config says "auto".
pub const AUTO_EPS0_FRACTION: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub potential: PotentialSpec,
    pub system: SystemParams,
    #[serde(default)]
    pub integrator: Option<IntegratorSection>,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub lyapunov: Option<LyapunovSection>,
    #[serde(default)]
    pub diagnostics: DiagnoseOptions,
    #[serde(default)]
    pub control: Option<ControlSection>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    pub dt: f64,
    pub n_steps: u64,
    #[serde(default = "default_policy")]
    pub boundary_policy: BoundaryPolicy,
}

fn default_scheme() -> Scheme {
    Scheme::Splitting
}

fn default_policy() -> BoundaryPolicy {
    BoundaryPolicy::HalveDt
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    #[serde(default)]
    pub xi: f64,
}

impl From<&StateSpec> for State {
    fn from(s: &StateSpec) -> Self {
        State::new(s.q.clone(), s.p.clone(), s.xi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default = "one")]
    pub chains: usize,
    #[serde(default = "one")]
    pub thin: usize,
    /// Start of every chain; defaults to the potential's base point at rest.
    #[serde(default)]
    pub initial: Option<StateSpec>,
    /// When set, write ensemble snapshots every this many steps instead of
    /// per-chain trajectories.
    #[serde(default)]
    pub snapshot_every: Option<u64>,
}

fn one() -> usize {
    1
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            chains: 1,
            thin: 1,
            initial: None,
            snapshot_every: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Eps0 {
    Value(f64),
    Auto(AutoTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoTag {
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovSection {
    pub alpha: f64,
    pub beta0: f64,
    #[serde(default = "auto_eps0")]
    pub eps0: Eps0,
    /// Explicit scales. Without them certification grows p*, U*, xi* itself.
    #[serde(default)]
    pub p_star: Option<f64>,
    #[serde(default)]
    pub u_star: Option<f64>,
    #[serde(default)]
    pub xi_star: Option<f64>,
    /// Fixed shell [lo, hi]. Without it the shell is searched for.
    #[serde(default)]
    pub shell: Option<[f64; 2]>,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
}

fn auto_eps0() -> Eps0 {
    Eps0::Auto(AutoTag::Auto)
}

fn default_samples() -> usize {
    100_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlTarget {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    /// Absolute thermostat target.
    #[serde(default)]
    pub xi: Option<f64>,
    /// Target given as an offset from the least reachable value.
    #[serde(default)]
    pub xi_above_min: Option<f64>,
    #[serde(default)]
    pub dwell: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    pub horizon: f64,
    pub delta: f64,
    #[serde(default)]
    pub origin: Option<StateSpec>,
    pub targets: Vec<ControlTarget>,
}

fn cfg_err(msg: impl Into<String>) -> NhbError {
    NhbError::Config(msg.into())
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| cfg_err(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(cfg_err(format!(
                "schema_version = {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Cross-field checks shared by every command; returns the potential.
    pub fn validate(&self) -> Result<PotentialHandle> {
        self.system.validate().map_err(to_config)?;
        let pot = make_potential(&self.potential, &self.system).map_err(to_config)?;
        if let Some(i) = &self.integrator {
            if !(i.dt > 0.0 && i.dt.is_finite()) {
                return Err(cfg_err(format!("integrator.dt must be positive, got {}", i.dt)));
            }
        }
        if self.simulation.chains == 0 {
            return Err(cfg_err("simulation.chains must be at least 1"));
        }
        if self.simulation.thin == 0 {
            return Err(cfg_err("simulation.thin must be at least 1"));
        }
        if self.simulation.snapshot_every == Some(0) {
            return Err(cfg_err("simulation.snapshot_every must be at least 1"));
        }
        let x0 = self.initial_state(&pot);
        check_state(&x0, &pot, &self.system, "simulation.initial")?;
        if let Some(l) = &self.lyapunov {
            self.check_lyapunov(l)?;
        }
        if let Some(c) = &self.control {
            if !(c.horizon > 0.0 && c.horizon.is_finite()) {
                return Err(cfg_err(format!("control.horizon must be positive, got {}", c.horizon)));
            }
            if !(c.delta > 0.0 && c.delta < 0.5 * c.horizon) {
                return Err(cfg_err(format!("control.delta must lie in (0, horizon/2), got {}", c.delta)));
            }
            if let Some(o) = &c.origin {
                check_state(&o.into(), &pot, &self.system, "control.origin")?;
            }
            for (i, t) in c.targets.iter().enumerate() {
                if t.xi.is_some() == t.xi_above_min.is_some() {
                    return Err(cfg_err(format!(
                        "control.targets[{i}] needs exactly one of xi and xi_above_min"
                    )));
                }
                let s = State::new(t.q.clone(), t.p.clone(), 0.0);
                check_state(&s, &pot, &self.system, &format!("control.targets[{i}]"))?;
            }
        }
        Ok(pot)
    }

    fn check_lyapunov(&self, l: &LyapunovSection) -> Result<()> {
        let bs = beta_star(&self.system);
        if !(l.beta0 > 0.0 && l.beta0 < bs) {
            return Err(cfg_err(format!(
                "lyapunov.beta0 = {} must satisfy 0 < beta0 < beta* = {bs:.6} (beta* = beta/(8 D_max^2) with beta = {})",
                l.beta0,
                self.system.beta()
            )));
        }
        if !(l.alpha > 0.0) {
            return Err(cfg_err(format!("lyapunov.alpha must be positive, got {}", l.alpha)));
        }
        if let Eps0::Value(e) = l.eps0 {
            if !(e > 0.0 && e < l.beta0) {
                return Err(cfg_err(format!("lyapunov.eps0 = {e} must lie in (0, beta0)")));
            }
        }
        if let Some(x) = l.xi_star {
            let floor = xi_star_floor(&self.system);
            if !(x > floor) {
                return Err(cfg_err(format!(
                    "lyapunov.xi_star = {x} must exceed max_j 3 gamma/m_j + 1 = {floor}"
                )));
            }
        }
        if let Some([lo, hi]) = l.shell {
            if !(lo > 0.0 && hi > lo) {
                return Err(cfg_err(format!("lyapunov.shell = [{lo}, {hi}] must satisfy 0 < lo < hi")));
            }
        }
        Ok(())
    }

    pub fn initial_state(&self, pot: &PotentialHandle) -> State {
        match &self.simulation.initial {
            Some(s) => s.into(),
            None => State::new(pot.base_point(), vec![0.0; self.system.n_coords()], 0.0),
        }
    }

    /// Integrator settings with the run seed.
    pub fn integrator_config(&self) -> Result<IntegratorConfig> {
        let i = self
            .integrator
            .as_ref()
            .ok_or_else(|| cfg_err("missing [integrator] table"))?;
        Ok(IntegratorConfig {
            scheme: i.scheme,
            dt: i.dt,
            n_steps: i.n_steps,
            seed: self.seed,
            boundary_policy: i.boundary_policy,
        })
    }

    /// Lyapunov parameters with explicit or minimal scale seeds.
    pub fn lyapunov_params(&self) -> Result<LyapunovParams> {
        let l = self
            .lyapunov
            .as_ref()
            .ok_or_else(|| cfg_err("missing [lyapunov] table"))?;
        let minimal = ScaleSeeds::minimal(&self.system);
        let seeds = ScaleSeeds {
            p_star: l.p_star.unwrap_or(minimal.p_star),
            u_star: l.u_star.unwrap_or(minimal.u_star),
            xi_star: l.xi_star.unwrap_or(minimal.xi_star),
        };
        let eps0 = match l.eps0 {
            Eps0::Value(e) => e,
            Eps0::Auto(_) => AUTO_EPS0_FRACTION * l.beta0,
        };
        select_params(l.alpha, l.beta0, eps0, &self.system, seeds).map_err(to_config)
    }
}

fn to_config(e: NhbError) -> NhbError {
    match e {
        NhbError::Rejected(m) | NhbError::Contract(m) | NhbError::Domain(m) => NhbError::Config(m),
        other => other,
    }
}

fn check_state(x: &State, pot: &PotentialHandle, params: &SystemParams, what: &str) -> Result<()> {
    let n = params.n_coords();
    if x.q.len() != n || x.p.len() != n {
        return Err(cfg_err(format!(
            "{what} has {} positions and {} momenta, expected {n}",
            x.q.len(),
            x.p.len()
        )));
    }
    if !x.is_finite() || !pot.in_domain(&x.q) || !pot.value(&x.q).is_finite() {
        return Err(cfg_err(format!("{what} lies outside the potential domain")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
schema_version = 1
seed = 3
[potential]
kind = "harmonic"
c = 0.5
[system]
n_particles = 1
dim = 1
masses = [1.0]
gamma = 1.0
kb = 1.0
temperature = 1.0
a = 1.0
[integrator]
dt = 0.01
n_steps = 100
"#;

    #[test]
    fn parses_minimal_config() {
        let cfg = RunConfig::from_toml_str(BASE).unwrap();
        cfg.validate().unwrap();
        let ic = cfg.integrator_config().unwrap();
        assert_eq!(ic.seed, 3);
        assert_eq!(ic.scheme, Scheme::Splitting);
        assert_eq!(cfg.simulation.chains, 1);
        assert_eq!(cfg.output_dir, PathBuf::from("out"));
    }

    #[test]
    fn unknown_keys_are_errors() {
        let text = BASE.replace("seed = 3", "seed = 3\nsede = 4");
        assert!(matches!(RunConfig::from_toml_str(&text), Err(NhbError::Config(_))));
        let text = BASE.replace("n_steps = 100", "n_steps = 100\nstep = 1");
        assert!(RunConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn wrong_schema_version() {
        let text = BASE.replace("schema_version = 1", "schema_version = 2");
        let err = RunConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("schema_version"));
    }

    #[test]
    fn beta0_above_threshold_names_it() {
        let text = format!("{BASE}[lyapunov]\nalpha = 1.0\nbeta0 = 0.5\n");
        let cfg = RunConfig::from_toml_str(&text).unwrap();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("beta* = 0.427"), "{err}");
    }

    #[test]
    fn auto_eps0_and_explicit_eps0() {
        let text = format!("{BASE}[lyapunov]\nalpha = 1.0\nbeta0 = 0.2\n");
        let cfg = RunConfig::from_toml_str(&text).unwrap();
        cfg.validate().unwrap();
        assert!((cfg.lyapunov_params().unwrap().eps0 - 0.06).abs() < 1e-15);
        let text = format!("{BASE}[lyapunov]\nalpha = 1.0\nbeta0 = 0.2\neps0 = 0.05\n");
        let cfg = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg.lyapunov_params().unwrap().eps0, 0.05);
        let text = format!("{BASE}[lyapunov]\nalpha = 1.0\nbeta0 = 0.2\neps0 = \"sometimes\"\n");
        assert!(RunConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn bad_cross_fields() {
        let cfg = RunConfig::from_toml_str(&BASE.replace("dt = 0.01", "dt = -0.01")).unwrap();
        assert!(cfg.validate().unwrap_err().to_string().contains("dt"));
        let text = format!("{BASE}[simulation]\ninitial = {{ q = [1.0, 2.0], p = [0.0] }}\n");
        let cfg = RunConfig::from_toml_str(&text).unwrap();
        assert!(cfg.validate().is_err());
        let text = format!("{BASE}[lyapunov]\nalpha = 1.0\nbeta0 = 0.2\nxi_star = 2.0\n");
        let cfg = RunConfig::from_toml_str(&text).unwrap();
        assert!(cfg.validate().unwrap_err().to_string().contains("xi_star"));
        let text = format!(
            "{BASE}[control]\nhorizon = 1.0\ndelta = 0.01\ntargets = [{{ q = [0.5], p = [0.0], xi = 1.0, xi_above_min = 0.0 }}]\n"
        );
        let cfg = RunConfig::from_toml_str(&text).unwrap();
        assert!(cfg.validate().is_err());
    }
}
