//! Pooled diagnostics over a set of trajectories.

use serde::Serialize;

use super::gibbs::{GibbsModel, Moments};
use super::stationarity::{stationarity_residual, TestFunction};
use super::stats::{burn_in, ergodic_average, ks_distance, mean_var, temperature_by_particle, temperature_of_states};
use super::tv::TvDecay;
use crate::dynamics::Trajectory;
use crate::error::{contract, Result};
use crate::model::{momentum_norm_sq, State};

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseOptions {
    #[serde(default = "default_burn_in")]
    pub burn_in_fraction: f64,
    #[serde(default = "yes")]
    pub stationarity: bool,
}

fn default_burn_in() -> f64 {
    0.1
}

fn yes() -> bool {
    true
}

impl Default for DiagnoseOptions {
    fn default() -> Self {
        Self {
            burn_in_fraction: default_burn_in(),
            stationarity: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct KsTable {
    /// Only for one-coordinate systems, where the q-marginal is tabulated.
    pub q: Option<f64>,
    pub p: Vec<f64>,
    pub xi: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErgodicRow {
    pub name: String,
    pub mean: f64,
    pub se: f64,
    pub expected: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditSummary {
    pub max_identity_residual: f64,
    pub bound_violations: u64,
    pub audited: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    pub trajectories: usize,
    pub states_used: usize,
    pub temperature: f64,
    pub temperature_by_particle: Vec<f64>,
    pub xi: Moments,
    pub xi_expected: Moments,
    pub ks: KsTable,
    pub ergodic: Vec<ErgodicRow>,
    pub tv_decay: Option<TvDecay>,
    pub stationarity_residual: Option<f64>,
    pub audit: AuditSummary,
}

type Observable<'a> = Box<dyn Fn(&State) -> f64 + 'a>;

pub fn diagnose(trajs: &[Trajectory], model: &GibbsModel, opts: &DiagnoseOptions) -> Result<DiagnosticsReport> {
    let params = &model.params;
    let kept: Vec<Trajectory> = trajs
        .iter()
        .filter(|t| !t.is_empty())
        .map(|t| burn_in(t, opts.burn_in_fraction))
        .collect();
    let states: Vec<&State> = kept.iter().flat_map(|t| t.states.iter()).collect();
    if states.is_empty() {
        return Err(contract("no states to diagnose"));
    }
    for s in &states {
        s.check_dims(params)?;
    }
    let owned: Vec<State> = states.iter().map(|s| (*s).clone()).collect();
    let temperature = temperature_of_states(&owned, params)?;
    let by_particle = temperature_by_particle(&owned, params)?;
    let xis: Vec<f64> = states.iter().map(|s| s.xi).collect();
    let (xm, xv) = mean_var(&xis);

    let q = if params.n_coords() == 1 {
        let qs: Vec<f64> = states.iter().map(|s| s.q[0]).collect();
        let cdf = |x: f64| model.q_cdf(x).unwrap_or(f64::NAN);
        Some(ks_distance(&qs, cdf)?)
    } else {
        None
    };
    let p = (0..params.n_coords())
        .map(|j| {
            let ps: Vec<f64> = states.iter().map(|s| s.p[j]).collect();
            ks_distance(&ps, |x| model.p_cdf(j, x))
        })
        .collect::<Result<Vec<f64>>>()?;
    let xi = ks_distance(&xis, |x| model.xi_cdf(x))?;

    let kbt = params.kbt();
    let dof = params.dof();
    let rows: [(&str, Observable, Option<f64>); 3] = [
        ("kinetic", Box::new(|s: &State| momentum_norm_sq(&s.p, params)), Some(dof * kbt)),
        ("xi", Box::new(|s: &State| s.xi), Some(0.0)),
        ("xi_sq", Box::new(|s: &State| s.xi * s.xi), Some(kbt / params.a)),
    ];
    let mut ergodic = Vec::new();
    for (name, f, expected) in rows.iter() {
        let mut means = Vec::new();
        let mut ses = Vec::new();
        for t in kept.iter().filter(|t| t.len() >= 2) {
            let e = ergodic_average(f, t)?;
            means.push(e.mean);
            ses.push(e.se);
        }
        if means.is_empty() {
            continue;
        }
        let n = means.len() as f64;
        ergodic.push(ErgodicRow {
            name: name.to_string(),
            mean: means.iter().sum::<f64>() / n,
            se: ses.iter().map(|s| s * s).sum::<f64>().sqrt() / n,
            expected: *expected,
        });
    }

    let stationarity = if opts.stationarity && params.n_coords() == 1 {
        Some(stationarity_residual(model, &TestFunction::battery())?)
    } else {
        None
    };
    let audited: Vec<_> = trajs.iter().filter_map(|t| t.audit.as_ref()).collect();
    Ok(DiagnosticsReport {
        trajectories: kept.len(),
        states_used: states.len(),
        temperature,
        temperature_by_particle: by_particle,
        xi: Moments { mean: xm, var: xv },
        xi_expected: model.xi_moments(),
        ks: KsTable { q, p, xi },
        ergodic,
        tv_decay: None,
        stationarity_residual: stationarity,
        audit: AuditSummary {
            max_identity_residual: audited.iter().map(|a| a.identity_residual).fold(0.0, f64::max),
            bound_violations: audited.iter().map(|a| a.bound_violations).sum(),
            audited: audited.len(),
        },
    })
}
