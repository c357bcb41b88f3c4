//! Normal potentials: value, gradient, Hessian and domain membership.

use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::SystemParams;
use crate::error::{NhbError, Result};
use crate::quadrature;

/// Default growth exponent for polynomial potentials.
pub const ZETA_POLYNOMIAL: f64 = 1.5;
/// Default growth exponent for Lennard-Jones potentials.
pub const ZETA_LENNARD_JONES: f64 = 1.9;

/// A potential U on (R^k)^N with values in [0, +inf].
///
/// `value` returns `f64::INFINITY` outside the domain O. `grad` and `hess`
/// are only meaningful inside O; the Hessian is written row-major.
pub trait Potential: Send + Sync + Debug {
    fn n_coords(&self) -> usize;
    fn value(&self, q: &[f64]) -> f64;
    fn grad(&self, q: &[f64], out: &mut [f64]);
    fn hess(&self, q: &[f64], out: &mut [f64]);
    fn in_domain(&self, q: &[f64]) -> bool;
    /// Exponent in (1, 2) bounding Hessian growth by |grad U|^zeta.
    fn zeta(&self) -> f64;
    /// True when O is convex, so the O-distance is the straight-line distance.
    fn is_convex_domain(&self) -> bool;
    fn name(&self) -> &str;

    /// Whether the straight segment from `a` (in O) to `b` stays in O.
    /// Convex domains only need the endpoint.
    fn segment_in_domain(&self, _a: &[f64], b: &[f64]) -> bool {
        self.in_domain(b)
    }

    /// An in-domain configuration with small U, used as the origin of probe rays.
    fn base_point(&self) -> Vec<f64> {
        vec![0.0; self.n_coords()]
    }

    fn grad_vec(&self, q: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; q.len()];
        self.grad(q, &mut g);
        g
    }

    fn hess_vec(&self, q: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; q.len() * q.len()];
        self.hess(q, &mut h);
        h
    }
}

pub type PotentialHandle = Arc<dyn Potential>;

/// Serializable description of a built-in potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    /// U(q) = c |q|^2.
    Harmonic {
        c: f64,
        #[serde(default)]
        zeta: Option<f64>,
    },
    /// U(q) = sum_j c1 q_j^4 - c2 q_j^2 + c3, with c3 defaulting to the smallest
    /// shift that keeps U nonnegative.
    DoubleWell {
        c1: f64,
        c2: f64,
        #[serde(default)]
        c3: Option<f64>,
        #[serde(default)]
        zeta: Option<f64>,
    },
    /// U(q) = sum_j P(q_j) - min P with P given by ascending coefficients.
    Polynomial {
        coeffs: Vec<f64>,
        #[serde(default)]
        zeta: Option<f64>,
    },
    /// Pairwise epsilon [(r_min/r)^12 - 2 (r_min/r)^6 + 1] plus confinement c sum_i |q_i|^2.
    LennardJones {
        epsilon: f64,
        r_min: f64,
        confinement: f64,
        #[serde(default)]
        zeta: Option<f64>,
    },
}

fn check_zeta(zeta: Option<f64>, default: f64) -> Result<f64> {
    let z = zeta.unwrap_or(default);
    if !(z > 1.0 && z < 2.0) {
        return Err(NhbError::Rejected(format!(
            "growth exponent zeta = {z} must lie in (1, 2)"
        )));
    }
    Ok(z)
}

/// Build a potential handle from its description, validating positivity and
/// (for one or two coordinates) integrability of exp(-beta U).
pub fn make_potential(spec: &PotentialSpec, params: &SystemParams) -> Result<PotentialHandle> {
    let n = params.n_coords();
    let pot: PotentialHandle = match *spec {
        PotentialSpec::Harmonic { c, zeta } => {
            if !(c > 0.0 && c.is_finite()) {
                return Err(NhbError::Rejected(format!(
                    "harmonic coefficient must be positive, got {c}"
                )));
            }
            Arc::new(Harmonic {
                c,
                n,
                zeta: check_zeta(zeta, ZETA_POLYNOMIAL)?,
            })
        }
        PotentialSpec::DoubleWell { c1, c2, c3, zeta } => {
            if !(c1 > 0.0 && c1.is_finite()) || !c2.is_finite() {
                return Err(NhbError::Rejected(format!(
                    "double well needs a positive quartic coefficient, got c1 = {c1}"
                )));
            }
            let floor = if c2 > 0.0 { c2 * c2 / (4.0 * c1) } else { 0.0 };
            let c3 = c3.unwrap_or(floor);
            if c3 < floor * (1.0 - 1e-12) {
                return Err(NhbError::Rejected(format!(
                    "c3 = {c3} leaves U negative; need c3 >= {floor}"
                )));
            }
            Arc::new(DoubleWell {
                c1,
                c2,
                c3,
                n,
                zeta: check_zeta(zeta, ZETA_POLYNOMIAL)?,
            })
        }
        PotentialSpec::Polynomial { ref coeffs, zeta } => {
            let zeta = check_zeta(zeta, ZETA_POLYNOMIAL)?;
            Arc::new(Polynomial::new(coeffs.clone(), n, zeta)?)
        }
        PotentialSpec::LennardJones {
            epsilon,
            r_min,
            confinement,
            zeta,
        } => {
            if !(epsilon > 0.0 && r_min > 0.0 && confinement > 0.0) {
                return Err(NhbError::Rejected(
                    "Lennard-Jones epsilon, r_min and confinement must be positive".into(),
                ));
            }
            Arc::new(LennardJones {
                epsilon,
                r_min,
                confinement,
                n_particles: params.n_particles,
                dim: params.dim,
                zeta: check_zeta(zeta, ZETA_LENNARD_JONES)?,
            })
        }
    };
    if n <= 2 {
        check_integrable(pot.as_ref(), params.beta())?;
    }
    Ok(pot)
}

/// Integrates exp(-beta U) over growing boxes and rejects when the integral
/// keeps growing.
pub(crate) fn check_integrable(pot: &dyn Potential, beta: f64) -> Result<()> {
    let n = pot.n_coords();
    let f = |q: &[f64]| {
        let u = pot.value(q);
        if u.is_finite() {
            (-beta * u).exp()
        } else {
            0.0
        }
    };
    // Fixed panel width so growing the box only adds tail mass.
    let mut prev = f64::NAN;
    let mut half_width = 4.0;
    for _ in 0..4 {
        let panels = (8.0 * half_width) as usize;
        let v = quadrature::box_integral(n, -half_width, half_width, panels, &f);
        if !v.is_finite() {
            break;
        }
        if prev.is_finite() && (v - prev).abs() <= 1e-4 * v.abs() {
            if v > 0.0 {
                return Ok(());
            }
            break;
        }
        prev = v;
        half_width *= 2.0;
    }
    Err(NhbError::Rejected(format!(
        "exp(-beta U) does not appear integrable for potential {}",
        pot.name()
    )))
}

#[derive(Debug, Clone)]
pub struct Harmonic {
    pub c: f64,
    pub n: usize,
    pub zeta: f64,
}

impl Potential for Harmonic {
    fn n_coords(&self) -> usize {
        self.n
    }
    fn value(&self, q: &[f64]) -> f64 {
        self.c * q.iter().map(|x| x * x).sum::<f64>()
    }
    fn grad(&self, q: &[f64], out: &mut [f64]) {
        for (o, x) in out.iter_mut().zip(q) {
            *o = 2.0 * self.c * x;
        }
    }
    fn hess(&self, q: &[f64], out: &mut [f64]) {
        let n = q.len();
        out.fill(0.0);
        for i in 0..n {
            out[i * n + i] = 2.0 * self.c;
        }
    }
    fn in_domain(&self, q: &[f64]) -> bool {
        q.iter().all(|x| x.is_finite())
    }
    fn zeta(&self) -> f64 {
        self.zeta
    }
    fn is_convex_domain(&self) -> bool {
        true
    }
    fn name(&self) -> &str {
        "harmonic"
    }
}

#[derive(Debug, Clone)]
pub struct DoubleWell {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub n: usize,
    pub zeta: f64,
}

impl Potential for DoubleWell {
    fn n_coords(&self) -> usize {
        self.n
    }
    fn value(&self, q: &[f64]) -> f64 {
        q.iter()
            .map(|x| {
                let x2 = x * x;
                self.c1 * x2 * x2 - self.c2 * x2 + self.c3
            })
            .sum()
    }
    fn grad(&self, q: &[f64], out: &mut [f64]) {
        for (o, x) in out.iter_mut().zip(q) {
            *o = 4.0 * self.c1 * x * x * x - 2.0 * self.c2 * x;
        }
    }
    fn hess(&self, q: &[f64], out: &mut [f64]) {
        let n = q.len();
        out.fill(0.0);
        for (i, x) in q.iter().enumerate() {
            out[i * n + i] = 12.0 * self.c1 * x * x - 2.0 * self.c2;
        }
    }
    fn in_domain(&self, q: &[f64]) -> bool {
        q.iter().all(|x| x.is_finite())
    }
    fn zeta(&self) -> f64 {
        self.zeta
    }
    fn is_convex_domain(&self) -> bool {
        true
    }
    fn name(&self) -> &str {
        "double_well"
    }
}

/// Separable even-degree polynomial shifted to have minimum zero.
#[derive(Debug, Clone)]
pub struct Polynomial {
    coeffs: Vec<f64>,
    shift: f64,
    n: usize,
    zeta: f64,
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<f64>, n: usize, zeta: f64) -> Result<Self> {
        while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        let degree = coeffs.len().saturating_sub(1);
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(NhbError::Rejected("non-finite polynomial coefficient".into()));
        }
        if degree < 2 || degree % 2 == 1 {
            return Err(NhbError::Rejected(format!(
                "polynomial degree {degree} is not a positive even degree"
            )));
        }
        if coeffs[degree] <= 0.0 {
            return Err(NhbError::Rejected(format!(
                "leading coefficient {} must be positive",
                coeffs[degree]
            )));
        }
        let shift = -poly_min(&coeffs);
        Ok(Self {
            coeffs,
            shift,
            n,
            zeta,
        })
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    fn eval(&self, x: f64) -> (f64, f64, f64) {
        poly_eval(&self.coeffs, x)
    }
}

/// Value, first and second derivative by Horner's scheme.
fn poly_eval(c: &[f64], x: f64) -> (f64, f64, f64) {
    let mut v = 0.0;
    let mut d1 = 0.0;
    let mut d2 = 0.0;
    for &a in c.iter().rev() {
        d2 = d2 * x + 2.0 * d1;
        d1 = d1 * x + v;
        v = v * x + a;
    }
    (v, d1, d2)
}

/// Global minimum of an even-degree polynomial with positive leading coefficient.
fn poly_min(c: &[f64]) -> f64 {
    let lead = *c.last().unwrap();
    // Cauchy bound on the critical points.
    let deg = c.len() - 1;
    let bound = 1.0
        + (1..deg)
            .map(|k| (k as f64 * c[k]).abs() / (deg as f64 * lead))
            .fold(0.0, f64::max);
    let samples = 20_000;
    let mut best = f64::INFINITY;
    let mut best_x = 0.0;
    for i in 0..=samples {
        let x = -bound + 2.0 * bound * i as f64 / samples as f64;
        let v = poly_eval(c, x).0;
        if v < best {
            best = v;
            best_x = x;
        }
    }
    // Newton polish on P'.
    let mut x = best_x;
    for _ in 0..50 {
        let (_, d1, d2) = poly_eval(c, x);
        if d2 <= 0.0 {
            break;
        }
        let step = d1 / d2;
        x -= step;
        if step.abs() < 1e-15 * (1.0 + x.abs()) {
            break;
        }
    }
    best.min(poly_eval(c, x).0)
}

impl Potential for Polynomial {
    fn n_coords(&self) -> usize {
        self.n
    }
    fn value(&self, q: &[f64]) -> f64 {
        q.iter().map(|&x| (self.eval(x).0 + self.shift).max(0.0)).sum()
    }
    fn grad(&self, q: &[f64], out: &mut [f64]) {
        for (o, &x) in out.iter_mut().zip(q) {
            *o = self.eval(x).1;
        }
    }
    fn hess(&self, q: &[f64], out: &mut [f64]) {
        let n = q.len();
        out.fill(0.0);
        for (i, &x) in q.iter().enumerate() {
            out[i * n + i] = self.eval(x).2;
        }
    }
    fn in_domain(&self, q: &[f64]) -> bool {
        q.iter().all(|x| x.is_finite())
    }
    fn zeta(&self) -> f64 {
        self.zeta
    }
    fn is_convex_domain(&self) -> bool {
        true
    }
    fn name(&self) -> &str {
        "polynomial"
    }
}

/// Lennard-Jones pair interaction with a harmonic confinement on every particle.
#[derive(Debug, Clone)]
pub struct LennardJones {
    pub epsilon: f64,
    pub r_min: f64,
    pub confinement: f64,
    pub n_particles: usize,
    pub dim: usize,
    pub zeta: f64,
}

impl LennardJones {
    fn pair_dist2(&self, q: &[f64], i: usize, j: usize) -> f64 {
        let k = self.dim;
        (0..k)
            .map(|l| {
                let d = q[i * k + l] - q[j * k + l];
                d * d
            })
            .sum()
    }

    /// phi(r), phi'(r), phi''(r) for the pair term.
    fn pair(&self, r: f64) -> (f64, f64, f64) {
        let s6 = (self.r_min / r).powi(6);
        let s12 = s6 * s6;
        let e = self.epsilon;
        (
            e * (s12 - 2.0 * s6 + 1.0),
            e * (-12.0 * s12 + 12.0 * s6) / r,
            e * (156.0 * s12 - 84.0 * s6) / (r * r),
        )
    }
}

impl Potential for LennardJones {
    fn n_coords(&self) -> usize {
        self.n_particles * self.dim
    }

    fn value(&self, q: &[f64]) -> f64 {
        if !self.in_domain(q) {
            return f64::INFINITY;
        }
        let mut u = self.confinement * q.iter().map(|x| x * x).sum::<f64>();
        for i in 0..self.n_particles {
            for j in i + 1..self.n_particles {
                u += self.pair(self.pair_dist2(q, i, j).sqrt()).0;
            }
        }
        u
    }

    fn grad(&self, q: &[f64], out: &mut [f64]) {
        let k = self.dim;
        for (o, x) in out.iter_mut().zip(q) {
            *o = 2.0 * self.confinement * x;
        }
        for i in 0..self.n_particles {
            for j in i + 1..self.n_particles {
                let r = self.pair_dist2(q, i, j).sqrt();
                let (_, d1, _) = self.pair(r);
                for l in 0..k {
                    let g = d1 * (q[i * k + l] - q[j * k + l]) / r;
                    out[i * k + l] += g;
                    out[j * k + l] -= g;
                }
            }
        }
    }

    fn hess(&self, q: &[f64], out: &mut [f64]) {
        let k = self.dim;
        let n = q.len();
        out.fill(0.0);
        for i in 0..n {
            out[i * n + i] = 2.0 * self.confinement;
        }
        for i in 0..self.n_particles {
            for j in i + 1..self.n_particles {
                let r = self.pair_dist2(q, i, j).sqrt();
                let (_, d1, d2) = self.pair(r);
                for a in 0..k {
                    let ua = (q[i * k + a] - q[j * k + a]) / r;
                    for b in 0..k {
                        let ub = (q[i * k + b] - q[j * k + b]) / r;
                        let delta = if a == b { 1.0 } else { 0.0 };
                        let blk = d2 * ua * ub + d1 / r * (delta - ua * ub);
                        let (ia, ib, ja, jb) = (i * k + a, i * k + b, j * k + a, j * k + b);
                        out[ia * n + ib] += blk;
                        out[ja * n + jb] += blk;
                        out[ia * n + jb] -= blk;
                        out[ja * n + ib] -= blk;
                    }
                }
            }
        }
    }

    fn in_domain(&self, q: &[f64]) -> bool {
        if q.iter().any(|x| !x.is_finite()) {
            return false;
        }
        for i in 0..self.n_particles {
            for j in i + 1..self.n_particles {
                if self.pair_dist2(q, i, j) <= 0.0 {
                    return false;
                }
            }
        }
        true
    }

    fn zeta(&self) -> f64 {
        self.zeta
    }

    fn is_convex_domain(&self) -> bool {
        self.n_particles < 2
    }

    fn name(&self) -> &str {
        "lennard_jones"
    }

    // Pair separations move linearly along the segment; the segment leaves O
    // iff some separation passes through zero.
    fn segment_in_domain(&self, a: &[f64], b: &[f64]) -> bool {
        if !self.in_domain(b) {
            return false;
        }
        let k = self.dim;
        for i in 0..self.n_particles {
            for j in i + 1..self.n_particles {
                let mut d0e = 0.0;
                let mut ee = 0.0;
                for l in 0..k {
                    let d0 = a[i * k + l] - a[j * k + l];
                    let e = (b[i * k + l] - b[j * k + l]) - d0;
                    d0e += d0 * e;
                    ee += e * e;
                }
                if ee == 0.0 {
                    continue;
                }
                let s = (-d0e / ee).clamp(0.0, 1.0);
                let mut closest = 0.0;
                let mut ends: f64 = 0.0;
                for l in 0..k {
                    let d0 = a[i * k + l] - a[j * k + l];
                    let d1 = b[i * k + l] - b[j * k + l];
                    let d = d0 + s * (d1 - d0);
                    closest += d * d;
                    ends = ends.max(d0 * d0).max(d1 * d1);
                }
                // relative cut so rounding in the closest point cannot hide a
                // collinear pass through coincidence
                if closest <= 1e-20 * ends {
                    return false;
                }
            }
        }
        true
    }

    fn base_point(&self) -> Vec<f64> {
        let mut q = vec![0.0; self.n_coords()];
        let half = 0.5 * (self.n_particles as f64 - 1.0);
        for i in 0..self.n_particles {
            q[i * self.dim] = self.r_min * (i as f64 - half);
        }
        q
    }
}
