//! The perturbations psi0, psi1, psi2 and V, with analytic derivative jets.

use super::cutoff::Jet1;
use super::params::LyapunovParams;
use crate::error::{NhbError, Result};
use crate::model::{hamiltonian, Potential, State, SystemParams};
use crate::specfun::{dawson, f_unit};

/// The derivatives of a scalar field that the generator needs.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldJet {
    pub value: f64,
    pub grad_q: Vec<f64>,
    pub grad_p: Vec<f64>,
    pub d_xi: f64,
    pub lap_p: f64,
}

impl FieldJet {
    pub fn zero(n: usize) -> Self {
        Self {
            value: 0.0,
            grad_q: vec![0.0; n],
            grad_p: vec![0.0; n],
            d_xi: 0.0,
            lap_p: 0.0,
        }
    }

    /// self += c * other
    pub fn add_scaled(&mut self, c: f64, other: &FieldJet) {
        self.value += c * other.value;
        for (a, b) in self.grad_q.iter_mut().zip(&other.grad_q) {
            *a += c * b;
        }
        for (a, b) in self.grad_p.iter_mut().zip(&other.grad_p) {
            *a += c * b;
        }
        self.d_xi += c * other.d_xi;
        self.lap_p += c * other.lap_p;
    }
}

/// Quantities shared by psi1 and psi2 at one state.
struct Common {
    grad: Vec<f64>,
    hess: Vec<f64>,
    g: f64,
    r2: f64,
    r: f64,
    y2: f64,
    y3: f64,
}

impl Common {
    fn new(x: &State, pot: &dyn Potential, lp: &LyapunovParams) -> Self {
        let grad = pot.grad_vec(&x.q);
        let hess = pot.hess_vec(&x.q);
        let g = grad.iter().map(|v| v * v).sum::<f64>();
        let r2 = x.xi * x.xi + 1.0;
        let r = r2.sqrt();
        let p2 = x.p.iter().map(|v| v * v).sum::<f64>();
        Self {
            y2: p2 / (lp.p_star * r),
            y3: g / (lp.u_star * r2),
            grad,
            hess,
            g,
            r2,
            r,
        }
    }

    /// H * v for the row-major Hessian.
    fn hess_times(&self, v: &[f64]) -> Vec<f64> {
        let n = v.len();
        (0..n)
            .map(|k| (0..n).map(|j| self.hess[k * n + j] * v[j]).sum())
            .collect()
    }
}

/// Product g = a(xi) b(y2) c(y3) of three cutoffs together with its derivatives.
struct CutoffProduct {
    v: f64,
    grad_p: Vec<f64>,
    lap_terms: Vec<f64>,
    d_xi: f64,
    grad_q: Vec<f64>,
}

fn cutoff_product(x: &State, cm: &Common, lp: &LyapunovParams, a: Jet1, b: Jet1, c: Jet1) -> CutoffProduct {
    let n = x.p.len();
    let pr = lp.p_star * cm.r;
    let grad_p: Vec<f64> = x.p.iter().map(|pj| a.v * b.d1 * c.v * 2.0 * pj / pr).collect();
    let lap_terms: Vec<f64> = x
        .p
        .iter()
        .map(|pj| {
            let dy = 2.0 * pj / pr;
            a.v * c.v * (b.d2 * dy * dy + b.d1 * 2.0 / pr)
        })
        .collect();
    let dy2 = -cm.y2 * x.xi / cm.r2;
    let dy3 = -2.0 * cm.y3 * x.xi / cm.r2;
    let d_xi = a.d1 * b.v * c.v + a.v * b.d1 * c.v * dy2 + a.v * b.v * c.d1 * dy3;
    let grad_q = if c.d1 != 0.0 {
        let hg = cm.hess_times(&cm.grad);
        let scale = a.v * b.v * c.d1 * 2.0 / (lp.u_star * cm.r2);
        hg.iter().map(|v| scale * v).collect()
    } else {
        vec![0.0; n]
    };
    CutoffProduct {
        v: a.v * b.v * c.v,
        grad_p,
        lap_terms,
        d_xi,
        grad_q,
    }
}

/// psi0 = delta f0(xi) a xi^2 / 2.
pub fn psi0(x: &State, lp: &LyapunovParams, params: &SystemParams) -> f64 {
    let f0 = lp.cutoffs().f0.value(x.xi);
    lp.delta * f0 * params.a * x.xi * x.xi / 2.0
}

pub fn psi0_jet(x: &State, lp: &LyapunovParams, params: &SystemParams) -> FieldJet {
    let n = x.q.len();
    let f0 = lp.cutoffs().f0.eval(x.xi);
    let a = params.a;
    let mut j = FieldJet::zero(n);
    j.value = lp.delta * f0.v * a * x.xi * x.xi / 2.0;
    j.d_xi = lp.delta * a * (f0.d1 * x.xi * x.xi / 2.0 + f0.v * x.xi);
    j
}

/// psi1 = g1 alpha1 sqrt(xi^2 + 1) (p . grad U) / |grad U|^2 where |grad U|^2 >= U*/2.
pub fn psi1(x: &State, pot: &dyn Potential, lp: &LyapunovParams) -> f64 {
    let grad = pot.grad_vec(&x.q);
    let g = grad.iter().map(|v| v * v).sum::<f64>();
    if g < lp.u_star / 2.0 {
        return 0.0;
    }
    let cs = lp.cutoffs();
    let r2 = x.xi * x.xi + 1.0;
    let r = r2.sqrt();
    let p2 = x.p.iter().map(|v| v * v).sum::<f64>();
    let g1 = cs.f1.value(x.xi) * cs.f2.value(p2 / (lp.p_star * r)) * cs.f3.value(g / (lp.u_star * r2));
    if g1 == 0.0 {
        return 0.0;
    }
    let c: f64 = x.p.iter().zip(&grad).map(|(a, b)| a * b).sum();
    g1 * lp.alpha1 * r * c / g
}

pub fn psi1_jet(x: &State, pot: &dyn Potential, lp: &LyapunovParams) -> FieldJet {
    let n = x.q.len();
    let cm = Common::new(x, pot, lp);
    psi1_jet_common(x, &cm, lp, n)
}

fn psi1_jet_common(x: &State, cm: &Common, lp: &LyapunovParams, n: usize) -> FieldJet {
    if cm.g < lp.u_star / 2.0 {
        return FieldJet::zero(n);
    }
    let cs = lp.cutoffs();
    let a = cs.f1.eval(x.xi);
    let b = cs.f2.eval(cm.y2);
    let c = cs.f3.eval(cm.y3);
    if a.v == 0.0 || b.v == 0.0 && b.d1 == 0.0 || c.v == 0.0 && c.d1 == 0.0 {
        return FieldJet::zero(n);
    }
    let gp = cutoff_product(x, cm, lp, a, b, c);
    let dot: f64 = x.p.iter().zip(&cm.grad).map(|(u, v)| u * v).sum();
    let al = lp.alpha1 * cm.r;
    let phi = al * dot / cm.g;
    let mut j = FieldJet::zero(n);
    j.value = gp.v * phi;
    for k in 0..n {
        let dphi_dp = al * cm.grad[k] / cm.g;
        j.grad_p[k] = gp.v * dphi_dp + phi * gp.grad_p[k];
        j.lap_p += 2.0 * gp.grad_p[k] * dphi_dp + phi * gp.lap_terms[k];
    }
    j.d_xi = gp.d_xi * phi + gp.v * phi * x.xi / cm.r2;
    let hp = cm.hess_times(&x.p);
    let hg = cm.hess_times(&cm.grad);
    for k in 0..n {
        let dphi_dq = al * (hp[k] / cm.g - 2.0 * dot * hg[k] / (cm.g * cm.g));
        j.grad_q[k] = gp.grad_q[k] * phi + gp.v * dphi_dq;
    }
    j
}

/// F(z) = -2 alpha2 F_unit(z) and its first two derivatives.
fn big_f(z: f64, alpha2: f64) -> Jet1 {
    let d = dawson(z);
    Jet1 {
        v: -2.0 * alpha2 * f_unit(z),
        d1: -2.0 * alpha2 * d,
        d2: -2.0 * alpha2 * (1.0 - 2.0 * z * d),
    }
}

/// psi2 = g2 sum_j F(z_j), z_j = sqrt(w_j/(2 gamma/beta)) (p_j - d_j U / w_j), w_j = |xi + gamma/m_j|,
/// with coordinate j contributing only when xi <= -3 gamma/m_j.
pub fn psi2(x: &State, pot: &dyn Potential, lp: &LyapunovParams, params: &SystemParams) -> f64 {
    let cs = lp.cutoffs();
    let h1 = cs.h1.value(x.xi);
    if h1 == 0.0 {
        return 0.0;
    }
    let grad = pot.grad_vec(&x.q);
    let g = grad.iter().map(|v| v * v).sum::<f64>();
    let r2 = x.xi * x.xi + 1.0;
    let p2 = x.p.iter().map(|v| v * v).sum::<f64>();
    let g2 = h1 * cs.h2().value(p2 / (lp.p_star * r2.sqrt())) * cs.h3.value(g / (lp.u_star * r2));
    if g2 == 0.0 {
        return 0.0;
    }
    let sigma2 = 2.0 * params.gamma / params.beta();
    let mut sum = 0.0;
    for j in 0..x.p.len() {
        let c = params.gamma / params.coord_mass(j);
        if x.xi > -3.0 * c {
            continue;
        }
        let w = -(x.xi + c);
        let lam = (w / sigma2).sqrt();
        sum += -2.0 * lp.alpha2 * f_unit(lam * (x.p[j] - grad[j] / w));
    }
    g2 * sum
}

pub fn psi2_jet(x: &State, pot: &dyn Potential, lp: &LyapunovParams, params: &SystemParams) -> FieldJet {
    let n = x.q.len();
    let cm = Common::new(x, pot, lp);
    psi2_jet_common(x, &cm, lp, params, n)
}

fn psi2_jet_common(x: &State, cm: &Common, lp: &LyapunovParams, params: &SystemParams, n: usize) -> FieldJet {
    let cs = lp.cutoffs();
    let a = cs.h1.eval(x.xi);
    if a.v == 0.0 && a.d1 == 0.0 {
        return FieldJet::zero(n);
    }
    let b = cs.h2().eval(cm.y2);
    let c = cs.h3.eval(cm.y3);
    if b.v == 0.0 && b.d1 == 0.0 || c.v == 0.0 && c.d1 == 0.0 {
        return FieldJet::zero(n);
    }
    let gp = cutoff_product(x, cm, lp, a, b, c);
    let sigma2 = 2.0 * params.gamma / params.beta();

    let mut sf = 0.0;
    let mut fd1 = vec![0.0; n]; // F'(z_j) lambda_j
    let mut fd2 = vec![0.0; n]; // F''(z_j) lambda_j^2
    let mut dz_xi = 0.0; // sum_j F'(z_j) dz_j/dxi
    let mut coef_q = vec![0.0; n]; // F'(z_j) lambda_j / w_j
    for j in 0..n {
        let cj = params.gamma / params.coord_mass(j);
        if x.xi > -3.0 * cj {
            continue;
        }
        let w = -(x.xi + cj);
        let lam = (w / sigma2).sqrt();
        let z = lam * (x.p[j] - cm.grad[j] / w);
        let f = big_f(z, lp.alpha2);
        sf += f.v;
        fd1[j] = f.d1 * lam;
        fd2[j] = f.d2 * lam * lam;
        dz_xi += f.d1 * (-lam * x.p[j] / (2.0 * w) - lam * cm.grad[j] / (2.0 * w * w));
        coef_q[j] = f.d1 * lam / w;
    }

    let mut jet = FieldJet::zero(n);
    jet.value = gp.v * sf;
    for k in 0..n {
        jet.grad_p[k] = gp.grad_p[k] * sf + gp.v * fd1[k];
        jet.lap_p += sf * gp.lap_terms[k] + 2.0 * gp.grad_p[k] * fd1[k] + gp.v * fd2[k];
    }
    jet.d_xi = gp.d_xi * sf + gp.v * dz_xi;
    // d z_j / d q_k = -lambda_j H_jk / w_j
    let hc = cm.hess_times(&coef_q);
    for k in 0..n {
        jet.grad_q[k] = gp.grad_q[k] * sf - gp.v * hc[k];
    }
    jet
}

/// Jet of the Hamiltonian itself.
pub fn hamiltonian_jet(x: &State, pot: &dyn Potential, params: &SystemParams) -> Result<FieldJet> {
    let value = hamiltonian(x, pot, params)?;
    let n = x.q.len();
    Ok(FieldJet {
        value,
        grad_q: pot.grad_vec(&x.q),
        grad_p: (0..n).map(|j| x.p[j] / params.coord_mass(j)).collect(),
        d_xi: params.a * x.xi,
        lap_p: (0..n).map(|j| 1.0 / params.coord_mass(j)).sum(),
    })
}

/// psi0 + psi1 + psi2 by direct evaluation.
pub fn psi_total(x: &State, pot: &dyn Potential, lp: &LyapunovParams, params: &SystemParams) -> f64 {
    psi0(x, lp, params) + psi1(x, pot, lp) + psi2(x, pot, lp, params)
}

/// V = beta0 H + psi0 + psi1 + psi2 by direct evaluation (no derivatives).
pub fn lyapunov_v(x: &State, pot: &dyn Potential, lp: &LyapunovParams, params: &SystemParams) -> Result<f64> {
    let h = hamiltonian(x, pot, params)?;
    Ok(lp.beta0 * h + psi_total(x, pot, lp, params))
}

/// Analytic jet of V.
pub fn lyapunov_v_jet(x: &State, pot: &dyn Potential, lp: &LyapunovParams, params: &SystemParams) -> Result<FieldJet> {
    let n = x.q.len();
    let mut v = hamiltonian_jet(x, pot, params)?;
    let b0 = lp.beta0;
    v.value *= b0;
    v.grad_q.iter_mut().for_each(|g| *g *= b0);
    v.grad_p.iter_mut().for_each(|g| *g *= b0);
    v.d_xi *= b0;
    v.lap_p *= b0;
    v.add_scaled(1.0, &psi0_jet(x, lp, params));
    let cm = Common::new(x, pot, lp);
    v.add_scaled(1.0, &psi1_jet_common(x, &cm, lp, n));
    v.add_scaled(1.0, &psi2_jet_common(x, &cm, lp, params, n));
    Ok(v)
}

/// V and W = exp(V); when exp overflows, `w` is +inf and `overflow` is set,
/// and callers should work with `v` (the logarithm of W).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct VW {
    pub v: f64,
    pub w: f64,
    pub overflow: bool,
}

pub fn v_and_w(x: &State, pot: &dyn Potential, lp: &LyapunovParams, params: &SystemParams) -> Result<VW> {
    let v = lyapunov_v(x, pot, lp, params)?;
    if !v.is_finite() {
        return Err(NhbError::Domain(format!("V is not finite at {x:?}")));
    }
    let w = v.exp();
    Ok(VW {
        v,
        w,
        overflow: w.is_infinite(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lyapunov::params::{select_params, ScaleSeeds};
    use crate::model::{make_potential, PotentialSpec};
    use proptest::prelude::*;

    fn setup() -> (SystemParams, crate::model::PotentialHandle, LyapunovParams) {
        let params = SystemParams::unit_1d();
        let pot = make_potential(
            &PotentialSpec::DoubleWell { c1: 0.25, c2: 0.5, c3: None, zeta: None },
            &params,
        )
        .unwrap();
        let seeds = ScaleSeeds { p_star: 4.0, u_star: 9.0, xi_star: 6.0 };
        let lp = select_params(1.0, 0.2, 0.06, &params, seeds).unwrap();
        (params, pot, lp)
    }

    // Central differences of the value functions, used as an independent check of the jets.
    fn fd_jet(f: &dyn Fn(&State) -> f64, x: &State) -> FieldJet {
        let n = x.q.len();
        let h = 1e-5;
        let mut out = FieldJet::zero(n);
        out.value = f(x);
        for k in 0..n {
            let mut a = x.clone();
            let mut b = x.clone();
            a.q[k] += h;
            b.q[k] -= h;
            out.grad_q[k] = (f(&a) - f(&b)) / (2.0 * h);
            let mut a = x.clone();
            let mut b = x.clone();
            a.p[k] += h;
            b.p[k] -= h;
            let fa = f(&a);
            let fb = f(&b);
            out.grad_p[k] = (fa - fb) / (2.0 * h);
            let h2 = 1e-4;
            let mut a = x.clone();
            let mut b = x.clone();
            a.p[k] += h2;
            b.p[k] -= h2;
            out.lap_p += (f(&a) - 2.0 * out.value + f(&b)) / (h2 * h2);
        }
        let mut a = x.clone();
        let mut b = x.clone();
        a.xi += h;
        b.xi -= h;
        out.d_xi = (f(&a) - f(&b)) / (2.0 * h);
        out
    }

    fn close(a: &FieldJet, b: &FieldJet, tol: f64) -> bool {
        let c = |u: f64, v: f64| (u - v).abs() <= tol * (1.0 + u.abs().max(v.abs()));
        c(a.value, b.value)
            && a.grad_q.iter().zip(&b.grad_q).all(|(u, v)| c(*u, *v))
            && a.grad_p.iter().zip(&b.grad_p).all(|(u, v)| c(*u, *v))
            && c(a.d_xi, b.d_xi)
            && c(a.lap_p, b.lap_p)
    }

    #[test]
    fn psi0_examples() {
        let (params, _pot, mut lp) = setup();
        assert_eq!(psi0(&State::new(vec![0.0], vec![0.0], 1.0), &lp, &params), 0.0);
        lp.delta = 0.1;
        assert!((psi0(&State::new(vec![0.0], vec![0.0], -2.0), &lp, &params) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn psi1_saturated_formula() {
        let (params, pot, lp) = setup();
        let _ = params;
        // q = 3: U' = 24, |U'|^2 = 576 >= 2 U* (xi^2 + 1) for xi = 0.5; p small keeps f2 = 1
        let x = State::new(vec![3.0], vec![0.5], 0.5);
        let u1 = pot.grad_vec(&x.q)[0];
        let expect = lp.alpha1 * (1.25f64).sqrt() * 0.5 / u1;
        assert!((psi1(&x, pot.as_ref(), &lp) - expect).abs() < 1e-14);
        // below U*/2
        assert_eq!(psi1(&State::new(vec![1.0], vec![0.5], 0.5), pot.as_ref(), &lp), 0.0);
        // xi above K* + 1
        assert_eq!(psi1(&State::new(vec![3.0], vec![0.5], 9.0), pot.as_ref(), &lp), 0.0);
    }

    #[test]
    fn psi2_support() {
        let (params, pot, lp) = setup();
        assert_eq!(psi2(&State::new(vec![0.5], vec![1.0], -5.5), pot.as_ref(), &lp, &params), 0.0);
        // p = grad U = 0 deep in the plateau gives F(0) = 0
        let h = Harmonic1::new();
        assert_eq!(psi2(&State::new(vec![0.0], vec![0.0], -40.0), &h, &lp, &params), 0.0);
    }

    #[derive(Debug)]
    struct Harmonic1;
    impl Harmonic1 {
        fn new() -> Self {
            Harmonic1
        }
    }
    impl Potential for Harmonic1 {
        fn n_coords(&self) -> usize { 1 }
        fn value(&self, q: &[f64]) -> f64 { 0.5 * q[0] * q[0] }
        fn grad(&self, q: &[f64], out: &mut [f64]) { out[0] = q[0]; }
        fn hess(&self, _: &[f64], out: &mut [f64]) { out[0] = 1.0; }
        fn in_domain(&self, _: &[f64]) -> bool { true }
        fn zeta(&self) -> f64 { 1.5 }
        fn is_convex_domain(&self) -> bool { true }
        fn name(&self) -> &str { "h" }
    }

    #[test]
    fn plateau_action_of_a_on_psi2() {
        // in the g2 plateau, A psi_j = -alpha2 w_j exactly
        let (params, pot, lp) = setup();
        let x = State::new(vec![1.3], vec![0.7], -30.0);
        let j = psi2_jet(&x, pot.as_ref(), &lp, &params);
        let g = pot.grad_vec(&x.q)[0];
        let a_op = -(x.xi + 1.0) * x.p[0] * j.grad_p[0] - g * j.grad_p[0] + j.lap_p;
        let w = -(x.xi + 1.0);
        assert!((a_op + lp.alpha2 * w).abs() < 1e-10 * w, "{a_op} vs {}", -lp.alpha2 * w);
    }

    proptest! {
        #[test]
        fn psi1_jet_matches_differences(q in -4.0f64..4.0, p in -5.0f64..5.0, xi in -3.0f64..9.0) {
            let (_params, pot, lp) = setup();
            let x = State::new(vec![q], vec![p], xi);
            let a = psi1_jet(&x, pot.as_ref(), &lp);
            let b = fd_jet(&|s: &State| psi1(s, pot.as_ref(), &lp), &x);
            prop_assert!(close(&a, &b, 2e-5), "{a:?} vs {b:?}");
        }

        #[test]
        fn psi2_jet_matches_differences(q in -4.0f64..4.0, p in -8.0f64..8.0, xi in -14.0f64..-4.0) {
            let (params, pot, lp) = setup();
            let x = State::new(vec![q], vec![p], xi);
            let a = psi2_jet(&x, pot.as_ref(), &lp, &params);
            let b = fd_jet(&|s: &State| psi2(s, pot.as_ref(), &lp, &params), &x);
            prop_assert!(close(&a, &b, 2e-5), "{a:?} vs {b:?}");
        }

        #[test]
        fn psi0_bounded_by_delta_h(q in -5.0f64..5.0, p in -5.0f64..5.0, xi in -20.0f64..20.0) {
            let (params, pot, lp) = setup();
            let x = State::new(vec![q], vec![p], xi);
            let h = hamiltonian(&x, pot.as_ref(), &params).unwrap();
            prop_assert!(psi0(&x, &lp, &params).abs() <= lp.delta * h + 1e-15);
        }
    }
}
