//! Gauss-Legendre rules and a small adaptive integrator.

use once_cell::sync::Lazy;

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

pub(crate) static GL10: Lazy<(Vec<f64>, Vec<f64>)> = Lazy::new(|| gauss_legendre(10));
pub(crate) static GL20: Lazy<(Vec<f64>, Vec<f64>)> = Lazy::new(|| gauss_legendre(20));

/// Single application of a rule on [a, b].
pub fn apply_rule(rule: &(Vec<f64>, Vec<f64>), a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    rule.0
        .iter()
        .zip(&rule.1)
        .map(|(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// Composite Gauss-Legendre rule with `panels` equal panels.
pub fn composite(
    rule: &(Vec<f64>, Vec<f64>),
    a: f64,
    b: f64,
    panels: usize,
    mut f: impl FnMut(f64) -> f64,
) -> f64 {
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let lo = a + h * i as f64;
            apply_rule(rule, lo, lo + h, &mut f)
        })
        .sum()
}

/// Adaptive bisection comparing a 10-point rule with its two halves.
pub fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let left = apply_rule(&GL10, a, m, f);
        let right = apply_rule(&GL10, m, b, f);
        if depth == 0 || (left + right - whole).abs() <= tol {
            return left + right;
        }
        rec(f, a, m, left, 0.5 * tol, depth - 1) + rec(f, m, b, right, 0.5 * tol, depth - 1)
    }
    let whole = apply_rule(&GL10, a, b, f);
    rec(f, a, b, whole, tol, 40)
}

/// Tensor-product composite rule over a box in one or two dimensions.
pub fn box_integral(dims: usize, lo: f64, hi: f64, panels: usize, f: &dyn Fn(&[f64]) -> f64) -> f64 {
    let rule = &*GL10;
    let h = (hi - lo) / panels as f64;
    let mut pts = Vec::with_capacity(panels * rule.0.len());
    for i in 0..panels {
        let a = lo + h * i as f64;
        for (x, w) in rule.0.iter().zip(&rule.1) {
            pts.push((a + 0.5 * h * (1.0 + x), 0.5 * h * w));
        }
    }
    match dims {
        1 => pts.iter().map(|&(x, w)| w * f(&[x])).sum(),
        2 => {
            let mut total = 0.0;
            for &(x, wx) in &pts {
                for &(y, wy) in &pts {
                    total += wx * wy * f(&[x, y]);
                }
            }
            total
        }
        _ => panic!("box_integral supports one or two dimensions"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rules_integrate_polynomials_exactly() {
        let rule = gauss_legendre(7);
        // degree 13 is exact for 7 points
        let v = apply_rule(&rule, 0.0, 2.0, |x| x.powi(13));
        assert!((v - 2f64.powi(14) / 14.0).abs() < 1e-9);
        assert!((rule.1.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_gaussian() {
        let v = adaptive(&|x: f64| (-x * x).exp(), -10.0, 10.0, 1e-13);
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn box_2d() {
        let v = box_integral(2, -8.0, 8.0, 16, &|x: &[f64]| (-(x[0] * x[0] + x[1] * x[1])).exp());
        assert!((v - std::f64::consts::PI).abs() < 1e-10);
    }
}
