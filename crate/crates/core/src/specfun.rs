//! Dawson's integral, its maximum, the primitive F_unit and the threshold beta*.

use once_cell::sync::Lazy;
use serde::Serialize;

use crate::error::{contract, Result};
use crate::model::SystemParams;
use crate::quadrature::{apply_rule, GL20};

/// Below this |z| the Maclaurin series is used, above it the continued fraction.
const SERIES_CUTOFF: f64 = 4.0;

/// D(z) = exp(-z^2) * int_0^z exp(y^2) dy.
pub fn dawson(z: f64) -> f64 {
    let a = z.abs();
    let d = if a < SERIES_CUTOFF {
        dawson_series(a)
    } else {
        dawson_cf(a)
    };
    d.copysign(z)
}

/// Checked variant rejecting non-finite input.
pub fn dawson_checked(z: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(contract(format!("dawson needs a finite argument, got {z}")));
    }
    Ok(dawson(z))
}

// exp(-z^2) sum_n z^(2n+1) / (n! (2n+1)); all terms positive, so no cancellation.
fn dawson_series(z: f64) -> f64 {
    let z2 = z * z;
    let mut term = z; // z^(2n+1)/n!
    let mut sum = z;
    let mut n = 0.0;
    loop {
        n += 1.0;
        term *= z2 / n;
        let t = term / (2.0 * n + 1.0);
        sum += t;
        if t <= 1e-17 * sum {
            break;
        }
    }
    (-z2).exp() * sum
}

// D(z) = z / (1 + 2z^2 - 4z^2 / (3 + 2z^2 - 8z^2 / (5 + 2z^2 - ...))), evaluated bottom up.
fn dawson_cf(z: f64) -> f64 {
    let z2 = z * z;
    let depth = (40.0 + 400.0 / z2).ceil() as usize;
    let mut tail = 0.0;
    for k in (1..=depth).rev() {
        let kf = k as f64;
        tail = 4.0 * kf * z2 / (2.0 * kf + 1.0 + 2.0 * z2 - tail);
    }
    z / (1.0 + 2.0 * z2 - tail)
}

/// Location and value of the maximum of D on (0, inf).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DawsonMax {
    pub z_star: f64,
    pub d_max: f64,
}

static DAWSON_MAX: Lazy<DawsonMax> = Lazy::new(compute_dawson_max);

/// Cached maximum of Dawson's integral.
pub fn dawson_max() -> DawsonMax {
    *DAWSON_MAX
}

// D' = 1 - 2 z D changes sign exactly once on (0, inf). Bracket on a grid, then
// bisect on the sign of the derivative down to adjacent floats.
fn compute_dawson_max() -> DawsonMax {
    let slope = |z: f64| 1.0 - 2.0 * z * dawson(z);
    let mut lo = 0.0;
    let mut hi = 0.0;
    for i in 1..=400 {
        let z = 0.01 * i as f64;
        if slope(z) < 0.0 {
            lo = z - 0.01;
            hi = z;
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let z_star = 0.5 * (lo + hi);
    DawsonMax {
        z_star,
        d_max: dawson(z_star),
    }
}

/// beta* = beta / (8 D_max^2), the largest admissible exponent for W.
pub fn beta_star(params: &SystemParams) -> f64 {
    let d = dawson_max().d_max;
    params.beta() / (8.0 * d * d)
}

/// beta*/beta, a pure number.
pub fn beta_star_ratio() -> f64 {
    let d = dawson_max().d_max;
    1.0 / (8.0 * d * d)
}

const PANEL: f64 = 0.25;
const TABLE_END: f64 = 50.0;

/// Constant term of F_unit(z) - log(z)/2 as z -> inf, equal to (gamma_E + ln 4)/4.
/// Agrees with an extended-precision quadrature of D to 25 digits.
pub const F_UNIT_LOG_CONSTANT: f64 = 0.490_877_506_505_355_87;

// Cumulative integral of D at multiples of PANEL up to TABLE_END.
static F_TABLE: Lazy<Vec<f64>> = Lazy::new(|| {
    let n = (TABLE_END / PANEL).round() as usize;
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for i in 0..n {
        let a = PANEL * i as f64;
        acc += apply_rule(&GL20, a, a + PANEL, dawson);
        out.push(acc);
    }
    out
});

/// F_unit(z) = int_0^z D(y) dy, even in z and growing like log|z| / 2.
pub fn f_unit(z: f64) -> f64 {
    let a = z.abs();
    if a > TABLE_END {
        return f_unit_asymptotic(a);
    }
    let i = ((a / PANEL).floor() as usize).min(F_TABLE.len() - 1);
    let base = PANEL * i as f64;
    let rest = if a > base {
        apply_rule(&GL20, base, a, dawson)
    } else {
        0.0
    };
    F_TABLE[i] + rest
}

// C + log(z)/2 - sum_{n>=1} (2n-1)!! / (2^(n+1) 2n z^(2n)), the termwise
// integral of the large-argument expansion of D.
fn f_unit_asymptotic(z: f64) -> f64 {
    let inv2 = 1.0 / (z * z);
    let mut coef = 1.0; // (2n-1)!! / 2^(n+1) starting at n = 1 -> 1/4
    let mut pow = 1.0;
    let mut corr = 0.0;
    for n in 1..=12 {
        let nf = n as f64;
        coef *= if n == 1 { 0.25 } else { (2.0 * nf - 1.0) / 2.0 };
        pow *= inv2;
        let t = coef * pow / (2.0 * nf);
        corr += t;
        if t < 1e-18 {
            break;
        }
    }
    F_UNIT_LOG_CONSTANT + 0.5 * z.ln() - corr
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from a 30-digit quadrature of exp(y^2 - z^2).
    const ORACLE_D: &[(f64, f64)] = &[
        (0.1, 0.099335992397852866591),
        (0.5, 0.42443638350202229593),
        (1.0, 0.53807950691276841914),
        (2.0, 0.30134038892379196603),
        (3.0, 0.17827103061055828734),
        (3.9, 0.13292729108108927002),
        (4.0, 0.12934800123600511559),
        (4.1, 0.12596465843434614462),
        (5.0, 0.10213407442427683544),
        (7.0, 0.072180974658236292028),
        (10.0, 0.050253847187598528033),
        (20.0, 0.025031367926403671947),
        (50.0, 0.010002001201201683031),
        (100.0, 0.0050002500375093782827),
    ];

    const ORACLE_F: &[(f64, f64)] = &[
        (0.5, 0.11524216821175858416),
        (1.0, 0.36972081504953965025),
        (2.0, 0.79618720484516659965),
        (5.0, 1.2904352252261850697),
        (10.0, 1.6409105174959885425),
        (50.0, 2.446838994209418384),
        (1e2, 2.793450098561745262847838),
        (1e4, 5.096047691243447228521227),
        (1e6, 7.398632785487367921914218),
    ];

    #[test]
    fn dawson_matches_oracle() {
        for &(z, d) in ORACLE_D {
            let got = dawson(z);
            assert!((got - d).abs() < 1e-14, "D({z}) = {got}, want {d}");
        }
    }

    #[test]
    fn dawson_basic_examples() {
        assert_eq!(dawson(0.0), 0.0);
        assert_eq!(dawson(-0.7), -dawson(0.7));
        assert!((2.0 * 100.0 * dawson(100.0) - 1.0).abs() < 1e-3);
        assert!(dawson_checked(f64::NAN).is_err());
    }

    #[test]
    fn crossover_is_continuous() {
        let below = dawson_series(SERIES_CUTOFF);
        let above = dawson_cf(SERIES_CUTOFF);
        assert!((below - above).abs() < 1e-15);
    }

    #[test]
    fn maximum_matches_oracle() {
        let m = dawson_max();
        assert!((m.z_star - 0.92413887300459176701).abs() < 1e-10);
        assert!((m.d_max - 0.54104422463518169847).abs() < 1e-14);
        assert!(dawson(m.z_star - 1e-3) < m.d_max && dawson(m.z_star + 1e-3) < m.d_max);
        assert!((1.0 - 2.0 * m.z_star * m.d_max).abs() < 1e-9);
    }

    #[test]
    fn beta_star_examples() {
        let p = SystemParams::unit_1d();
        assert!((beta_star(&p) - 0.42701632829909849489).abs() < 1e-13);
        let mut p2 = p.clone();
        p2.temperature = 2.0;
        assert!((beta_star(&p2) - 0.213508164149549).abs() < 1e-12);
        assert!((beta_star(&p2) / p2.beta() - beta_star_ratio()).abs() < 1e-15);
    }

    #[test]
    fn f_unit_matches_oracle() {
        for &(z, f) in ORACLE_F {
            let got = f_unit(z);
            assert!((got - f).abs() < 1e-12, "F({z}) = {got}, want {f}");
            assert_eq!(f_unit(-z), got);
        }
        assert_eq!(f_unit(0.0), 0.0);
    }

    #[test]
    fn f_unit_continuous_at_table_end() {
        let inside = f_unit(TABLE_END);
        let outside = f_unit_asymptotic(TABLE_END);
        assert!((inside - outside).abs() < 1e-13);
    }

    #[test]
    fn f_unit_log_ratio_decreases() {
        let errs: Vec<f64> = [1e2, 1e4, 1e6]
            .iter()
            .map(|&z: &f64| (f_unit(z) / (0.5 * z.ln()) - 1.0).abs())
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2]);
    }
}
