//! Smooth cutoff functions built from one C-infinity step.

/// Value and first two derivatives of a scalar function at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet1 {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet1 {
    pub const ZERO: Jet1 = Jet1 { v: 0.0, d1: 0.0, d2: 0.0 };
    pub const ONE: Jet1 = Jet1 { v: 1.0, d1: 0.0, d2: 0.0 };
}

/// s(t) = sigma(t) / (sigma(t) + sigma(1 - t)) with sigma(t) = exp(-1/t) for t > 0.
///
/// s = 0 for t <= 0, s = 1 for t >= 1, s' >= 0, max s' = s'(1/2) = 2.
pub fn smooth_step(t: f64) -> Jet1 {
    if t <= 0.0 {
        return Jet1::ZERO;
    }
    if t >= 1.0 {
        return Jet1::ONE;
    }
    // s = 1 / (1 + e^g) with g = 1/t - 1/(1-t); written this way both tails stay accurate.
    let u = 1.0 - t;
    let g = 1.0 / t - 1.0 / u;
    let s = 1.0 / (1.0 + g.exp());
    let c = 1.0 / (1.0 + (-g).exp()); // 1 - s
    let k = 1.0 / (t * t) + 1.0 / (u * u); // -g'
    let k1 = -2.0 / (t * t * t) + 2.0 / (u * u * u);
    let d1 = s * c * k;
    Jet1 {
        v: s,
        d1,
        d2: (c - s) * d1 * k + s * c * k1,
    }
}

/// A cutoff switching between 0 and 1 over the unit-width window [lo, lo + 1]
/// of either y or |y|.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cutoff {
    pub lo: f64,
    /// Rising means 0 below the window and 1 above it.
    pub rising: bool,
    /// Apply to |y| instead of y.
    pub even: bool,
}

impl Cutoff {
    pub fn eval(&self, y: f64) -> Jet1 {
        let (arg, sign) = if self.even {
            (y.abs(), if y < 0.0 { -1.0 } else { 1.0 })
        } else {
            (y, 1.0)
        };
        let s = smooth_step(arg - self.lo);
        let (v, d1, d2) = if self.rising {
            (s.v, s.d1, s.d2)
        } else {
            (1.0 - s.v, -s.d1, -s.d2)
        };
        Jet1 { v, d1: sign * d1, d2 }
    }

    pub fn value(&self, y: f64) -> f64 {
        self.eval(y).v
    }
}

/// The seven cutoffs of the construction for given levels K*, xi*.
#[derive(Debug, Clone, Copy)]
pub struct CutoffSet {
    /// 1 on y <= -1, 0 on y >= 0.
    pub f0: Cutoff,
    /// 1 on y <= K*, 0 on y >= K* + 1.
    pub f1: Cutoff,
    /// 1 on |y| <= 1, 0 on |y| >= 2. Also serves as h2.
    pub f2: Cutoff,
    /// 0 on |y| <= 1, 1 on |y| >= 2.
    pub f3: Cutoff,
    /// 1 on y <= -xi* - 1, 0 on y >= -xi*.
    pub h1: Cutoff,
    /// 1 on |y| <= 3, 0 on |y| >= 4.
    pub h3: Cutoff,
}

impl CutoffSet {
    pub fn new(k_star: f64, xi_star: f64) -> Self {
        Self {
            f0: Cutoff { lo: -1.0, rising: false, even: false },
            f1: Cutoff { lo: k_star, rising: false, even: false },
            f2: Cutoff { lo: 1.0, rising: false, even: true },
            f3: Cutoff { lo: 1.0, rising: true, even: true },
            h1: Cutoff { lo: -xi_star - 1.0, rising: false, even: false },
            h3: Cutoff { lo: 3.0, rising: false, even: true },
        }
    }

    pub fn h2(&self) -> Cutoff {
        self.f2
    }

    /// Largest |f'| over a dense grid of the window, for the derivative bound check.
    pub fn max_slope(c: &Cutoff) -> f64 {
        (0..=4000)
            .map(|i| c.eval(c.lo - 0.5 + 2.0 * i as f64 / 4000.0).d1.abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn step_shape() {
        assert_eq!(smooth_step(-0.3), Jet1::ZERO);
        assert_eq!(smooth_step(1.5), Jet1::ONE);
        let mid = smooth_step(0.5);
        assert!((mid.v - 0.5).abs() < 1e-15);
        assert!((mid.d1 - 2.0).abs() < 1e-12);
        let c = CutoffSet::new(7.15, 5.0);
        assert!(CutoffSet::max_slope(&c.f0) <= 2.0 + 1e-12);
        assert!(CutoffSet::max_slope(&c.h1) <= 2.0 + 1e-12);
    }

    #[test]
    fn step_integrates_to_half() {
        let v = crate::quadrature::composite(&crate::quadrature::GL20, 0.0, 1.0, 64, |t| smooth_step(t).v);
        assert!((v - 0.5).abs() < 1e-13);
    }

    #[test]
    fn plateaus() {
        let c = CutoffSet::new(7.15, 10.0);
        assert_eq!(c.f0.value(-1.0), 1.0);
        assert_eq!(c.f0.value(0.0), 0.0);
        assert_eq!(c.f1.value(7.15), 1.0);
        assert_eq!(c.f1.value(8.15), 0.0);
        assert_eq!(c.f2.value(-1.0), 1.0);
        assert_eq!(c.f2.value(2.0), 0.0);
        assert_eq!(c.f3.value(0.5), 0.0);
        assert_eq!(c.f3.value(-2.5), 1.0);
        assert_eq!(c.h1.value(-11.0), 1.0);
        assert_eq!(c.h1.value(-10.0), 0.0);
        assert_eq!(c.h3.value(3.0), 1.0);
        assert_eq!(c.h3.value(-4.0), 0.0);
    }

    proptest! {
        #[test]
        fn derivatives_match_differences(t in 0.02f64..0.98) {
            let h = 1e-5;
            let s = smooth_step(t);
            let fd1 = (smooth_step(t + h).v - smooth_step(t - h).v) / (2.0 * h);
            let fd2 = (smooth_step(t + h).d1 - smooth_step(t - h).d1) / (2.0 * h);
            prop_assert!((s.d1 - fd1).abs() < 1e-6 * (1.0 + s.d1.abs()));
            prop_assert!((s.d2 - fd2).abs() < 1e-5 * (1.0 + s.d2.abs()));
            prop_assert!(s.v >= 0.0 && s.v <= 1.0 && s.d1 >= 0.0);
        }

        #[test]
        fn even_cutoffs_are_even(y in -6.0f64..6.0) {
            let c = CutoffSet::new(3.0, 5.0);
            for f in [c.f2, c.f3, c.h3] {
                let a = f.eval(y);
                let b = f.eval(-y);
                prop_assert_eq!(a.v, b.v);
                prop_assert_eq!(a.d1, -b.d1);
                prop_assert_eq!(a.d2, b.d2);
            }
        }
    }
}
