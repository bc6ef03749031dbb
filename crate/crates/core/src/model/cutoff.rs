//! Cut-off profile `χ` on `[0, ∞)`: 1 on `[0, 1]`, 0 on `[2, ∞)`, C² throughout.
//!
//! The profile is built through `g(r) = χ(r) r²`. On `[1, 2]`, `g'` runs from
//! `2` down to a constant `-c` over a cubic ramp of width `a`, stays there, and
//! returns to 0 over a ramp of width `b`; `c` makes `g(2) = 0`. The cut-off
//! nonlinearity `χ(|u|) B(u,u)` then has Lipschitz factor
//! `sup_r max(|g'|, 2g/r) / 2` relative to `2 C_B`, which is about 1.045 here.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffProfile {
    a: f64,
    b: f64,
    c: f64,
}

// Hermite basis integrated from 0 to s.
fn hermite_integrals(s: f64) -> [f64; 4] {
    let (s2, s3, s4) = (s * s, s * s * s, s * s * s * s);
    [
        s4 / 2.0 - s3 + s,
        s4 / 4.0 - 2.0 * s3 / 3.0 + s2 / 2.0,
        -s4 / 2.0 + s3,
        s4 / 4.0 - s3 / 3.0,
    ]
}

fn hermite(s: f64) -> [f64; 4] {
    let (s2, s3) = (s * s, s * s * s);
    [
        2.0 * s3 - 3.0 * s2 + 1.0,
        s3 - 2.0 * s2 + s,
        -2.0 * s3 + 3.0 * s2,
        s3 - s2,
    ]
}

/// One cubic Hermite piece of `g'` on `[r0, r0 + h]`.
struct Piece {
    r0: f64,
    h: f64,
    p0: f64,
    m0: f64,
    p1: f64,
    m1: f64,
}

impl Piece {
    fn coeffs(&self) -> [f64; 4] {
        [self.p0, self.h * self.m0, self.p1, self.h * self.m1]
    }

    fn slope(&self, r: f64) -> f64 {
        let s = (r - self.r0) / self.h;
        hermite(s).iter().zip(self.coeffs()).map(|(b, c)| b * c).sum()
    }

    fn integral(&self, r: f64) -> f64 {
        let s = (r - self.r0) / self.h;
        self.h
            * hermite_integrals(s)
                .iter()
                .zip(self.coeffs())
                .map(|(b, c)| b * c)
                .sum::<f64>()
    }
}

impl Default for CutoffProfile {
    fn default() -> Self {
        Self::new(0.2, 0.3)
    }
}

impl CutoffProfile {
    /// Ramp widths `a` (after r = 1) and `b` (before r = 2).
    pub fn new(a: f64, b: f64) -> Self {
        assert!(a > 0.0 && b > 0.0 && a + b < 1.0, "ramps must fit in [1, 2]");
        let c = (1.0 + a + a * a / 6.0) / (1.0 - (a + b) / 2.0);
        Self { a, b, c }
    }

    fn first(&self) -> Piece {
        Piece {
            r0: 1.0,
            h: self.a,
            p0: 2.0,
            m0: 2.0,
            p1: -self.c,
            m1: 0.0,
        }
    }

    fn last(&self) -> Piece {
        Piece {
            r0: 2.0 - self.b,
            h: self.b,
            p0: -self.c,
            m0: 0.0,
            p1: 0.0,
            m1: 0.0,
        }
    }

    /// `g(r) = χ(r) r²`.
    pub fn g(&self, r: f64) -> f64 {
        let (a, b, c) = (self.a, self.b, self.c);
        if r <= 1.0 {
            r * r
        } else if r <= 1.0 + a {
            1.0 + self.first().integral(r)
        } else if r <= 2.0 - b {
            1.0 + self.first().integral(1.0 + a) - c * (r - 1.0 - a)
        } else if r < 2.0 {
            1.0 + self.first().integral(1.0 + a) - c * (1.0 - a - b) + self.last().integral(r)
        } else {
            0.0
        }
    }

    pub fn g_prime(&self, r: f64) -> f64 {
        let (a, b) = (self.a, self.b);
        if r <= 1.0 {
            2.0 * r
        } else if r <= 1.0 + a {
            self.first().slope(r)
        } else if r <= 2.0 - b {
            -self.c
        } else if r < 2.0 {
            self.last().slope(r)
        } else {
            0.0
        }
    }

    pub fn chi(&self, r: f64) -> f64 {
        if r <= 1.0 {
            1.0
        } else if r >= 2.0 {
            0.0
        } else {
            (self.g(r) / (r * r)).clamp(0.0, 1.0)
        }
    }

    /// `sup_r max(|g'(r)|, 2 g(r)/r) / 2` on a fine grid.
    pub fn lipschitz_factor(&self) -> f64 {
        (0..=20_000)
            .map(|i| {
                let r = 1.0 + i as f64 / 20_000.0;
                self.g_prime(r).abs().max(2.0 * self.g(r) / r)
            })
            .fold(2.0_f64, f64::max)
            / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateaus() {
        let p = CutoffProfile::default();
        assert_eq!(p.chi(0.3), 1.0);
        assert_eq!(p.chi(1.0), 1.0);
        assert_eq!(p.chi(2.0), 0.0);
        assert_eq!(p.chi(3.0), 0.0);
        assert!(p.g(2.0 - 1e-12).abs() < 1e-10);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let p = CutoffProfile::default();
        let h = 1e-6;
        for i in 1..200 {
            let r = 0.9 + i as f64 * 0.006;
            let fd = (p.g(r + h) - p.g(r - h)) / (2.0 * h);
            assert!((fd - p.g_prime(r)).abs() < 1e-6, "r = {r}");
        }
    }

    #[test]
    fn c2_at_the_seams() {
        let p = CutoffProfile::default();
        let h = 1e-7;
        for r in [1.0, 1.2, 1.7, 2.0] {
            let left = p.g_prime(r - h);
            let right = p.g_prime(r + h);
            assert!((left - right).abs() < 1e-5, "g' jumps at {r}");
            let sl = (p.g_prime(r - h) - p.g_prime(r - 2.0 * h)) / h;
            let sr = (p.g_prime(r + 2.0 * h) - p.g_prime(r + h)) / h;
            assert!((sl - sr).abs() < 1e-3, "g'' jumps at {r}: {sl} vs {sr}");
        }
    }

    #[test]
    fn monotone_and_bounded() {
        let p = CutoffProfile::default();
        let mut last = 1.0;
        for i in 0..=1000 {
            let c = p.chi(1.0 + i as f64 / 1000.0);
            assert!((0.0..=1.0).contains(&c));
            assert!(c <= last + 1e-15);
            last = c;
        }
    }

    #[test]
    fn lipschitz_factor_is_small() {
        let f = CutoffProfile::default().lipschitz_factor();
        assert!(f > 1.0 && f < 1.06, "factor {f}");
    }
}
