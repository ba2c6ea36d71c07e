//! Double-double arithmetic (an unevaluated sum `hi + lo` of two f64).
//!
//! Gram entries and the small normal-equation solve are carried in this
//! format. The closed-form bound `‖S‖² − 2αᵀb + αᵀGα` cancels down to
//! values far below `ε·‖S‖²` once the basis reproduces `S`, which plain f64
//! cannot resolve.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

/// Dekker split `a = hi + lo` with 26-bit halves.
#[inline]
fn split(a: f64) -> (f64, f64) {
    const FACTOR: f64 = 134_217_729.0; // 2^27 + 1
    let t = FACTOR * a;
    let hi = t - (t - a);
    (hi, a - hi)
}

/// Exact product without relying on a hardware fused multiply-add.
#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let (ah, al) = split(a);
    let (bh, bl) = split(b);
    (p, ((ah * bh - p) + ah * bl + al * bh) + al * bl)
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    pub fn new(hi: f64, lo: f64) -> Self {
        let (hi, lo) = quick_two_sum(hi, lo);
        Dd { hi, lo }
    }

    pub fn from_f64(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    /// Exact product of two doubles.
    pub fn prod(a: f64, b: f64) -> Self {
        let (hi, lo) = two_prod(a, b);
        Dd { hi, lo }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn mul_f64(self, b: f64) -> Self {
        let (p, e) = two_prod(self.hi, b);
        let (hi, lo) = quick_two_sum(p, e + self.lo * b);
        Dd { hi, lo }
    }

    pub fn div(self, b: Dd) -> Self {
        let q1 = self.hi / b.hi;
        let r = self - b.mul_f64(q1);
        let q2 = r.hi / b.hi;
        let r = r - b.mul_f64(q2);
        let q3 = r.hi / b.hi;
        Dd::new(q1, q2) + Dd::from_f64(q3)
    }

    /// Square root; nonpositive inputs give zero.
    pub fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return Dd::ZERO;
        }
        let x = self.hi.sqrt();
        let r = self - Dd::prod(x, x);
        Dd::new(x, r.hi / (2.0 * x))
    }

    pub fn max0(self) -> Self {
        if self.hi < 0.0 || (self.hi == 0.0 && self.lo < 0.0) {
            Dd::ZERO
        } else {
            self
        }
    }
}

impl Add for Dd {
    type Output = Dd;

    #[inline]
    fn add(self, b: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl AddAssign for Dd {
    #[inline]
    fn add_assign(&mut self, b: Dd) {
        *self = *self + b;
    }
}

impl Neg for Dd {
    type Output = Dd;

    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl Sub for Dd {
    type Output = Dd;

    #[inline]
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl Mul for Dd {
    type Output = Dd;

    #[inline]
    fn mul(self, b: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, b.hi);
        let e = e + (self.hi * b.lo + self.lo * b.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }
}

impl std::iter::Sum for Dd {
    fn sum<I: Iterator<Item = Dd>>(iter: I) -> Dd {
        iter.fold(Dd::ZERO, |a, b| a + b)
    }
}

/// Compensated dot-product accumulator (Ogita–Rump–Oishi `Dot2`), returning
/// the result as a double-double.
#[derive(Debug, Clone, Copy, Default)]
pub struct DotAccumulator {
    sum: [f64; LANES],
    err: [f64; LANES],
}

impl DotAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Four interleaved lanes, merged in a fixed order in [`finish`](Self::finish).
    #[inline]
    pub fn add_slices(&mut self, a: &[f64], b: &[f64]) {
        assert_eq!(a.len(), b.len());
        let mut s = self.sum;
        let mut c = self.err;
        let chunks = a.len() / LANES * LANES;
        for (xa, yb) in a[..chunks].chunks_exact(LANES).zip(b[..chunks].chunks_exact(LANES)) {
            for k in 0..LANES {
                let (p, ep) = two_prod(xa[k], yb[k]);
                let (t, es) = two_sum(s[k], p);
                s[k] = t;
                c[k] += ep + es;
            }
        }
        for (i, (&x, &y)) in a[chunks..].iter().zip(&b[chunks..]).enumerate() {
            let (p, ep) = two_prod(x, y);
            let (t, es) = two_sum(s[i], p);
            s[i] = t;
            c[i] += ep + es;
        }
        self.sum = s;
        self.err = c;
    }

    pub fn finish(self) -> Dd {
        (0..LANES).map(|k| Dd::new(self.sum[k], 0.0) + Dd::new(self.err[k], 0.0)).sum()
    }
}

const LANES: usize = 4;

pub fn dot(a: &[f64], b: &[f64]) -> Dd {
    let mut acc = DotAccumulator::new();
    acc.add_slices(a, b);
    acc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn captures_cancellation_f64_cannot() {
        // (1 + 2^-60) - 1 = 2^-60 is lost in f64 but kept here.
        let tiny = 2f64.powi(-60);
        let a = Dd::from_f64(1.0) + Dd::from_f64(tiny);
        let r = a - Dd::from_f64(1.0);
        assert_eq!(r.to_f64(), tiny);
    }

    #[test]
    fn exact_product_error_term() {
        let a = 1.0 + 2f64.powi(-30);
        let p = Dd::prod(a, a);
        // a² = 1 + 2^-29 + 2^-60 exactly
        let expected = Dd::from_f64(1.0 + 2f64.powi(-29)) + Dd::from_f64(2f64.powi(-60));
        assert_eq!((p - expected).to_f64(), 0.0);
    }

    #[test]
    fn compensated_dot_beats_naive() {
        let a = [1e16, 1.0, -1e16, 1.0];
        let b = [1.0; 4];
        assert_eq!(dot(&a, &b).to_f64(), 2.0);
    }

    #[test]
    fn sqrt_and_div_roundtrip() {
        let two = Dd::from_f64(2.0);
        let r = two.sqrt();
        let back = r * r - two;
        assert!(back.to_f64().abs() < 1e-30);
        let third = Dd::from_f64(1.0).div(Dd::from_f64(3.0));
        let one = third.mul_f64(3.0) - Dd::from_f64(1.0);
        assert!(one.to_f64().abs() < 1e-31);
    }

    #[test]
    fn max0_clamps() {
        assert_eq!(Dd::new(-1e-30, 0.0).max0(), Dd::ZERO);
        assert_eq!(Dd::new(0.0, -1e-40).max0(), Dd::ZERO);
        assert_eq!(Dd::from_f64(2.0).max0().hi, 2.0);
    }
}
