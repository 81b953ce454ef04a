//! Double-double arithmetic: an unevaluated sum `hi + lo` of two f64 values
//! carrying about 106 bits of significand.
//!
//! Only what the finite-difference oracle needs: `+ − × ÷`, `exp`, `expm1`
//! and `tanh`, each accurate to roughly 1e-30 relative.

use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::OnceLock;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

const LN2: DoubleDouble = DoubleDouble { hi: std::f64::consts::LN_2, lo: 2.3190468138462996e-17 };

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

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl DoubleDouble {
    pub const ZERO: Self = Self { hi: 0.0, lo: 0.0 };
    pub const ONE: Self = Self { hi: 1.0, lo: 0.0 };

    pub const fn from_f64(v: f64) -> Self {
        Self { hi: v, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn abs(self) -> Self {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    fn scale_pow2(self, k: i32) -> Self {
        let f = 2f64.powi(k);
        Self { hi: self.hi * f, lo: self.lo * f }
    }

    /// For `|x| ≤ 0.35`: Horner on `x / 2⁸`, then `expm1(2y) = expm1(y)·(expm1(y) + 2)`
    /// eight times.
    fn expm1_small(x: Self) -> Self {
        const HALVINGS: i32 = 8;
        static INV_FACT: OnceLock<[DoubleDouble; 14]> = OnceLock::new();
        let inv = INV_FACT.get_or_init(|| {
            let mut t = [DoubleDouble::ONE; 14];
            for k in 1..14 {
                t[k] = t[k - 1] / DoubleDouble::from_f64(k as f64);
            }
            t
        });
        let y = x.scale_pow2(-HALVINGS);
        let mut p = inv[13];
        for k in (1..13).rev() {
            p = p * y + inv[k];
        }
        let mut m = p * y;
        for _ in 0..HALVINGS {
            m = m * (m + Self::from_f64(2.0));
        }
        m
    }

    pub fn exp(self) -> Self {
        if self.hi > 709.0 {
            return Self::from_f64(f64::INFINITY);
        }
        if self.hi < -745.0 {
            return Self::ZERO;
        }
        let k = (self.hi / LN2.hi).round();
        let r = self - LN2 * Self::from_f64(k);
        (Self::ONE + Self::expm1_small(r)).scale_pow2(k as i32)
    }

    pub fn expm1(self) -> Self {
        if self.hi.abs() <= 0.35 {
            Self::expm1_small(self)
        } else {
            self.exp() - Self::ONE
        }
    }

    pub fn tanh(self) -> Self {
        let a = self.abs();
        let t = if a.hi > 40.0 {
            Self::ONE
        } else {
            let m = (a + a).expm1();
            m / (m + Self::from_f64(2.0))
        };
        if self.hi < 0.0 {
            -t
        } else {
            t
        }
    }
}

impl From<f64> for DoubleDouble {
    fn from(v: f64) -> Self {
        Self::from_f64(v)
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    fn neg(self) -> Self {
        Self { hi: -self.hi, lo: -self.lo }
    }
}

impl Add for DoubleDouble {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let (s, e) = two_sum(self.hi, rhs.hi);
        let (t, f) = two_sum(self.lo, rhs.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Self { hi, lo }
    }
}

impl Sub for DoubleDouble {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl Mul for DoubleDouble {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let (p, e) = two_prod(self.hi, rhs.hi);
        let (hi, lo) = quick_two_sum(p, e + (self.hi * rhs.lo + self.lo * rhs.hi));
        Self { hi, lo }
    }
}

impl Div for DoubleDouble {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let q1 = self.hi / rhs.hi;
        let r = self - rhs * Self::from_f64(q1);
        let q2 = r.hi / rhs.hi;
        let r = r - rhs * Self::from_f64(q2);
        let q3 = r.hi / rhs.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Self { hi, lo } + Self::from_f64(q3)
    }
}
