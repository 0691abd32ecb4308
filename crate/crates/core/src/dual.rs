//! Forward-mode dual numbers used to get exact spatial and parameter
//! derivatives out of closed-form field kernels.
//!
//! `Dual<T, N>` carries a value and `N` first-order infinitesimal parts.
//! Nesting (`Dual<Dual<f64, 4>, 1>`) gives mixed higher derivatives.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Minimal real-number interface the field kernels are written against.
pub trait Scalar:
    Copy
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn cst(v: f64) -> Self;
    /// Plain value with all infinitesimal parts dropped.
    fn re(&self) -> f64;
    fn sqrt(self) -> Self;
    fn scale(self, k: f64) -> Self;

    fn zero() -> Self {
        Self::cst(0.0)
    }
    fn one() -> Self {
        Self::cst(1.0)
    }
    fn square(self) -> Self {
        self * self
    }
    fn recip(self) -> Self {
        Self::one() / self
    }
}

impl Scalar for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn re(&self) -> f64 {
        *self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn scale(self, k: f64) -> Self {
        self * k
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<T, const N: usize> {
    pub re: T,
    pub eps: [T; N],
}

impl<T: Scalar, const N: usize> Dual<T, N> {
    pub fn constant(re: T) -> Self {
        Dual {
            re,
            eps: [T::zero(); N],
        }
    }

    /// Independent variable seeded in slot `slot`.
    pub fn var(re: T, slot: usize) -> Self {
        let mut eps = [T::zero(); N];
        eps[slot] = T::one();
        Dual { re, eps }
    }

    /// Variable moving with velocity `v` in slot `slot`.
    pub fn seeded(re: T, slot: usize, v: T) -> Self {
        let mut eps = [T::zero(); N];
        eps[slot] = v;
        Dual { re, eps }
    }
}

impl<T: Scalar, const N: usize> Add for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        let mut eps = self.eps;
        for (e, oe) in eps.iter_mut().zip(o.eps.iter()) {
            *e = *e + *oe;
        }
        Dual {
            re: self.re + o.re,
            eps,
        }
    }
}

impl<T: Scalar, const N: usize> Sub for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        let mut eps = self.eps;
        for (e, oe) in eps.iter_mut().zip(o.eps.iter()) {
            *e = *e - *oe;
        }
        Dual {
            re: self.re - o.re,
            eps,
        }
    }
}

impl<T: Scalar, const N: usize> Mul for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let mut eps = self.eps;
        for (e, oe) in eps.iter_mut().zip(o.eps.iter()) {
            *e = *e * o.re + self.re * *oe;
        }
        Dual {
            re: self.re * o.re,
            eps,
        }
    }
}

impl<T: Scalar, const N: usize> Div for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = o.re.recip();
        let re = self.re * inv;
        let mut eps = self.eps;
        for (e, oe) in eps.iter_mut().zip(o.eps.iter()) {
            *e = (*e - re * *oe) * inv;
        }
        Dual { re, eps }
    }
}

impl<T: Scalar, const N: usize> Neg for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        let mut eps = self.eps;
        for e in eps.iter_mut() {
            *e = -*e;
        }
        Dual { re: -self.re, eps }
    }
}

impl<T: Scalar, const N: usize> Scalar for Dual<T, N> {
    #[inline]
    fn cst(v: f64) -> Self {
        Dual::constant(T::cst(v))
    }
    #[inline]
    fn re(&self) -> f64 {
        self.re.re()
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        let k = (s + s).recip();
        let mut eps = self.eps;
        for e in eps.iter_mut() {
            *e = *e * k;
        }
        Dual { re: s, eps }
    }
    #[inline]
    fn scale(self, k: f64) -> Self {
        let mut eps = self.eps;
        for e in eps.iter_mut() {
            *e = e.scale(k);
        }
        Dual {
            re: self.re.scale(k),
            eps,
        }
    }
}

/// First-order dual in one direction.
pub type D1<T> = Dual<T, 1>;
/// Value plus full spatial gradient.
pub type Grad4 = Dual<f64, 4>;

/// Lift every entry of a point into a one-slot dual, moving the whole point
/// along `dir` with unit speed.
pub fn lift_along<T: Scalar>(x: [T; 4], dir: [f64; 4]) -> [D1<T>; 4] {
    let mut out = [D1::constant(T::zero()); 4];
    for k in 0..4 {
        out[k] = D1::seeded(x[k], 0, T::cst(dir[k]));
    }
    out
}

pub fn lift_const<T: Scalar, const N: usize>(x: [T; 4]) -> [Dual<T, N>; 4] {
    [
        Dual::constant(x[0]),
        Dual::constant(x[1]),
        Dual::constant(x[2]),
        Dual::constant(x[3]),
    ]
}

/// Point with all four coordinates seeded as independent variables.
pub fn grad_point(x: [f64; 4]) -> [Grad4; 4] {
    [
        Grad4::var(x[0], 0),
        Grad4::var(x[1], 1),
        Grad4::var(x[2], 2),
        Grad4::var(x[3], 3),
    ]
}

pub fn cst4<T: Scalar>(x: [f64; 4]) -> [T; 4] {
    [T::cst(x[0]), T::cst(x[1]), T::cst(x[2]), T::cst(x[3])]
}
