//! Frequency-response primitives.
//!
//! [`TransferElement`] holds a rational transfer function in descending
//! powers of `s` together with an exact transport delay, [`DqBlock`] is the
//! 2x2 complex coupling between the d- and q-axis at one frequency, and
//! [`FrequencyGrid`] is the ordered set of sweep points.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Fundamental angular frequency of a 50 Hz system.
pub const OMEGA0_50HZ: f64 = 2.0 * PI * 50.0;

/// Denominators smaller than this in magnitude are treated as poles.
pub const POLE_THRESHOLD: f64 = 1e-300;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Laplace variable on the imaginary axis, `s = j 2 pi f`.
#[inline]
pub fn jw(f_hz: f64) -> C64 {
    c(0.0, 2.0 * PI * f_hz)
}

fn horner(coeffs: &[C64], s: C64) -> C64 {
    coeffs.iter().fold(C64::new(0.0, 0.0), |acc, &k| acc * s + k)
}

fn poly_mul(a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Taylor shift: coefficients of `p(s + shift)` from those of `p(s)`, both
/// in descending powers.
fn poly_shift(desc: &[C64], shift: C64) -> Vec<C64> {
    let mut a: Vec<C64> = desc.iter().rev().copied().collect();
    let n = a.len() - 1;
    for i in 0..n {
        for j in (i..n).rev() {
            let next = a[j + 1];
            a[j] += shift * next;
        }
    }
    a.reverse();
    a
}

/// Rational transfer function with an optional pure delay,
/// `num(s) / den(s) * exp(-s * delay)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferElement {
    num: Vec<C64>,
    den: Vec<C64>,
    delay: f64,
}

impl TransferElement {
    /// Builds an element from real coefficients in descending powers of `s`.
    pub fn new(num: &[f64], den: &[f64]) -> Result<Self> {
        Self::from_complex(
            num.iter().map(|&x| c(x, 0.0)).collect(),
            den.iter().map(|&x| c(x, 0.0)).collect(),
        )
    }

    pub fn from_complex(num: Vec<C64>, den: Vec<C64>) -> Result<Self> {
        if num.is_empty() || den.is_empty() {
            return Err(Error::InvalidParameter(
                "transfer element needs at least one numerator and denominator coefficient".into(),
            ));
        }
        if den.iter().all(|d| d.norm() == 0.0) {
            return Err(Error::InvalidParameter(
                "transfer element denominator is identically zero".into(),
            ));
        }
        if num.iter().chain(&den).any(|k| !k.re.is_finite() || !k.im.is_finite()) {
            return Err(Error::InvalidParameter(
                "transfer element coefficients must be finite".into(),
            ));
        }
        Ok(Self {
            num,
            den,
            delay: 0.0,
        })
    }

    pub fn constant(k: f64) -> Self {
        Self {
            num: vec![c(k, 0.0)],
            den: vec![c(1.0, 0.0)],
            delay: 0.0,
        }
    }

    /// Pure transport delay `exp(-s * seconds)`.
    pub fn pure_delay(seconds: f64) -> Result<Self> {
        Self::constant(1.0).with_delay(seconds)
    }

    pub fn with_delay(mut self, seconds: f64) -> Result<Self> {
        if !(seconds >= 0.0 && seconds.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "delay must be finite and >= 0, got {seconds}"
            )));
        }
        self.delay = seconds;
        Ok(self)
    }

    pub fn numerator(&self) -> &[C64] {
        &self.num
    }

    pub fn denominator(&self) -> &[C64] {
        &self.den
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    /// Series connection: polynomial products, delays add.
    pub fn series(&self, other: &TransferElement) -> TransferElement {
        TransferElement {
            num: poly_mul(&self.num, &other.num),
            den: poly_mul(&self.den, &other.den),
            delay: self.delay + other.delay,
        }
    }

    pub fn evaluate(&self, s: C64) -> Result<C64> {
        let den = horner(&self.den, s);
        if den.norm() < POLE_THRESHOLD {
            return Err(Error::PoleHit { s });
        }
        let rational = horner(&self.num, s) / den;
        if self.delay == 0.0 {
            Ok(rational)
        } else {
            Ok(rational * (-s * self.delay).exp())
        }
    }

    /// Element `H'` with `H'(s) = H(s + j omega0)`, built by recomposing both
    /// polynomials. The result has complex coefficients.
    pub fn freq_shift(&self, omega0: f64) -> Result<TransferElement> {
        if self.delay != 0.0 {
            return Err(Error::DelayedShift { delay: self.delay });
        }
        let shift = c(0.0, omega0);
        Ok(TransferElement {
            num: poly_shift(&self.num, shift),
            den: poly_shift(&self.den, shift),
            delay: 0.0,
        })
    }
}

/// 2x2 complex block coupling the d- and q-axis at one frequency. Used both
/// for admittances (siemens) and impedances (ohms).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DqBlock {
    pub dd: C64,
    pub dq: C64,
    pub qd: C64,
    pub qq: C64,
}

impl DqBlock {
    pub const fn new(dd: C64, dq: C64, qd: C64, qq: C64) -> Self {
        Self { dd, dq, qd, qq }
    }

    pub fn zero() -> Self {
        Self::scalar(C64::new(0.0, 0.0))
    }

    pub fn identity() -> Self {
        Self::scalar(C64::new(1.0, 0.0))
    }

    pub fn scalar(x: C64) -> Self {
        Self::diag(x, x)
    }

    pub fn diag(d: C64, q: C64) -> Self {
        let z = C64::new(0.0, 0.0);
        Self::new(d, z, z, q)
    }

    /// Stamp of a balanced element `k(s)` in the rotating frame: `[k, -w0 m; w0 m, k]`.
    pub fn rotating(diag: C64, cross: f64) -> Self {
        Self::new(diag, c(-cross, 0.0), c(cross, 0.0), diag)
    }

    pub fn det(&self) -> C64 {
        self.dd * self.qq - self.dq * self.qd
    }

    pub fn scale(&self, k: C64) -> Self {
        Self::new(self.dd * k, self.dq * k, self.qd * k, self.qq * k)
    }

    /// Closed-form adjugate inverse.
    pub fn inverse(&self) -> Result<Self> {
        let det = self.det();
        if det.norm() <= POLE_THRESHOLD || !det.is_finite() {
            return Err(Error::SingularBlock { det: det.norm() });
        }
        let inv = det.inv();
        Ok(Self::new(
            self.qq * inv,
            -self.dq * inv,
            -self.qd * inv,
            self.dd * inv,
        ))
    }

    /// Solves `self * x = rhs` for the 2x2 block `x`.
    pub fn solve(&self, rhs: &DqBlock) -> Result<Self> {
        Ok(self.inverse()? * *rhs)
    }

    pub fn entries(&self) -> [C64; 4] {
        [self.dd, self.dq, self.qd, self.qq]
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.entries().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.entries().iter().all(|z| z.is_finite())
    }
}

impl Add for DqBlock {
    type Output = DqBlock;
    fn add(self, o: DqBlock) -> DqBlock {
        DqBlock::new(self.dd + o.dd, self.dq + o.dq, self.qd + o.qd, self.qq + o.qq)
    }
}

impl AddAssign for DqBlock {
    fn add_assign(&mut self, o: DqBlock) {
        *self = *self + o;
    }
}

impl Sub for DqBlock {
    type Output = DqBlock;
    fn sub(self, o: DqBlock) -> DqBlock {
        DqBlock::new(self.dd - o.dd, self.dq - o.dq, self.qd - o.qd, self.qq - o.qq)
    }
}

impl Neg for DqBlock {
    type Output = DqBlock;
    fn neg(self) -> DqBlock {
        DqBlock::new(-self.dd, -self.dq, -self.qd, -self.qq)
    }
}

impl Mul for DqBlock {
    type Output = DqBlock;
    fn mul(self, o: DqBlock) -> DqBlock {
        DqBlock::new(
            self.dd * o.dd + self.dq * o.qd,
            self.dd * o.dq + self.dq * o.qq,
            self.qd * o.dd + self.qq * o.qd,
            self.qd * o.dq + self.qq * o.qq,
        )
    }
}

impl Mul<C64> for DqBlock {
    type Output = DqBlock;
    fn mul(self, k: C64) -> DqBlock {
        self.scale(k)
    }
}

/// Strictly increasing list of positive sweep frequencies and the
/// fundamental angular frequency of the rotating frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    freqs_hz: Vec<f64>,
    omega0: f64,
}

impl FrequencyGrid {
    pub fn new(freqs_hz: Vec<f64>, omega0: f64) -> Result<Self> {
        if freqs_hz.is_empty() {
            return Err(Error::InvalidGrid("no frequencies".into()));
        }
        if let Some(f) = freqs_hz.iter().find(|f| !(**f > 0.0 && f.is_finite())) {
            return Err(Error::InvalidGrid(format!("frequency {f} is not positive")));
        }
        if let Some(w) = freqs_hz.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(format!(
                "frequencies not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        if !(omega0 >= 0.0 && omega0.is_finite()) {
            return Err(Error::InvalidGrid(format!("bad fundamental {omega0} rad/s")));
        }
        Ok(Self { freqs_hz, omega0 })
    }

    /// Uniform grid `fmin, fmin + df, ...` up to and including `fmax`
    /// (within a small rounding allowance).
    pub fn linear(fmin: f64, fmax: f64, df: f64, omega0: f64) -> Result<Self> {
        if !(fmin > 0.0 && fmax >= fmin && df > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "need 0 < fmin <= fmax and df > 0 (got {fmin}, {fmax}, {df})"
            )));
        }
        let n = ((fmax - fmin) / df + 1e-9).floor() as usize + 1;
        Self::new((0..n).map(|i| fmin + i as f64 * df).collect(), omega0)
    }

    /// Builds a grid from unordered values, sorting and dropping duplicates.
    pub fn from_unsorted(mut freqs_hz: Vec<f64>, omega0: f64) -> Result<Self> {
        freqs_hz.sort_by(f64::total_cmp);
        freqs_hz.dedup();
        Self::new(freqs_hz, omega0)
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs_hz
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn len(&self) -> usize {
        self.freqs_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs_hz.is_empty()
    }
}
