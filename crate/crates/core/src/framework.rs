//! Reference frames, per-unit bases and instantaneous power.
//!
//! The Clarke transform is amplitude invariant: a balanced set of phase
//! voltages with peak `V` maps onto a space vector of length `V`. The price is
//! the `3/2` factor in [`instantaneous_pq`], which is the only place it
//! appears. Zero sequence is dropped since the plant is three-wire.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::Error;

const SQRT_3: f64 = 1.732_050_807_568_877_2;

/// Base quantities tying SI values to per-unit.
///
/// `v_base` is a phase-peak voltage so per-unit space-vector magnitudes equal
/// per-unit phasor magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerUnitBase {
    /// Rated apparent power (VA).
    pub s_base: f64,
    /// Phase-peak voltage (V).
    pub v_base: f64,
    /// Nominal angular frequency (rad/s).
    pub omega_0: f64,
}

impl PerUnitBase {
    pub fn new(s_base: f64, v_base: f64, omega_0: f64) -> Result<Self, Error> {
        let base = Self { s_base, v_base, omega_0 };
        base.validate()?;
        Ok(base)
    }

    pub fn validate(&self) -> Result<(), Error> {
        for (name, v) in [
            ("base.s_base", self.s_base),
            ("base.v_base", self.v_base),
            ("base.omega_0", self.omega_0),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, "must be finite and strictly positive"));
            }
        }
        Ok(())
    }

    /// Peak phase current base, `2 S / (3 V)`.
    pub fn i_base(&self) -> f64 {
        2.0 * self.s_base / (3.0 * self.v_base)
    }

    pub fn z_base(&self) -> f64 {
        self.v_base / self.i_base()
    }

    pub fn f_0(&self) -> f64 {
        self.omega_0 / (2.0 * PI)
    }
}

impl Default for PerUnitBase {
    /// 400 V phase peak and the rating implied by the PLC integral gain of
    /// 5.86e-3 at H = 2 s.
    fn default() -> Self {
        let omega_0 = 2.0 * PI * 50.0;
        Self {
            s_base: omega_0 / (2.0 * 2.0 * 5.86e-3),
            v_base: 400.0,
            omega_0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ThreePhase {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl ThreePhase {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }
}

/// Stationary-frame space vector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AlphaBeta {
    pub alpha: f64,
    pub beta: f64,
}

impl AlphaBeta {
    pub const ZERO: AlphaBeta = AlphaBeta { alpha: 0.0, beta: 0.0 };

    pub fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }

    pub fn from_polar(magnitude: f64, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(magnitude * c, magnitude * s)
    }

    pub fn norm(self) -> f64 {
        self.alpha.hypot(self.beta)
    }

    pub fn norm_sqr(self) -> f64 {
        self.alpha * self.alpha + self.beta * self.beta
    }

    pub fn dot(self, other: Self) -> f64 {
        self.alpha * other.alpha + self.beta * other.beta
    }

    /// z-component of `self × other`.
    pub fn cross(self, other: Self) -> f64 {
        self.alpha * other.beta - self.beta * other.alpha
    }

    /// Rotation by +90°.
    pub fn rotate_quarter(self) -> Self {
        Self::new(-self.beta, self.alpha)
    }

    pub fn is_finite(self) -> bool {
        self.alpha.is_finite() && self.beta.is_finite()
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.alpha, self.beta)
    }

    pub fn from_complex(z: Complex64) -> Self {
        Self::new(z.re, z.im)
    }
}

impl Add for AlphaBeta {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.alpha + rhs.alpha, self.beta + rhs.beta)
    }
}

impl AddAssign for AlphaBeta {
    fn add_assign(&mut self, rhs: Self) {
        self.alpha += rhs.alpha;
        self.beta += rhs.beta;
    }
}

impl Sub for AlphaBeta {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.alpha - rhs.alpha, self.beta - rhs.beta)
    }
}

impl Neg for AlphaBeta {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.alpha, -self.beta)
    }
}

impl Mul<f64> for AlphaBeta {
    type Output = Self;
    fn mul(self, k: f64) -> Self {
        Self::new(self.alpha * k, self.beta * k)
    }
}

/// Rotating-frame components together with the angle they were taken at.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Dq {
    pub d: f64,
    pub q: f64,
    pub theta: f64,
}

impl Dq {
    pub fn norm(self) -> f64 {
        self.d.hypot(self.q)
    }
}

pub fn clarke(x: ThreePhase) -> AlphaBeta {
    AlphaBeta {
        alpha: (2.0 / 3.0) * (x.a - 0.5 * x.b - 0.5 * x.c),
        beta: (2.0 / 3.0) * (SQRT_3 / 2.0) * (x.b - x.c),
    }
}

pub fn inverse_clarke(x: AlphaBeta) -> ThreePhase {
    let half_beta = 0.5 * SQRT_3 * x.beta;
    ThreePhase {
        a: x.alpha,
        b: -0.5 * x.alpha + half_beta,
        c: -0.5 * x.alpha - half_beta,
    }
}

pub fn park(x: AlphaBeta, theta: f64) -> Dq {
    let (s, c) = theta.sin_cos();
    Dq {
        d: x.alpha * c + x.beta * s,
        q: -x.alpha * s + x.beta * c,
        theta,
    }
}

pub fn inverse_park(x: Dq, theta: f64) -> AlphaBeta {
    let (s, c) = theta.sin_cos();
    AlphaBeta {
        alpha: x.d * c - x.q * s,
        beta: x.d * s + x.q * c,
    }
}

/// Three-phase instantaneous active and reactive power.
///
/// Positive `P` flows from converter to grid, positive `Q` is a lagging
/// (inductive) current injection.
pub fn instantaneous_pq(v: AlphaBeta, i: AlphaBeta) -> (f64, f64) {
    (1.5 * v.dot(i), 1.5 * i.cross(v))
}

/// [`instantaneous_pq`] expressed on a [`PerUnitBase`], for per-unit `v` and `i`.
pub fn instantaneous_pq_pu(v: AlphaBeta, i: AlphaBeta) -> (f64, f64) {
    let (p, q) = instantaneous_pq(v, i);
    (p / 1.5, q / 1.5)
}

/// Wraps an angle onto (−π, π].
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta % (2.0 * PI);
    if t <= -PI {
        t += 2.0 * PI;
    } else if t > PI {
        t -= 2.0 * PI;
    }
    t
}
