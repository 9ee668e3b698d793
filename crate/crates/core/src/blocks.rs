//! Discrete-time control primitives.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::framework::AlphaBeta;

/// PI regulator with trapezoidal integration and conditional-integration
/// anti-windup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiController {
    pub k_p: f64,
    pub k_i: f64,
    pub integrator: f64,
    pub limits: Option<(f64, f64)>,
    prev_error: Option<f64>,
}

impl PiController {
    pub fn new(k_p: f64, k_i: f64) -> Self {
        Self { k_p, k_i, integrator: 0.0, limits: None, prev_error: None }
    }

    pub fn with_limits(mut self, lo: f64, hi: f64) -> Self {
        self.limits = Some((lo, hi));
        self
    }

    pub fn with_integrator(mut self, value: f64) -> Self {
        self.integrator = value;
        self
    }

    /// The first sample seeds the trapezoid, so a constant error integrates
    /// exactly.
    pub fn step(&mut self, error: f64, dt: f64) -> f64 {
        let prev = self.prev_error.unwrap_or(error);
        self.prev_error = Some(error);
        let candidate = self.integrator + 0.5 * self.k_i * (error + prev) * dt;
        let raw = self.k_p * error + candidate;
        match self.limits {
            None => {
                self.integrator = candidate;
                raw
            }
            Some((lo, hi)) => {
                let pushing_out = (raw > hi && error * self.k_i > 0.0) || (raw < lo && error * self.k_i < 0.0);
                if !pushing_out {
                    self.integrator = candidate;
                }
                (self.k_p * error + self.integrator).clamp(lo, hi)
            }
        }
    }

    /// Output for the given error without advancing the state.
    pub fn peek(&self, error: f64) -> f64 {
        let out = self.k_p * error + self.integrator;
        match self.limits {
            Some((lo, hi)) => out.clamp(lo, hi),
            None => out,
        }
    }
}

/// Proportional-resonant controller, `k_p + k_r·s/(s² + ω0²)`.
///
/// The resonator is the bilinear transform with prewarping at `ω0`, realised
/// as a rotation so the free response has constant state norm and the poles
/// sit at `e^{±jω0·dt}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrController {
    pub k_p: f64,
    pub k_r: f64,
    pub omega_0: f64,
    pub dt: f64,
    cos: f64,
    sin: f64,
    /// Feedthrough of the resonator.
    b0: f64,
    state: [f64; 2],
}

impl PrController {
    pub fn new(k_p: f64, k_r: f64, omega_0: f64, dt: f64) -> Self {
        let phi = omega_0 * dt;
        let c = omega_0 / (0.5 * phi).tan();
        let b0 = k_r * c / (c * c + omega_0 * omega_0);
        Self {
            k_p,
            k_r,
            omega_0,
            dt,
            cos: phi.cos(),
            sin: phi.sin(),
            b0,
            state: [0.0; 2],
        }
    }

    fn resonator_output(&self, error: f64) -> f64 {
        2.0 * self.b0 * (self.cos * self.state[0] - self.sin * self.state[1]) + self.b0 * error
    }

    pub fn step(&mut self, error: f64) -> f64 {
        let out = self.k_p * error + self.resonator_output(error);
        let [x0, x1] = self.state;
        self.state = [self.cos * x0 - self.sin * x1 + error, self.sin * x0 + self.cos * x1];
        out
    }

    pub fn state(&self) -> [f64; 2] {
        self.state
    }

    pub fn state_norm(&self) -> f64 {
        self.state[0].hypot(self.state[1])
    }

    /// Discrete poles of the resonator as (modulus, angle).
    pub fn poles(&self) -> (f64, f64) {
        (self.cos.hypot(self.sin), self.sin.atan2(self.cos))
    }

    /// Loads the resonator so that with zero error it emits `y0` now and `y1`
    /// one sample later.
    pub fn set_free_response(&mut self, y0: f64, y1: f64) {
        // y_k = C A^k x, C = 2·b0·[cos, −sin]; C·A = 2·b0·[cos 2φ, −sin 2φ].
        let (c, s) = (self.cos, self.sin);
        let (c2, s2) = (c * c - s * s, 2.0 * s * c);
        let g = 2.0 * self.b0;
        let det = g * g * (c * (-s2) - (-s) * c2);
        let x0 = g * (y0 * (-s2) - (-s) * y1) / det;
        let x1 = g * (c * y1 - c2 * y0) / det;
        self.state = [x0, x1];
    }

    pub fn reset(&mut self) {
        self.state = [0.0; 2];
    }
}

/// Slope-limited tracker with independent rise and fall rates (units/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateLimiter {
    pub value: f64,
    pub up_slope: f64,
    pub down_slope: f64,
}

impl RateLimiter {
    pub fn new(value: f64, up_slope: f64, down_slope: f64) -> Self {
        Self { value, up_slope, down_slope }
    }

    pub fn step(&mut self, target: f64, dt: f64) -> f64 {
        let delta = target - self.value;
        let reach = if delta >= 0.0 { self.up_slope * dt } else { self.down_slope * dt };
        // Snap when within one step's travel, allowing for rounding in the
        // accumulated ramp.
        if delta.abs() <= reach * (1.0 + 1e-9) {
            self.value = target;
        } else {
            self.value += reach.copysign(delta);
        }
        self.value
    }
}

/// Output of [`SequenceSeparator::step`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SequenceComponents {
    pub v_plus: AlphaBeta,
    pub v_minus: AlphaBeta,
    pub mag_plus: f64,
    pub mag_minus: f64,
    /// False until a full quarter period of history is available.
    pub settled: bool,
}

/// Positive/negative sequence separation by quarter-period delayed signal
/// cancellation.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSeparator {
    delay: VecDeque<AlphaBeta>,
    len: usize,
    seen: usize,
    last: SequenceComponents,
}

impl SequenceSeparator {
    /// Quarter-period delay at the given sampling and fundamental frequency.
    pub fn new(f_s: f64, f_0: f64) -> Self {
        let len = ((f_s / (4.0 * f_0)).round() as usize).max(1);
        Self { delay: VecDeque::from(vec![AlphaBeta::ZERO; len]), len, seen: 0, last: SequenceComponents::default() }
    }

    pub fn delay_len(&self) -> usize {
        self.len
    }

    /// Fills the delay line with a known history, oldest sample first.
    pub fn prime(&mut self, history: impl IntoIterator<Item = AlphaBeta>) {
        for v in history {
            self.push(v);
        }
    }

    fn push(&mut self, v: AlphaBeta) -> AlphaBeta {
        self.delay.push_back(v);
        self.seen += 1;
        self.delay.pop_front().expect("delay line is never empty")
    }

    pub fn step(&mut self, v: AlphaBeta) -> SequenceComponents {
        let delayed = self.push(v).rotate_quarter();
        let v_plus = (v + delayed) * 0.5;
        let v_minus = (v - delayed) * 0.5;
        self.last = SequenceComponents {
            v_plus,
            v_minus,
            mag_plus: v_plus.norm(),
            mag_minus: v_minus.norm(),
            settled: self.seen > self.len,
        };
        self.last
    }

    pub fn last(&self) -> SequenceComponents {
        self.last
    }
}
