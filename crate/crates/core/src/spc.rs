//! Synchronous power controller: droop references, power loop (PLC),
//! reactive power loop (RPC), virtual admittance, circular current limiter
//! and PR current control.
//!
//! [`SpcParams`] carries the controller constants in the units they are
//! usually quoted in (W, var, V, H, Ω). [`SpcTuning`] is the per-unit form the
//! control path runs on.

use serde::{Deserialize, Serialize};

use crate::blocks::{PiController, PrController};
use crate::framework::{instantaneous_pq_pu, park, wrap_angle, AlphaBeta, Dq, PerUnitBase};
use crate::plant::PlantMeasurements;
use crate::Error;

/// Which measured current the PR controllers regulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurrentFeedback {
    /// Grid-side (PCC) current. With the default current-controller gains
    /// this loop leaves the LCL resonance undamped and the run diverges.
    Grid,
    /// Converter-side inductor current.
    #[default]
    Converter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpcParams {
    /// Active droop gain (W per rad/s).
    pub d_p: f64,
    /// Reactive droop gain (var/V).
    pub d_q: f64,
    /// Virtual resistance (pu).
    pub r_v: f64,
    /// Virtual inductance (pu).
    pub l_v: f64,
    /// Current controller proportional gain (Ω).
    pub k_p_cc: f64,
    /// Current controller resonant gain (Ω/s).
    pub k_r_cc: f64,
    /// Inertia constant (s).
    pub h: f64,
    pub zeta: f64,
    /// PLC proportional gain (rad/s per W).
    pub k_pp: f64,
    /// PLC integral gain (rad/s² per W).
    pub k_ip: f64,
    pub rpc_zeta: f64,
    /// RPC natural frequency (rad/s).
    pub rpc_omega_n: f64,
    /// Equivalent coupling inductance for RPC design (H).
    pub l_eq: f64,
    /// Nominal EMF (V, phase peak).
    pub e_en: f64,
    /// Current limit (pu).
    pub i_lim: f64,
    /// Linearised power-transfer gain (W/rad). Derived from `e_en` and `l_eq`
    /// when absent.
    pub p_max: Option<f64>,
    /// Upper EMF clamp as a multiple of `e_en`.
    pub e_max_ratio: f64,
    /// Nominal PCC voltage magnitude for the reactive droop (pu).
    pub v_star: f64,
    pub current_feedback: CurrentFeedback,
}

impl Default for SpcParams {
    fn default() -> Self {
        Self {
            d_p: 0.0,
            d_q: 108.0,
            r_v: 0.107,
            l_v: 0.375,
            k_p_cc: 25.0,
            k_r_cc: 2000.0,
            h: 2.0,
            zeta: 0.5627,
            k_pp: 1.16e-3,
            k_ip: 5.86e-3,
            rpc_zeta: 0.5627,
            rpc_omega_n: 25.45,
            l_eq: 29.5e-3,
            e_en: 400.0,
            i_lim: 1.2,
            p_max: None,
            e_max_ratio: 1.3,
            v_star: 1.0,
            current_feedback: CurrentFeedback::default(),
        }
    }
}

impl SpcParams {
    pub fn validate(&self) -> Result<(), Error> {
        let positive = [
            ("spc.r_v", self.r_v),
            ("spc.l_v", self.l_v),
            ("spc.k_p_cc", self.k_p_cc),
            ("spc.k_r_cc", self.k_r_cc),
            ("spc.h", self.h),
            ("spc.zeta", self.zeta),
            ("spc.k_pp", self.k_pp),
            ("spc.k_ip", self.k_ip),
            ("spc.rpc_zeta", self.rpc_zeta),
            ("spc.rpc_omega_n", self.rpc_omega_n),
            ("spc.l_eq", self.l_eq),
            ("spc.e_en", self.e_en),
            ("spc.i_lim", self.i_lim),
            ("spc.v_star", self.v_star),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, "must be finite and strictly positive"));
            }
        }
        for (name, v) in [("spc.d_p", self.d_p), ("spc.d_q", self.d_q)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, "must be finite and non-negative"));
            }
        }
        if let Some(p) = self.p_max {
            if !(p.is_finite() && p > 0.0) {
                return Err(Error::invalid("spc.p_max", "must be finite and strictly positive"));
            }
        }
        if !(self.e_max_ratio.is_finite() && self.e_max_ratio > 1.0) {
            return Err(Error::invalid("spc.e_max_ratio", "must exceed 1"));
        }
        if !(2.0..=5.0).contains(&self.h) {
            log::warn!("inertia constant h = {} s lies outside the usual 2-5 s range", self.h);
        }
        Ok(())
    }

    /// Power-transfer gain `(3/2)·E·V/X` at nominal EMF across `ω0·l_eq`.
    pub fn p_max_or_derived(&self, omega_0: f64) -> f64 {
        self.p_max
            .unwrap_or_else(|| 1.5 * self.e_en * self.e_en / (omega_0 * self.l_eq))
    }

    pub fn to_per_unit(&self, base: &PerUnitBase) -> Result<SpcTuning, Error> {
        self.validate()?;
        base.validate()?;
        let (s, v, z) = (base.s_base, base.v_base, base.z_base());
        let x_eq = base.omega_0 * self.l_eq;
        let g_q = rpc_linearized_gain(self.e_en, self.e_en, x_eq);
        let rpc = second_order_pi(self.rpc_zeta, self.rpc_omega_n, g_q);
        let e_nom = self.e_en / v;
        Ok(SpcTuning {
            omega_0: base.omega_0,
            d_p: self.d_p / s,
            d_q: self.d_q * v / s,
            r_v: self.r_v,
            l_v: self.l_v,
            k_p_cc: self.k_p_cc / z,
            k_r_cc: self.k_r_cc / z,
            k_pp: self.k_pp * s,
            k_ip: self.k_ip * s,
            k_pq: rpc.0 * s / v,
            k_iq: rpc.1 * s / v,
            e_nom,
            e_max: self.e_max_ratio * e_nom,
            i_lim: self.i_lim,
            v_star: self.v_star,
            current_feedback: self.current_feedback,
        })
    }
}

/// Per-unit controller constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpcTuning {
    pub omega_0: f64,
    /// pu power per rad/s.
    pub d_p: f64,
    /// pu reactive power per pu voltage.
    pub d_q: f64,
    pub r_v: f64,
    pub l_v: f64,
    pub k_p_cc: f64,
    pub k_r_cc: f64,
    /// rad/s per pu power.
    pub k_pp: f64,
    /// rad/s² per pu power.
    pub k_ip: f64,
    /// pu EMF per pu reactive power.
    pub k_pq: f64,
    pub k_iq: f64,
    pub e_nom: f64,
    pub e_max: f64,
    pub i_lim: f64,
    pub v_star: f64,
    pub current_feedback: CurrentFeedback,
}

/// Power references from frequency and voltage droop.
#[allow(clippy::too_many_arguments)]
pub fn droop_references(
    p_s: f64,
    q_s: f64,
    omega_star: f64,
    omega: f64,
    v_star: f64,
    v_pcc_mag: f64,
    d_p: f64,
    d_q: f64,
) -> (f64, f64) {
    (p_s + (omega_star - omega) * d_p, q_s + (v_star - v_pcc_mag) * d_q)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlcGains {
    pub k_pp: f64,
    pub k_ip: f64,
    /// Natural frequency of the closed power loop, `√(k_ip·p_max)`.
    pub omega_n: f64,
}

/// PLC gains that give the closed power loop the second-order response of
/// a machine with inertia `h` and damping ratio `zeta`.
pub fn plc_gains(h: f64, zeta: f64, s_n: f64, p_max: f64, omega_0: f64) -> Result<PlcGains, Error> {
    for (name, v) in [("h", h), ("zeta", zeta), ("s_n", s_n), ("p_max", p_max), ("omega_0", omega_0)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::invalid(name, "must be finite and strictly positive"));
        }
    }
    let k_ip = omega_0 / (2.0 * h * s_n);
    let k_pp = zeta * (2.0 * omega_0 / (h * s_n * p_max)).sqrt();
    let omega_n = (k_ip * p_max).sqrt();
    debug_assert!(((2.0 * zeta * omega_n) - k_pp * p_max).abs() <= 1e-9 * k_pp * p_max);
    Ok(PlcGains { k_pp, k_ip, omega_n })
}

/// `∂Q/∂E` of `Q = (3/2)(E² − E·V_g)/X` at `δ = 0`.
pub fn rpc_linearized_gain(e: f64, v_g: f64, x: f64) -> f64 {
    1.5 * (2.0 * e - v_g) / x
}

/// `(k_p, k_i)` placing the loop `(k_p s + k_i)·g/(s² + k_p g s + k_i g)` at
/// the given damping ratio and natural frequency.
pub fn second_order_pi(zeta: f64, omega_n: f64, plant_gain: f64) -> (f64, f64) {
    (2.0 * zeta * omega_n / plant_gain, omega_n * omega_n / plant_gain)
}

/// Power loop: PI from active-power error to frequency deviation, integrated
/// into the EMF angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLoop {
    pub pi: PiController,
    pub omega_0: f64,
    pub omega: f64,
    pub theta: f64,
}

impl PowerLoop {
    pub fn new(k_pp: f64, k_ip: f64, omega_0: f64, theta: f64) -> Self {
        Self { pi: PiController::new(k_pp, k_ip), omega_0, omega: omega_0, theta: wrap_angle(theta) }
    }

    /// Returns the frequency for this period and the angle to use for the
    /// EMF now; the stored angle then advances by exactly `ω·dt`.
    pub fn step(&mut self, p_ref: f64, p_meas: f64, dt: f64) -> (f64, f64) {
        self.omega = self.omega_0 + self.pi.step(p_ref - p_meas, dt);
        let theta = self.theta;
        self.theta = wrap_angle(theta + self.omega * dt);
        (self.omega, theta)
    }
}

/// Reactive power loop: PI from reactive-power error to the rate of change
/// of the EMF magnitude, integrated and clamped to `[0, e_max]`. Against a
/// static gain `∂Q/∂E` this is the same second-order structure as the PLC.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReactiveLoop {
    pub pi: PiController,
    pub e_mag: f64,
    pub e_max: f64,
}

impl ReactiveLoop {
    pub fn new(k_pq: f64, k_iq: f64, e_mag: f64, e_max: f64) -> Self {
        Self { pi: PiController::new(k_pq, k_iq), e_mag, e_max }
    }

    /// EMF magnitude for this period; the integrator freezes while the
    /// clamp is holding against the error.
    pub fn step(&mut self, q_ref: f64, q_meas: f64, dt: f64) -> f64 {
        let held = self.pi.integrator;
        let rate = self.pi.step(q_ref - q_meas, dt);
        let next = self.e_mag + rate * dt;
        if (next > self.e_max && rate > 0.0) || (next < 0.0 && rate < 0.0) {
            self.pi.integrator = held;
        }
        self.e_mag = next.clamp(0.0, self.e_max);
        self.e_mag
    }
}

/// `i = u/(r + s·l/ω0)` per axis, trapezoidal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirtualAdmittance {
    pub omega_0: f64,
    pub current: AlphaBeta,
    prev_input: Option<AlphaBeta>,
}

impl VirtualAdmittance {
    pub fn new(omega_0: f64) -> Self {
        Self { omega_0, current: AlphaBeta::ZERO, prev_input: None }
    }

    pub fn with_state(omega_0: f64, current: AlphaBeta, prev_input: AlphaBeta) -> Self {
        Self { omega_0, current, prev_input: Some(prev_input) }
    }

    /// `e − v_pcc` in, current reference out. `r` is read every call.
    pub fn step(&mut self, e: AlphaBeta, v_pcc: AlphaBeta, r: f64, l: f64, dt: f64) -> AlphaBeta {
        let u = e - v_pcc;
        let u_prev = self.prev_input.unwrap_or(u);
        self.prev_input = Some(u);
        let tau_h = l / (self.omega_0 * dt);
        self.current = (self.current * (tau_h - 0.5 * r) + (u + u_prev) * 0.5) * (1.0 / (tau_h + 0.5 * r));
        self.current
    }
}

/// Scales `i_ref` onto the circle of radius `i_lim` when it lies outside,
/// preserving direction. The output norm never exceeds `i_lim`, rounding
/// included.
pub fn circular_limit(i_ref: AlphaBeta, i_lim: f64) -> AlphaBeta {
    let mag = i_ref.norm();
    if mag <= i_lim {
        return i_ref;
    }
    let mut scale = i_lim / mag;
    let mut out = i_ref * scale;
    while out.norm() > i_lim {
        scale *= 1.0 - f64::EPSILON;
        out = i_ref * scale;
    }
    out
}

/// Signals produced by one control period.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SpcTelemetry {
    pub p: f64,
    pub q: f64,
    pub omega: f64,
    pub theta: f64,
    pub e_mag: f64,
    pub i_ref_raw: AlphaBeta,
    pub i_ref: AlphaBeta,
    pub i_meas: AlphaBeta,
    pub limiter_active: bool,
    pub v_cmd: AlphaBeta,
}

impl SpcTelemetry {
    pub fn i_ref_raw_dq(&self) -> Dq {
        park(self.i_ref_raw, self.theta)
    }

    pub fn i_ref_dq(&self) -> Dq {
        park(self.i_ref, self.theta)
    }
}

/// The composed controller, one instance per converter.
#[derive(Debug, Clone, PartialEq)]
pub struct SpcController {
    pub tuning: SpcTuning,
    pub plc: PowerLoop,
    pub rpc: ReactiveLoop,
    pub admittance: VirtualAdmittance,
    pub current_control: [PrController; 2],
    pub limiter_active: bool,
    /// Disables the circular limiter; only for comparison runs.
    pub limiter_enabled: bool,
}

impl SpcController {
    pub fn new(tuning: SpcTuning, dt: f64) -> Self {
        let cc = PrController::new(tuning.k_p_cc, tuning.k_r_cc, tuning.omega_0, dt);
        Self {
            plc: PowerLoop::new(tuning.k_pp, tuning.k_ip, tuning.omega_0, 0.0),
            rpc: ReactiveLoop::new(tuning.k_pq, tuning.k_iq, tuning.e_nom, tuning.e_max),
            admittance: VirtualAdmittance::new(tuning.omega_0),
            current_control: [cc, cc],
            limiter_active: false,
            limiter_enabled: true,
            tuning,
        }
    }

    pub fn measured_current(&self, meas: &PlantMeasurements) -> AlphaBeta {
        match self.tuning.current_feedback {
            CurrentFeedback::Grid => meas.i_g,
            CurrentFeedback::Converter => meas.i_c,
        }
    }

    /// One control period: P&Q → PLC/RPC → EMF → virtual admittance →
    /// circular limiter → PR current control → voltage command.
    pub fn step(
        &mut self,
        meas: &PlantMeasurements,
        p_ref: f64,
        q_ref: f64,
        r_v_dyn: f64,
        dt: f64,
    ) -> Result<(AlphaBeta, SpcTelemetry), Error> {
        if !(meas.v_pcc.is_finite() && meas.i_g.is_finite() && meas.i_c.is_finite()) {
            return Err(Error::Diverged { t: meas.t, reason: "non-finite measurement".into() });
        }
        let (p, q) = instantaneous_pq_pu(meas.v_pcc, meas.i_g);
        let (omega, theta) = self.plc.step(p_ref, p, dt);
        let e_mag = self.rpc.step(q_ref, q, dt);
        let emf = AlphaBeta::from_polar(e_mag, theta);

        let i_ref_raw = self.admittance.step(emf, meas.v_pcc, r_v_dyn, self.tuning.l_v, dt);
        let i_ref = if self.limiter_enabled {
            circular_limit(i_ref_raw, self.tuning.i_lim)
        } else {
            i_ref_raw
        };
        self.limiter_active = i_ref != i_ref_raw;

        let i_meas = self.measured_current(meas);
        let err = i_ref - i_meas;
        let [cc_a, cc_b] = &mut self.current_control;
        let v_cmd = meas.v_pcc + AlphaBeta::new(cc_a.step(err.alpha), cc_b.step(err.beta));

        Ok((
            v_cmd,
            SpcTelemetry {
                p,
                q,
                omega,
                theta,
                e_mag,
                i_ref_raw,
                i_ref,
                i_meas,
                limiter_active: self.limiter_active,
                v_cmd,
            },
        ))
    }
}
