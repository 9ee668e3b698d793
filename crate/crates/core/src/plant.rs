//! Average-value converter, LCL filter and Thevenin grid with a symmetrical
//! retained-voltage fault.
//!
//! Everything is per-unit with inductances and capacitances expressed as
//! their reactance/susceptance at the nominal frequency, so the state
//! equations carry an explicit `ω0`:
//!
//! ```text
//! (l_cf/ω0)·di_c/dt          = v_conv − v_cf − r·i_c
//! (c_f/ω0)·dv_cf/dt          = i_c − i_g
//! ((l_gf + l_grid)/ω0)·di_g/dt = v_cf − e_grid − r·i_g
//! ```
//!
//! α and β are decoupled and share the same system matrix. Integration is
//! trapezoidal.

use nalgebra::{Matrix3, Matrix3x2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::framework::AlphaBeta;
use crate::Error;

/// Admissible range of the Thevenin line reactance (pu).
pub const Z_LINE_MIN: f64 = 0.02;
pub const Z_LINE_MAX: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantParams {
    /// Converter-side inductance (pu).
    pub l_cf: f64,
    /// Grid-side inductance (pu).
    pub l_gf: f64,
    /// Filter capacitance (pu).
    pub c_f: f64,
    /// Series resistance of each filter inductor (pu).
    pub r_parasitic: f64,
    /// Thevenin line reactance (pu), in addition to `l_gf`.
    pub z_line: f64,
    /// Thevenin voltage magnitude outside the fault (pu).
    pub grid_v: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            l_cf: 0.05,
            l_gf: 0.06,
            c_f: 0.02,
            r_parasitic: 0.005,
            z_line: 0.2,
            grid_v: 1.0,
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<(), Error> {
        for (name, v) in [
            ("plant.l_cf", self.l_cf),
            ("plant.l_gf", self.l_gf),
            ("plant.c_f", self.c_f),
            ("plant.grid_v", self.grid_v),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, "must be finite and strictly positive"));
            }
        }
        if !(self.r_parasitic.is_finite() && self.r_parasitic >= 0.0) {
            return Err(Error::invalid("plant.r_parasitic", "must be finite and non-negative"));
        }
        if !(Z_LINE_MIN..=Z_LINE_MAX).contains(&self.z_line) {
            return Err(Error::invalid(
                "plant.z_line",
                format!("must lie within [{Z_LINE_MIN}, {Z_LINE_MAX}] pu, got {}", self.z_line),
            ));
        }
        Ok(())
    }
}

/// Symmetrical fault applied by swapping the Thevenin source for a
/// retained-voltage source behind the fault impedance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSchedule {
    pub t_fault_on: f64,
    pub t_fault_clear: f64,
    #[serde(default = "FaultSchedule::default_retained_voltage")]
    pub retained_voltage: f64,
    #[serde(default = "FaultSchedule::default_fault_impedance")]
    pub fault_impedance: f64,
}

impl FaultSchedule {
    fn default_retained_voltage() -> f64 {
        0.3
    }

    fn default_fault_impedance() -> f64 {
        0.04
    }

    pub fn new(t_fault_on: f64, t_fault_clear: f64) -> Self {
        Self {
            t_fault_on,
            t_fault_clear,
            retained_voltage: Self::default_retained_voltage(),
            fault_impedance: Self::default_fault_impedance(),
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.t_fault_on.is_finite() && self.t_fault_on >= 0.0) {
            return Err(Error::invalid("fault.t_fault_on", "must be finite and non-negative"));
        }
        if !(self.t_fault_clear.is_finite() && self.t_fault_on < self.t_fault_clear) {
            return Err(Error::invalid("fault.t_fault_clear", "must be later than fault.t_fault_on"));
        }
        if !(0.0..=1.0).contains(&self.retained_voltage) {
            return Err(Error::invalid("fault.retained_voltage", "must lie within [0, 1] pu"));
        }
        if !(self.fault_impedance.is_finite() && self.fault_impedance > 0.0) {
            return Err(Error::invalid("fault.fault_impedance", "must be strictly positive"));
        }
        Ok(())
    }

    pub fn is_active(&self, t: f64) -> bool {
        t >= self.t_fault_on && t < self.t_fault_clear
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub i_c: AlphaBeta,
    pub v_cf: AlphaBeta,
    pub i_g: AlphaBeta,
    pub t: f64,
}

impl PlantState {
    pub fn is_finite(&self) -> bool {
        self.i_c.is_finite() && self.v_cf.is_finite() && self.i_g.is_finite() && self.t.is_finite()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PlantMeasurements {
    pub v_pcc: AlphaBeta,
    pub v_cf: AlphaBeta,
    pub i_c: AlphaBeta,
    pub i_g: AlphaBeta,
    pub e_grid: AlphaBeta,
    pub t: f64,
}

/// Line reactance of a grid with the given short-circuit ratio.
pub fn scr_to_impedance(scr: f64) -> Result<f64, Error> {
    if !(scr.is_finite() && scr > 1.0) {
        return Err(Error::invalid("scr", format!("must be finite and greater than 1, got {scr}")));
    }
    Ok(1.0 / scr)
}

/// Thevenin voltage and reactance seen at time `t`.
pub fn thevenin_source(
    t: f64,
    fault: Option<&FaultSchedule>,
    params: &PlantParams,
    omega_0: f64,
) -> (AlphaBeta, f64) {
    let (mag, z) = source_mode(t, fault, params);
    (AlphaBeta::from_polar(mag, omega_0 * t), z)
}

fn source_mode(t: f64, fault: Option<&FaultSchedule>, params: &PlantParams) -> (f64, f64) {
    match fault {
        Some(f) if f.is_active(t) => (f.retained_voltage, f.fault_impedance),
        _ => (params.grid_v, params.z_line),
    }
}

/// Trapezoidal update matrices for one value of the Thevenin reactance.
#[derive(Debug, Clone)]
struct Discretization {
    state: Matrix3<f64>,
    input: Matrix3x2<f64>,
}

impl Discretization {
    fn new(params: &PlantParams, z_grid: f64, omega_0: f64, dt: f64) -> Self {
        let (a, b) = system_matrices(params, z_grid, omega_0);
        let h = 0.5 * dt;
        let lhs = Matrix3::identity() - a * h;
        let inv = lhs
            .try_inverse()
            .expect("trapezoidal system matrix of a passive network is invertible");
        Self {
            state: inv * (Matrix3::identity() + a * h),
            input: inv * b * h,
        }
    }
}

fn system_matrices(params: &PlantParams, z_grid: f64, w: f64) -> (Matrix3<f64>, Matrix3x2<f64>) {
    let r = params.r_parasitic;
    let l1 = params.l_cf;
    let c = params.c_f;
    let l2 = params.l_gf + z_grid;
    let a = Matrix3::new(
        -r * w / l1, -w / l1, 0.0,
        w / c, 0.0, -w / c,
        0.0, w / l2, -r * w / l2,
    );
    let b = Matrix3x2::new(
        w / l1, 0.0,
        0.0, 0.0,
        0.0, -w / l2,
    );
    (a, b)
}

/// The electrical network with its fault schedule and a fixed substep.
#[derive(Debug, Clone)]
pub struct Plant {
    params: PlantParams,
    fault: Option<FaultSchedule>,
    omega_0: f64,
    dt: f64,
    normal: Discretization,
    faulted: Option<Discretization>,
}

impl Plant {
    pub fn new(
        params: PlantParams,
        fault: Option<FaultSchedule>,
        omega_0: f64,
        dt: f64,
    ) -> Result<Self, Error> {
        params.validate()?;
        if let Some(f) = &fault {
            f.validate()?;
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid("dt", "plant substep must be strictly positive"));
        }
        let normal = Discretization::new(&params, params.z_line, omega_0, dt);
        let faulted = fault.map(|f| Discretization::new(&params, f.fault_impedance, omega_0, dt));
        Ok(Self { params, fault, omega_0, dt, normal, faulted })
    }

    pub fn params(&self) -> &PlantParams {
        &self.params
    }

    pub fn fault(&self) -> Option<&FaultSchedule> {
        self.fault.as_ref()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances one substep with `v_conv` held constant.
    pub fn step(&self, state: &PlantState, v_conv: AlphaBeta) -> PlantState {
        self.step_with_input(state, v_conv, v_conv)
    }

    /// Advances one substep with the converter voltage given at both ends of
    /// the interval (trapezoidal input). The source mode is the one active at
    /// the midpoint of the step, so switching instants on the substep grid are
    /// reproduced exactly.
    pub fn step_with_input(&self, state: &PlantState, v_start: AlphaBeta, v_end: AlphaBeta) -> PlantState {
        let t0 = state.t;
        let t1 = t0 + self.dt;
        let t_mid = t0 + 0.5 * self.dt;
        let (mag, _) = source_mode(t_mid, self.fault.as_ref(), &self.params);
        let disc = match (&self.fault, &self.faulted) {
            (Some(f), Some(d)) if f.is_active(t_mid) => d,
            _ => &self.normal,
        };
        let e0 = AlphaBeta::from_polar(mag, self.omega_0 * t0);
        let e1 = AlphaBeta::from_polar(mag, self.omega_0 * t1);

        let axis = |x: Vector3<f64>, u: Vector2<f64>| disc.state * x + disc.input * u;
        let xa = axis(
            Vector3::new(state.i_c.alpha, state.v_cf.alpha, state.i_g.alpha),
            Vector2::new(v_start.alpha + v_end.alpha, e0.alpha + e1.alpha),
        );
        let xb = axis(
            Vector3::new(state.i_c.beta, state.v_cf.beta, state.i_g.beta),
            Vector2::new(v_start.beta + v_end.beta, e0.beta + e1.beta),
        );
        PlantState {
            i_c: AlphaBeta::new(xa[0], xb[0]),
            v_cf: AlphaBeta::new(xa[1], xb[1]),
            i_g: AlphaBeta::new(xa[2], xb[2]),
            t: t1,
        }
    }

    /// Samples the network. The PCC sits between the grid-side filter
    /// inductor and the Thevenin reactance.
    pub fn measure(&self, state: &PlantState) -> PlantMeasurements {
        let (e, z) = thevenin_source(state.t, self.fault.as_ref(), &self.params, self.omega_0);
        let drop = state.v_cf - e - state.i_g * self.params.r_parasitic;
        let v_pcc = e + drop * (z / (self.params.l_gf + z));
        PlantMeasurements {
            v_pcc,
            v_cf: state.v_cf,
            i_c: state.i_c,
            i_g: state.i_g,
            e_grid: e,
            t: state.t,
        }
    }

    /// Magnetic plus electric energy stored in the network, in per-unit
    /// seconds, with the Thevenin reactance active at `state.t`.
    pub fn stored_energy(&self, state: &PlantState) -> f64 {
        let (_, z) = source_mode(state.t, self.fault.as_ref(), &self.params);
        0.5 / self.omega_0
            * (self.params.l_cf * state.i_c.norm_sqr()
                + self.params.c_f * state.v_cf.norm_sqr()
                + (self.params.l_gf + z) * state.i_g.norm_sqr())
    }
}

/// One-shot form of [`Plant::step`] followed by [`Plant::measure`].
pub fn plant_step(
    state: &PlantState,
    v_conv: AlphaBeta,
    fault: Option<&FaultSchedule>,
    params: &PlantParams,
    omega_0: f64,
    dt: f64,
) -> Result<(PlantState, PlantMeasurements), Error> {
    let plant = Plant::new(*params, fault.copied(), omega_0, dt)?;
    let next = plant.step(state, v_conv);
    if !next.is_finite() {
        return Err(Error::Diverged { t: next.t, reason: "plant state became non-finite".into() });
    }
    Ok((next, plant.measure(&next)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    const W0: f64 = 2.0 * PI * 50.0;

    #[test]
    fn scr_examples() {
        assert_abs_diff_eq!(scr_to_impedance(5.0).unwrap(), 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(scr_to_impedance(2.0).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(scr_to_impedance(50.0).unwrap(), 0.02, epsilon = 1e-15);
        assert!(scr_to_impedance(1.0).is_err());
        assert!(scr_to_impedance(0.5).is_err());
    }

    #[test]
    fn source_switches_magnitude_and_impedance() {
        let params = PlantParams { z_line: scr_to_impedance(5.0).unwrap(), ..Default::default() };
        let fault = FaultSchedule::new(0.1, 0.2);
        let (e, z) = thevenin_source(0.05, Some(&fault), &params, W0);
        assert_abs_diff_eq!(e.norm(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.beta.atan2(e.alpha), crate::framework::wrap_angle(W0 * 0.05), epsilon = 1e-9);
        assert_eq!(z, 0.2);
        let (e, z) = thevenin_source(0.15, Some(&fault), &params, W0);
        assert_abs_diff_eq!(e.norm(), 0.3, epsilon = 1e-12);
        assert_eq!(z, 0.04);
        let (_, z) = thevenin_source(0.2, Some(&fault), &params, W0);
        assert_eq!(z, 0.2);
    }

    #[test]
    fn degenerate_fault_matches_no_fault() {
        let params = PlantParams::default();
        let fault = FaultSchedule {
            t_fault_on: 0.0,
            t_fault_clear: 1.0,
            retained_voltage: params.grid_v,
            fault_impedance: params.z_line,
        };
        for k in 0..50 {
            let t = k as f64 * 0.013;
            assert_eq!(
                thevenin_source(t, Some(&fault), &params, W0),
                thevenin_source(t, None, &params, W0)
            );
        }
    }

    #[test]
    fn source_angle_is_continuous_across_fault_instants() {
        let params = PlantParams::default();
        let fault = FaultSchedule::new(0.1, 0.25);
        for t in [fault.t_fault_on, fault.t_fault_clear] {
            let (before, _) = thevenin_source(t - 1e-9, Some(&fault), &params, W0);
            let (after, _) = thevenin_source(t, Some(&fault), &params, W0);
            let jump = before.cross(after).atan2(before.dot(after));
            assert!(jump.abs() < 1e-6, "angle jump {jump} at {t}");
        }
    }

    #[test]
    fn passive_network_does_not_gain_energy() {
        let params = PlantParams { grid_v: 1.0, ..Default::default() };
        let fault = FaultSchedule { t_fault_on: 0.0, t_fault_clear: 10.0, retained_voltage: 0.0, fault_impedance: 0.2 };
        let plant = Plant::new(params, Some(fault), W0, 1e-5).unwrap();
        let mut s = PlantState {
            i_c: AlphaBeta::new(0.8, -0.3),
            v_cf: AlphaBeta::new(0.2, 0.9),
            i_g: AlphaBeta::new(-0.4, 0.1),
            t: 0.0,
        };
        let mut energy = plant.stored_energy(&s);
        for _ in 0..5000 {
            s = plant.step(&s, AlphaBeta::ZERO);
            let e = plant.stored_energy(&s);
            assert!(e <= energy * (1.0 + 1e-12));
            energy = e;
        }
    }

    #[test]
    fn zero_state_zero_input_stays_zero() {
        let params = PlantParams::default();
        let fault = FaultSchedule { retained_voltage: 0.0, ..FaultSchedule::new(0.0, 1.0) };
        let (s, m) = plant_step(&PlantState::default(), AlphaBeta::ZERO, Some(&fault), &params, W0, 1e-5).unwrap();
        assert_eq!(s.i_g, AlphaBeta::ZERO);
        assert_eq!(m.v_pcc, AlphaBeta::ZERO);
    }

    #[test]
    fn validation_rejects_bad_params() {
        let bad = PlantParams { z_line: 0.6, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = PlantParams { c_f: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        assert!(FaultSchedule::new(0.3, 0.2).validate().is_err());
        assert!(FaultSchedule { retained_voltage: 1.2, ..FaultSchedule::new(0.1, 0.2) }.validate().is_err());
        assert!(FaultSchedule { fault_impedance: 0.0, ..FaultSchedule::new(0.1, 0.2) }.validate().is_err());
    }
}
