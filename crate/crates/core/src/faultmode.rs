//! Fault detection, grid-code power references and dynamic virtual damping.
//!
//! All powers here are per-unit of the converter rating unless a function
//! takes `s_n` explicitly.

use serde::{Deserialize, Serialize};

use crate::blocks::{RateLimiter, SequenceComponents};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaultModeParams {
    /// Positive-sequence voltage below which the fault signal is raised (pu).
    pub v_threshold: f64,
    /// Time the fault signal must persist before entering fault mode (s).
    pub debounce: f64,
    /// Time the voltage must stay restored before leaving fault mode (s).
    pub recovery_hold: f64,
    /// Allowed |P_droop − P_fm| on exit, as a fraction of rating.
    pub p_diff_threshold: f64,
    /// Dynamic damping boost factor `x`; the virtual resistance peaks at `r_v·(1 + x)`.
    pub damping_x: f64,
    /// Hold time of the boosted resistance after the trigger (s).
    pub t_d: f64,
    /// Rise rate of the boosted resistance (pu/s).
    pub prl_slope: f64,
    /// Duration of the ramp back to `r_v` (s).
    pub nrl_ramp_time: f64,
}

impl Default for FaultModeParams {
    fn default() -> Self {
        Self {
            v_threshold: 0.9,
            debounce: 1e-3,
            recovery_hold: 0.15,
            p_diff_threshold: 0.05,
            damping_x: 1.0,
            t_d: 0.05,
            prl_slope: 10_000.0,
            nrl_ramp_time: 0.01,
        }
    }
}

impl FaultModeParams {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.v_threshold > 0.0 && self.v_threshold < 1.0) {
            return Err(Error::invalid("faultmode.v_threshold", "must lie strictly between 0 and 1"));
        }
        for (name, v) in [
            ("faultmode.debounce", self.debounce),
            ("faultmode.recovery_hold", self.recovery_hold),
            ("faultmode.t_d", self.t_d),
            ("faultmode.nrl_ramp_time", self.nrl_ramp_time),
            ("faultmode.prl_slope", self.prl_slope),
            ("faultmode.p_diff_threshold", self.p_diff_threshold),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, "must be finite and strictly positive"));
            }
        }
        if !(self.damping_x.is_finite() && self.damping_x >= 0.0) {
            return Err(Error::invalid("faultmode.damping_x", "must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Mode {
    #[default]
    Normal,
    Fault,
}

impl Mode {
    pub fn is_fault(self) -> bool {
        self == Mode::Fault
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DetectorEvents {
    pub sf: bool,
    pub mode: Mode,
    pub entered_fault: bool,
    pub exited_fault: bool,
    /// Fault signal dropped while in fault mode.
    pub voltage_restored: bool,
}

/// Debounced fault-mode arbitration.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FaultDetector {
    pub sf: bool,
    pub mode: Mode,
    pub debounce_timer: f64,
    pub recovery_timer: f64,
    stuck_reported: bool,
}

impl FaultDetector {
    pub fn step(&mut self, v_pu: f64, p_droop: f64, p_fm: f64, params: &FaultModeParams, dt: f64) -> DetectorEvents {
        let sf = v_pu < params.v_threshold;
        let rising = sf && !self.sf;
        let falling = !sf && self.sf;
        self.sf = sf;
        // Timers hold the time since the edge, compared with half a step of slack.
        let elapsed = |timer: f64, limit: f64| timer + 0.5 * dt >= limit;

        let mut ev = DetectorEvents { sf, mode: self.mode, ..Default::default() };
        match self.mode {
            Mode::Normal => {
                if rising {
                    self.debounce_timer = 0.0;
                } else if sf {
                    self.debounce_timer += dt;
                }
                if sf && elapsed(self.debounce_timer, params.debounce) {
                    self.mode = Mode::Fault;
                    self.recovery_timer = 0.0;
                    self.stuck_reported = false;
                    ev.entered_fault = true;
                }
            }
            Mode::Fault => {
                if falling {
                    self.recovery_timer = 0.0;
                    ev.voltage_restored = true;
                } else if !sf {
                    self.recovery_timer += dt;
                }
                if !sf && elapsed(self.recovery_timer, params.recovery_hold) {
                    if (p_droop - p_fm).abs() <= params.p_diff_threshold {
                        self.mode = Mode::Normal;
                        self.debounce_timer = 0.0;
                        ev.exited_fault = true;
                    } else if !self.stuck_reported {
                        log::warn!(
                            "voltage restored but |P_droop - P_fm| = {:.4} pu exceeds {:.4}; staying in fault mode",
                            (p_droop - p_fm).abs(),
                            params.p_diff_threshold
                        );
                        self.stuck_reported = true;
                    }
                }
            }
        }
        ev.mode = self.mode;
        ev
    }
}

/// Apparent power the converter may deliver at the present voltage. The
/// balanced case reduces to `V·S_n`.
pub fn apparent_power_new(v_plus: f64, v_minus: f64, s_n: f64) -> f64 {
    (v_plus - v_minus).max(0.0) * s_n
}

/// Reactive reference from the grid code: droop above 0.9 pu, a linear
/// injection in the band above 0.5 pu, and all of `s_new` below.
pub fn grid_code_q_ref(v_pu: f64, s_new: f64, droop_q: f64) -> f64 {
    if v_pu > 0.9 {
        droop_q
    } else if v_pu > 0.5 {
        2.0 * s_new * (1.0 - v_pu)
    } else {
        s_new
    }
}

/// Active power left over once `q_ref` is served, returned with the
/// (possibly clamped) reactive reference so that `p² + q² ≤ s_new²`.
pub fn fault_active_power_ref(s_new: f64, q_ref: f64) -> (f64, f64) {
    if q_ref.abs() >= s_new {
        (0.0, s_new.copysign(q_ref))
    } else {
        ((s_new * s_new - q_ref * q_ref).sqrt(), q_ref)
    }
}

pub fn select_references(mode: Mode, droop_refs: (f64, f64), fault_refs: (f64, f64)) -> (f64, f64) {
    match mode {
        Mode::Normal => droop_refs,
        Mode::Fault => fault_refs,
    }
}

/// Virtual resistance boost after voltage restoration: jump to `r_v·(1 + x)`
/// at the PRL slope, hold for `t_d`, ramp back over `nrl_ramp_time`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicDamping {
    pub latch: bool,
    pub limiter: RateLimiter,
    pub hold_timer: f64,
}

impl DynamicDamping {
    pub fn new(r_v: f64, params: &FaultModeParams) -> Self {
        Self {
            latch: false,
            limiter: RateLimiter::new(r_v, params.prl_slope, Self::nrl_slope(r_v, params)),
            hold_timer: 0.0,
        }
    }

    fn nrl_slope(r_v: f64, params: &FaultModeParams) -> f64 {
        params.damping_x * r_v / params.nrl_ramp_time
    }

    pub fn value(&self) -> f64 {
        self.limiter.value
    }

    pub fn step(&mut self, trigger: bool, r_v: f64, params: &FaultModeParams, dt: f64) -> f64 {
        if trigger {
            self.latch = true;
            self.hold_timer = 0.0;
        }
        let high = r_v * (1.0 + params.damping_x);
        self.limiter.up_slope = params.prl_slope;
        self.limiter.down_slope = Self::nrl_slope(r_v, params);

        let holding = self.latch && self.hold_timer + 0.5 * dt < params.t_d;
        let target = if holding { high } else { r_v };
        if self.latch {
            self.hold_timer += dt;
        }
        let value = self.limiter.step(target, dt).clamp(r_v, high);
        self.limiter.value = value;
        if self.latch && !holding && value == r_v {
            self.latch = false;
        }
        value
    }
}

/// Per-period output of [`FaultModeController`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FaultModeOutput {
    pub p_ref: f64,
    pub q_ref: f64,
    pub fault_refs: (f64, f64),
    pub s_new: f64,
    /// Voltage from which the grid-code references were computed (pu).
    pub v_grid_code: f64,
    pub r_v_dyn: f64,
    pub p_diff: f64,
    pub events: DetectorEvents,
}

/// Detector, reference rescaling, multiplexer and damping wired together.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultModeController {
    pub params: FaultModeParams,
    pub detector: FaultDetector,
    pub damping: DynamicDamping,
}

impl FaultModeController {
    pub fn new(params: FaultModeParams, r_v: f64) -> Self {
        Self { params, detector: FaultDetector::default(), damping: DynamicDamping::new(r_v, &params) }
    }

    /// `droop_refs` are per-unit of rating.
    pub fn step(&mut self, seq: &SequenceComponents, droop_refs: (f64, f64), r_v: f64, dt: f64) -> FaultModeOutput {
        let s_new = apparent_power_new(seq.mag_plus, seq.mag_minus, 1.0);
        let v_gc = s_new;
        let q_gc = grid_code_q_ref(v_gc, s_new, droop_refs.1);
        let (p_avail, q_fm) = fault_active_power_ref(s_new, q_gc);
        // The droop setpoint passes unchanged whenever it fits under the bound.
        let p_fm = droop_refs.0.clamp(-p_avail, p_avail);
        let fault_refs = (p_fm, q_fm);
        let p_diff = (droop_refs.0 - p_fm).abs();

        let events = self.detector.step(seq.mag_plus, droop_refs.0, p_fm, &self.params, dt);
        let (p_ref, q_ref) = select_references(events.mode, droop_refs, fault_refs);
        let r_v_dyn = self.damping.step(events.voltage_restored, r_v, &self.params, dt);
        FaultModeOutput { p_ref, q_ref, fault_refs, s_new, v_grid_code: v_gc, r_v_dyn, p_diff, events }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const TS: f64 = 1e-4;

    fn run_trace(trace: &[f64], p_diff: f64) -> Vec<DetectorEvents> {
        let params = FaultModeParams::default();
        let mut det = FaultDetector::default();
        trace.iter().map(|&v| det.step(v, 0.5, 0.5 - p_diff, &params, TS)).collect()
    }

    #[test]
    fn steady_voltage_never_faults() {
        let ev = run_trace(&vec![1.0; 5000], 0.0);
        assert!(ev.iter().all(|e| !e.sf && e.mode == Mode::Normal));
    }

    #[test]
    fn fault_entry_after_debounce_and_exit_after_hold() {
        // dip from step 100 to step 2099, i.e. t0 = 10 ms, t1 = 210 ms
        let trace: Vec<f64> = (0..6000).map(|k| if (100..2100).contains(&k) { 0.3 } else { 1.0 }).collect();
        let ev = run_trace(&trace, 0.01);
        assert!(ev[100].sf);
        let entry = ev.iter().position(|e| e.entered_fault).unwrap();
        assert_eq!(entry, 110, "expected fault mode 1 ms after the dip");
        let restored = ev.iter().position(|e| e.voltage_restored).unwrap();
        assert_eq!(restored, 2100);
        let exit = ev.iter().position(|e| e.exited_fault).unwrap();
        assert_eq!(exit, 2100 + 1500, "expected normal mode 150 ms after restoration");
    }

    #[test]
    fn large_power_mismatch_keeps_fault_mode() {
        let trace: Vec<f64> = (0..6000).map(|k| if (100..2100).contains(&k) { 0.3 } else { 1.0 }).collect();
        let ev = run_trace(&trace, 0.2);
        assert!(ev.last().unwrap().mode.is_fault());
    }

    #[test]
    fn short_dip_does_not_enter_fault() {
        let trace: Vec<f64> = (0..500).map(|k| if (100..109).contains(&k) { 0.3 } else { 1.0 }).collect();
        let ev = run_trace(&trace, 0.0);
        assert!(ev.iter().all(|e| e.mode == Mode::Normal));
    }

    #[test]
    fn apparent_power_examples() {
        let s_n = 13_402.7;
        assert_eq!(apparent_power_new(1.0, 0.0, s_n), s_n);
        assert_abs_diff_eq!(apparent_power_new(0.3, 0.0, s_n), 0.3 * s_n, epsilon = 1e-9);
        assert_abs_diff_eq!(apparent_power_new(0.6, 0.2, s_n), 0.4 * s_n, epsilon = 1e-9);
        assert_eq!(apparent_power_new(0.1, 0.2, s_n), 0.0);
    }

    #[test]
    fn grid_code_examples() {
        let s_n = 1.0;
        assert_abs_diff_eq!(grid_code_q_ref(0.3, 0.3 * s_n, 0.07), 0.3, epsilon = 1e-15);
        let s_new = 0.5;
        let v = 0.5 + 1e-12;
        assert_abs_diff_eq!(grid_code_q_ref(v, s_new, 0.0), s_new, epsilon = 1e-11);
        assert_eq!(grid_code_q_ref(0.5, s_new, 0.0), s_new);
        assert_eq!(2.0 * s_new * (1.0 - 0.5), s_new);
        assert_eq!(grid_code_q_ref(0.95, 0.95, -0.12), -0.12);
    }

    #[test]
    fn active_power_ref_examples() {
        assert_eq!(fault_active_power_ref(0.3, 0.3), (0.0, 0.3));
        let (p, q) = fault_active_power_ref(1.0, 0.6);
        assert_abs_diff_eq!(p, 0.8, epsilon = 1e-15);
        assert_eq!(q, 0.6);
        assert_eq!(fault_active_power_ref(0.7, 0.0), (0.7, 0.0));
        assert_eq!(fault_active_power_ref(0.3, 0.5), (0.0, 0.3));
    }

    #[test]
    fn selection_is_a_multiplexer() {
        let droop = (0.5, -0.02);
        let fault = (0.0, 0.3);
        assert_eq!(select_references(Mode::Normal, droop, fault), droop);
        assert_eq!(select_references(Mode::Fault, droop, fault), fault);
        assert_eq!(select_references(Mode::Fault, droop, droop), select_references(Mode::Normal, droop, droop));
    }

    #[test]
    fn composed_fault_refs_at_deep_sag() {
        let mut fm = FaultModeController::new(FaultModeParams::default(), 0.107);
        let seq = SequenceComponents { mag_plus: 0.3, mag_minus: 0.0, ..Default::default() };
        let mut out = FaultModeOutput::default();
        for _ in 0..20 {
            out = fm.step(&seq, (0.5, 2.0), 0.107, TS);
        }
        assert!(out.events.mode.is_fault());
        assert_eq!((out.p_ref, out.q_ref), (0.0, 0.3));
    }

    fn damping_trace(params: &FaultModeParams, triggers: &[usize], n: usize) -> Vec<f64> {
        let r_v = 0.107;
        let mut d = DynamicDamping::new(r_v, params);
        (0..n).map(|k| d.step(triggers.contains(&k), r_v, params, TS)).collect()
    }

    #[test]
    fn zero_boost_leaves_resistance_alone() {
        let params = FaultModeParams { damping_x: 0.0, ..Default::default() };
        assert!(damping_trace(&params, &[10, 400], 3000).iter().all(|&r| r == 0.107));
    }

    #[test]
    fn boost_timing() {
        let params = FaultModeParams { damping_x: 1.0, ..Default::default() };
        let r_v = 0.107;
        let t1 = 100;
        let trace = damping_trace(&params, &[t1], 2000);
        assert_eq!(trace[t1 - 1], r_v);
        // up within one control period
        assert_eq!(trace[t1], 2.0 * r_v);
        let hold = (params.t_d / TS).round() as usize;
        assert!(trace[t1..t1 + hold].iter().all(|&r| r == 2.0 * r_v));
        let ramp = (params.nrl_ramp_time / TS).round() as usize;
        let back = trace.iter().skip(t1 + hold).position(|&r| r == r_v).unwrap() + t1 + hold;
        assert!((back as i64 - (t1 + hold + ramp) as i64).abs() <= 1, "back at {back}");
    }

    #[test]
    fn boost_retriggers_during_ramp_down() {
        let params = FaultModeParams { damping_x: 1.0, ..Default::default() };
        let r_v = 0.107;
        let hold = (params.t_d / TS).round() as usize;
        let t1 = 50;
        let t2 = t1 + hold + 40; // part-way down the ramp
        let trace = damping_trace(&params, &[t1, t2], 3000);
        assert!(trace[t2 - 1] < 2.0 * r_v && trace[t2 - 1] > r_v);
        assert_eq!(trace[t2], 2.0 * r_v);
        assert!(trace[t2..t2 + hold].iter().all(|&r| r == 2.0 * r_v));
    }

    proptest! {
        #[test]
        fn damping_stays_in_band(x in 0.0..3.0f64,
                                 triggers in proptest::collection::vec(0usize..4000, 0..8)) {
            let params = FaultModeParams { damping_x: x, ..Default::default() };
            let r_v = 0.107;
            let trace = damping_trace(&params, &triggers, 4000);
            for &r in &trace {
                prop_assert!(r >= r_v && r <= r_v * (1.0 + x));
            }
            let last = triggers.iter().max().copied();
            let settle = ((params.t_d + params.nrl_ramp_time) / TS).round() as usize + 2;
            if let Some(t) = last {
                if t + settle < trace.len() {
                    prop_assert_eq!(trace[t + settle], r_v);
                }
            }
        }

        #[test]
        fn fault_refs_fit_apparent_power(s in 0.0..2.0f64, q in -3.0..3.0f64) {
            let (p, qc) = fault_active_power_ref(s, q);
            prop_assert!(p * p + qc * qc <= s * s + 1e-12);
            prop_assert!(p >= 0.0);
        }

        #[test]
        fn fault_entry_requires_debounce(trace in proptest::collection::vec(prop_oneof![Just(0.3f64), Just(1.0f64), 0.0..1.2f64], 1..600)) {
            let params = FaultModeParams::default();
            let need = (params.debounce / TS).round() as usize;
            let mut det = FaultDetector::default();
            let mut run = 0usize;
            for &v in &trace {
                let ev = det.step(v, 0.5, 0.5, &params, TS);
                run = if ev.sf { run + 1 } else { 0 };
                if ev.entered_fault {
                    prop_assert!(run > need, "entered after {} low samples", run);
                }
            }
        }
    }
}
