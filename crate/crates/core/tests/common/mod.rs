//! Independent oracles for the electrical network, shared by the plant tests
//! and the acceptance target.

#![allow(dead_code)]

use gfm_core::plant::{Plant, PlantParams, PlantState};
use gfm_core::AlphaBeta;
use num_complex::Complex64;
use std::f64::consts::PI;

pub const W0: f64 = 2.0 * PI * 50.0;

/// Converter voltage phasor used by the oracles: a little above the grid and
/// leading it, so that all three state variables carry current.
pub const V_CONV: Complex64 = Complex64::new(1.02, 0.12);

/// Continuous-time sinusoidal steady state of the filter and line, solved by
/// nodal analysis on the capacitor node. Returns `(i_c, v_cf, i_g)`.
pub fn lcl_phasor(p: &PlantParams, v_conv: Complex64, e: Complex64) -> (Complex64, Complex64, Complex64) {
    let j = Complex64::i();
    let z1 = p.r_parasitic + j * p.l_cf;
    let z2 = p.r_parasitic + j * (p.l_gf + p.z_line);
    let v = (v_conv / z1 + e / z2) / (1.0 / z1 + 1.0 / z2 + j * p.c_f);
    ((v_conv - v) / z1, v, (v - e) / z2)
}

fn rotating(x: Complex64, t: f64) -> AlphaBeta {
    let z = x * Complex64::from_polar(1.0, W0 * t);
    AlphaBeta::new(z.re, z.im)
}

fn state_at(p: &PlantParams, t: f64) -> PlantState {
    let (i_c, v_cf, i_g) = lcl_phasor(p, V_CONV, Complex64::new(p.grid_v, 0.0));
    PlantState { i_c: rotating(i_c, t), v_cf: rotating(v_cf, t), i_g: rotating(i_g, t), t }
}

fn state_distance(a: &PlantState, b: &PlantState) -> f64 {
    [(a.i_c - b.i_c), (a.v_cf - b.v_cf), (a.i_g - b.i_g)]
        .iter()
        .map(|d| d.norm())
        .fold(0.0, f64::max)
}

fn drive(plant: &Plant, x: &PlantState, v: impl Fn(f64) -> AlphaBeta) -> PlantState {
    let t0 = x.t;
    plant.step_with_input(x, v(t0), v(t0 + plant.dt()))
}

/// Largest deviation of the discrete trajectory from the rotating phasor
/// solution over `duration`, starting on the phasor solution.
pub fn phasor_tracking_error(p: &PlantParams, dt: f64, duration: f64) -> f64 {
    let plant = Plant::new(*p, None, W0, dt).expect("valid plant");
    let v = |t: f64| rotating(V_CONV, t);
    let mut x = state_at(p, 0.0);
    let steps = (duration / dt).round() as usize;
    let mut worst: f64 = 0.0;
    for k in 1..=steps {
        x = drive(&plant, &x, v);
        x.t = k as f64 * dt;
        worst = worst.max(state_distance(&x, &state_at(p, x.t)));
    }
    worst
}

/// Final state after `duration` from rest with the converter voltage switched
/// on at `t = 0`.
pub fn from_rest(p: &PlantParams, dt: f64, duration: f64) -> PlantState {
    let plant = Plant::new(*p, None, W0, dt).expect("valid plant");
    let v = |t: f64| rotating(V_CONV, t);
    let mut x = PlantState { i_c: AlphaBeta::ZERO, v_cf: AlphaBeta::ZERO, i_g: AlphaBeta::ZERO, t: 0.0 };
    let steps = (duration / dt).round() as usize;
    for k in 1..=steps {
        x = drive(&plant, &x, v);
        x.t = k as f64 * dt;
    }
    x
}

/// Errors against a much finer run, for each step size in `dts`.
pub fn convergence_errors(p: &PlantParams, dts: &[f64], duration: f64, dt_ref: f64) -> Vec<f64> {
    let reference = from_rest(p, dt_ref, duration);
    dts.iter().map(|&dt| state_distance(&from_rest(p, dt, duration), &reference)).collect()
}

/// Energy audit over `duration` from rest: returns `(actual ΔW, ΔW predicted
/// from port power minus resistive loss, total energy throughput)`. The port
/// and loss terms use midpoint quantities, for which the trapezoidal update
/// satisfies the continuous balance exactly.
pub fn energy_audit(p: &PlantParams, dt: f64, duration: f64) -> (f64, f64, f64) {
    let plant = Plant::new(*p, None, W0, dt).expect("valid plant");
    let v = |t: f64| rotating(V_CONV, t);
    let e = |t: f64| rotating(Complex64::new(p.grid_v, 0.0), t);
    let mut x = PlantState { i_c: AlphaBeta::ZERO, v_cf: AlphaBeta::ZERO, i_g: AlphaBeta::ZERO, t: 0.0 };
    let w_start = plant.stored_energy(&x);
    let (mut predicted, mut throughput) = (0.0, 0.0);
    let steps = (duration / dt).round() as usize;
    for k in 1..=steps {
        let (t0, t1) = (x.t, k as f64 * dt);
        let mut next = drive(&plant, &x, v);
        next.t = t1;
        let v_mid = (v(t0) + v(t1)) * 0.5;
        let e_mid = (e(t0) + e(t1)) * 0.5;
        let ic = (x.i_c + next.i_c) * 0.5;
        let ig = (x.i_g + next.i_g) * 0.5;
        let p_in = v_mid.dot(ic);
        let p_out = e_mid.dot(ig);
        let loss = p.r_parasitic * (ic.norm_sqr() + ig.norm_sqr());
        predicted += dt * (p_in - p_out - loss);
        throughput += dt * (p_in.abs() + p_out.abs() + loss);
        x = next;
    }
    (plant.stored_energy(&x) - w_start, predicted, throughput)
}
