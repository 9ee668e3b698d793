//! Scenario configuration, the fixed-step closed-loop simulation and metric
//! extraction.

use std::io;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::blocks::SequenceSeparator;
use crate::faultmode::{FaultModeController, FaultModeParams, Mode};
use crate::framework::{inverse_clarke, park, AlphaBeta, PerUnitBase};
use crate::plant::{scr_to_impedance, FaultSchedule, Plant, PlantParams, PlantState};
use crate::spc::{droop_references, CurrentFeedback, SpcController, SpcParams, SpcTuning};
use crate::Error;

/// Scenarios shipped with the library, as `(name, toml source)`.
pub const BUNDLED: &[(&str, &str)] = &[
    ("fig4", include_str!("../scenarios/fig4.toml")),
    ("fig6", include_str!("../scenarios/fig6.toml")),
    ("fig7-sweep", include_str!("../scenarios/fig7-sweep.toml")),
    ("fig8a", include_str!("../scenarios/fig8a.toml")),
    ("fig8b", include_str!("../scenarios/fig8b.toml")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".scenario").or_else(|| name.strip_suffix(".toml")).unwrap_or(name);
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, src)| *src)
}

/// A parameter sweep attached to a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub param: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    /// Simulated time (s).
    pub duration: f64,
    /// Short-circuit ratio; when present it sets `plant.z_line = 1/scr`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<FaultSchedule>,
    /// Active power setpoint (pu).
    #[serde(default)]
    pub p_s: f64,
    /// Reactive power setpoint (pu).
    #[serde(default)]
    pub q_s: f64,
    /// Control rate (Hz).
    #[serde(default = "ScenarioConfig::default_f_s")]
    pub f_s: f64,
    /// Plant substeps per control period.
    #[serde(default = "ScenarioConfig::default_substeps")]
    pub plant_substeps: usize,
    /// Keep every n-th control sample in the output.
    #[serde(default = "ScenarioConfig::default_decimation")]
    pub decimation: usize,
    #[serde(default)]
    pub base: PerUnitBase,
    #[serde(default)]
    pub plant: PlantParams,
    #[serde(default)]
    pub spc: SpcParams,
    #[serde(default)]
    pub faultmode: FaultModeParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

impl ScenarioConfig {
    fn default_f_s() -> f64 {
        10_000.0
    }

    fn default_substeps() -> usize {
        10
    }

    fn default_decimation() -> usize {
        1
    }

    pub fn new(duration: f64) -> Self {
        Self {
            name: String::new(),
            duration,
            scr: None,
            fault: None,
            p_s: 0.0,
            q_s: 0.0,
            f_s: Self::default_f_s(),
            plant_substeps: Self::default_substeps(),
            decimation: Self::default_decimation(),
            base: PerUnitBase::default(),
            plant: PlantParams::default(),
            spc: SpcParams::default(),
            faultmode: FaultModeParams::default(),
            sweep: None,
        }
    }

    pub fn from_toml(src: &str) -> Result<Self, Error> {
        toml::from_str(src).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn bundled(name: &str) -> Result<Self, Error> {
        let src = bundled(name).ok_or_else(|| Error::invalid("scenario", format!("no bundled scenario named `{name}`")))?;
        Self::from_toml(src)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario configs always serialize")
    }

    /// The same scenario with `scr` folded into `plant.z_line` and every
    /// default written out.
    pub fn resolved(&self) -> Result<Self, Error> {
        let mut cfg = self.clone();
        if let Some(scr) = cfg.scr {
            cfg.plant.z_line = scr_to_impedance(scr)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::invalid("duration", "must be finite and strictly positive"));
        }
        if let Some(scr) = self.scr {
            let z = scr_to_impedance(scr)?;
            if self.plant.z_line != z {
                let mut plant = self.plant;
                plant.z_line = z;
                plant.validate().map_err(|_| Error::invalid("scr", format!("implies z_line = {z:.4} pu, outside the admissible range")))?;
            }
        }
        self.plant.validate()?;
        if let Some(f) = &self.fault {
            f.validate()?;
            if self.duration <= f.t_fault_clear {
                return Err(Error::invalid("duration", "must exceed fault.t_fault_clear"));
            }
        }
        for (name, v) in [("p_s", self.p_s), ("q_s", self.q_s)] {
            if !v.is_finite() {
                return Err(Error::invalid(name, "must be finite"));
            }
        }
        if !(self.f_s.is_finite() && self.f_s > 0.0) {
            return Err(Error::invalid("f_s", "must be finite and strictly positive"));
        }
        if self.plant_substeps == 0 {
            return Err(Error::invalid("plant_substeps", "must be at least 1"));
        }
        if self.decimation == 0 {
            return Err(Error::invalid("decimation", "must be at least 1"));
        }
        self.base.validate()?;
        self.spc.validate()?;
        self.faultmode.validate()?;
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(Error::invalid("sweep.values", "must not be empty"));
            }
            self.with_override(&s.param, s.values[0])?;
        }
        Ok(())
    }

    pub fn control_period(&self) -> f64 {
        1.0 / self.f_s
    }

    pub fn control_steps(&self) -> usize {
        (self.duration * self.f_s).round() as usize
    }

    /// Copy with the scalar at a dotted path such as `faultmode.damping_x`
    /// replaced. Unknown or non-numeric paths are rejected.
    pub fn with_override(&self, path: &str, value: f64) -> Result<Self, Error> {
        let unknown = || Error::invalid(path, "not a numeric scenario parameter");
        let mut root = toml::Value::try_from(self).map_err(|e| Error::Parse(e.to_string()))?;
        let mut keys: Vec<&str> = path.split('.').collect();
        let leaf = keys.pop().filter(|k| !k.is_empty()).ok_or_else(unknown)?;
        let mut table = root.as_table_mut().ok_or_else(unknown)?;
        for k in keys {
            let entry = table.entry(k.to_string()).or_insert_with(|| toml::Value::Table(Default::default()));
            table = entry.as_table_mut().ok_or_else(unknown)?;
        }
        let new = match table.get(leaf) {
            Some(toml::Value::Integer(_)) => {
                if value.fract() != 0.0 || value < 0.0 {
                    return Err(Error::invalid(path, format!("expects a non-negative integer, got {value}")));
                }
                toml::Value::Integer(value as i64)
            }
            Some(toml::Value::Float(_)) | None => toml::Value::Float(value),
            Some(_) => return Err(unknown()),
        };
        table.insert(leaf.to_string(), new);
        let cfg: Self = root.try_into().map_err(|_: toml::de::Error| unknown())?;
        let check = toml::Value::try_from(&cfg).map_err(|e| Error::Parse(e.to_string()))?;
        let mut node = &check;
        for k in path.split('.') {
            node = node.get(k).ok_or_else(unknown)?;
        }
        Ok(cfg)
    }
}

/// Steady-state phasors of plant and controller at the setpoints. Phasors are
/// the complex αβ vectors at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub e_mag: f64,
    pub delta: f64,
    pub v_pcc: Complex64,
    pub v_cf: Complex64,
    pub i_c: Complex64,
    pub i_g: Complex64,
    pub i_ref: Complex64,
    pub v_conv: Complex64,
    pub p: f64,
    pub q: f64,
}

/// Phasor network solution for EMF `E∠δ` with the current loop tracking its
/// reference exactly.
pub fn network_phasors(e_mag: f64, delta: f64, plant: &PlantParams, tuning: &SpcTuning, r_v: f64) -> OperatingPoint {
    let j = Complex64::i();
    let e = Complex64::from_polar(e_mag, delta);
    let e_g = Complex64::new(plant.grid_v, 0.0);
    let z = plant.z_line;
    let z_v = Complex64::new(r_v, tuning.l_v);
    let z2 = Complex64::new(plant.r_parasitic, plant.l_gf + z);
    let b = plant.c_f;
    let i_g = match tuning.current_feedback {
        CurrentFeedback::Converter => ((e - e_g) / z_v - j * b * e_g) / (1.0 + j * b * z2 + j * z / z_v),
        CurrentFeedback::Grid => ((e - e_g) / z_v) / (1.0 + j * z / z_v),
    };
    let v_pcc = e_g + j * z * i_g;
    let v_cf = e_g + z2 * i_g;
    let i_c = i_g + j * b * v_cf;
    let v_conv = v_cf + Complex64::new(plant.r_parasitic, plant.l_cf) * i_c;
    let s = v_pcc * i_g.conj();
    OperatingPoint {
        e_mag,
        delta,
        v_pcc,
        v_cf,
        i_c,
        i_g,
        i_ref: (e - v_pcc) / z_v,
        v_conv,
        p: s.re,
        q: s.im,
    }
}

/// Solves for the EMF at which the droop references are met in steady
/// state: `P = p_s`, `Q = q_s + d_q·(v* − |v_pcc|)`.
pub fn operating_point(cfg: &ScenarioConfig) -> Result<OperatingPoint, Error> {
    let cfg = cfg.resolved()?;
    let tuning = cfg.spc.to_per_unit(&cfg.base)?;
    let residual = |x: [f64; 2]| {
        let op = network_phasors(x[0], x[1], &cfg.plant, &tuning, tuning.r_v);
        let q_ref = cfg.q_s + tuning.d_q * (tuning.v_star - op.v_pcc.norm());
        [op.p - cfg.p_s, op.q - q_ref]
    };
    let mut x = [tuning.e_nom, 0.0];
    for _ in 0..50 {
        let r = residual(x);
        if r[0].abs().max(r[1].abs()) < 1e-13 {
            let op = network_phasors(x[0], x[1], &cfg.plant, &tuning, tuning.r_v);
            if !(0.0..=tuning.e_max).contains(&op.e_mag) {
                break;
            }
            return Ok(op);
        }
        let h = 1e-7;
        let rx = residual([x[0] + h, x[1]]);
        let ry = residual([x[0], x[1] + h]);
        let jac = [[(rx[0] - r[0]) / h, (ry[0] - r[0]) / h], [(rx[1] - r[1]) / h, (ry[1] - r[1]) / h]];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if !det.is_finite() || det.abs() < 1e-14 {
            break;
        }
        x[0] -= (jac[1][1] * r[0] - jac[0][1] * r[1]) / det;
        x[1] -= (jac[0][0] * r[1] - jac[1][0] * r[0]) / det;
    }
    Err(Error::invalid("p_s", "no steady operating point reaches the setpoints within the EMF limits"))
}

/// One output record. Field order is the CSV column order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub v_pcc_alpha: f64,
    pub v_pcc_beta: f64,
    pub v_pcc_a: f64,
    pub v_pcc_b: f64,
    pub v_pcc_c: f64,
    pub i_g_alpha: f64,
    pub i_g_beta: f64,
    pub i_g_d: f64,
    pub i_g_q: f64,
    /// Current regulated by the PR loop, in the controller frame.
    pub i_meas_d: f64,
    pub i_meas_q: f64,
    pub i_ref_raw_d: f64,
    pub i_ref_raw_q: f64,
    pub i_ref_d: f64,
    pub i_ref_q: f64,
    pub p: f64,
    pub q: f64,
    pub p_ref: f64,
    pub q_ref: f64,
    pub omega: f64,
    pub theta: f64,
    pub e_mag: f64,
    pub r_v_dyn: f64,
    pub sf: bool,
    pub fm: bool,
    pub v_plus: f64,
    pub v_minus: f64,
}

/// Bumped whenever [`CSV_COLUMNS`] changes.
pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const CSV_COLUMNS: &[&str] = &[
    "t", "v_pcc_alpha", "v_pcc_beta", "v_pcc_a", "v_pcc_b", "v_pcc_c", "i_g_alpha", "i_g_beta", "i_g_d", "i_g_q",
    "i_meas_d", "i_meas_q", "i_ref_raw_d", "i_ref_raw_q", "i_ref_d", "i_ref_q", "p", "q", "p_ref", "q_ref", "omega",
    "theta", "e_mag", "r_v_dyn", "sf", "fm", "v_plus", "v_minus",
];

impl Sample {
    pub fn is_finite(&self) -> bool {
        [
            self.t, self.v_pcc_alpha, self.v_pcc_beta, self.i_g_alpha, self.i_g_beta, self.i_g_d, self.i_g_q,
            self.i_meas_d, self.i_meas_q, self.i_ref_raw_d, self.i_ref_raw_q, self.i_ref_d, self.i_ref_q, self.p,
            self.q, self.p_ref, self.q_ref, self.omega, self.theta, self.e_mag, self.r_v_dyn, self.v_plus,
            self.v_minus,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    pub fn i_g_norm(&self) -> f64 {
        self.i_g_alpha.hypot(self.i_g_beta)
    }

    pub fn i_ref_norm(&self) -> f64 {
        self.i_ref_d.hypot(self.i_ref_q)
    }
}

/// Uniformly sampled simulation output.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimeSeries {
    pub sample_period: f64,
    pub samples: Vec<Sample>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.column(|s| s.t)
    }

    pub fn column(&self, f: impl Fn(&Sample) -> f64) -> Vec<f64> {
        self.samples.iter().map(f).collect()
    }

    pub fn write_csv<W: io::Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        if self.samples.is_empty() {
            out.write_record(CSV_COLUMNS)?;
        }
        for s in &self.samples {
            out.serialize(s)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        buf
    }

    /// Parses CSV written by [`TimeSeries::write_csv`], rejecting other
    /// layouts, empty files and non-uniform sampling.
    pub fn read_csv<R: io::Read>(r: R) -> Result<Self, Error> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
        if headers.iter().ne(CSV_COLUMNS.iter().copied()) {
            return Err(Error::Parse(format!(
                "time-series columns do not match the schema; expected {}",
                CSV_COLUMNS.join(",")
            )));
        }
        let samples = rdr
            .deserialize()
            .collect::<Result<Vec<Sample>, _>>()
            .map_err(|e| Error::Parse(e.to_string()))?;
        if samples.is_empty() {
            return Err(Error::Parse("time series has no samples".into()));
        }
        let sample_period = if samples.len() > 1 { samples[1].t - samples[0].t } else { 0.0 };
        for w in samples.windows(2) {
            let dt = w[1].t - w[0].t;
            if !(dt.is_finite() && dt > 0.0) || (dt - sample_period).abs() > 1e-9 * sample_period.max(1.0) {
                return Err(Error::Parse(format!("time column is not uniformly increasing near t = {}", w[0].t)));
            }
        }
        Ok(Self { sample_period, samples })
    }
}

/// Aborted run: the samples recorded before the failure and why it stopped.
#[derive(Debug, Clone)]
pub struct Divergence {
    pub t: f64,
    pub reason: String,
    pub prefix: TimeSeries,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] Error),
    #[error("simulation diverged at t = {:.6} s: {}", .0.t, .0.reason)]
    Diverged(Box<Divergence>),
}

/// Plant current or voltage magnitude treated as divergence (pu).
pub const DIVERGENCE_LIMIT: f64 = 100.0;

/// Closed-loop simulation state. [`run_scenario`] drives this to the end.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub cfg: ScenarioConfig,
    pub tuning: SpcTuning,
    pub plant: Plant,
    pub state: PlantState,
    pub spc: SpcController,
    pub fault_mode: FaultModeController,
    pub separator: SequenceSeparator,
    pub op: OperatingPoint,
    step: usize,
}

fn phasor_at(x: Complex64, omega: f64, t: f64) -> AlphaBeta {
    AlphaBeta::from_complex(x * Complex64::from_polar(1.0, omega * t))
}

impl Simulation {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self, Error> {
        let cfg = cfg.resolved()?;
        let tuning = cfg.spc.to_per_unit(&cfg.base)?;
        let op = operating_point(&cfg)?;
        let w0 = cfg.base.omega_0;
        let ts = cfg.control_period();
        let plant = Plant::new(cfg.plant, cfg.fault, w0, ts / cfg.plant_substeps as f64)?;
        let state = PlantState {
            i_c: AlphaBeta::from_complex(op.i_c),
            v_cf: AlphaBeta::from_complex(op.v_cf),
            i_g: AlphaBeta::from_complex(op.i_g),
            t: 0.0,
        };

        let mut spc = SpcController::new(tuning, ts);
        spc.plc = crate::spc::PowerLoop::new(tuning.k_pp, tuning.k_ip, w0, op.delta);
        spc.rpc.e_mag = op.e_mag;
        let e_prev = phasor_at(Complex64::from_polar(op.e_mag, op.delta), w0, -ts);
        let v_prev = phasor_at(op.v_pcc, w0, -ts);
        spc.admittance =
            crate::spc::VirtualAdmittance::with_state(w0, phasor_at(op.i_ref, w0, -ts), e_prev - v_prev);
        // Held command whose fundamental equals the steady converter voltage.
        let half = 0.5 * w0 * ts;
        let zoh = Complex64::from_polar(half.sin() / half, -half);
        let u = op.v_conv / zoh;
        let y0 = phasor_at(u - op.v_pcc, w0, 0.0);
        let y1 = phasor_at(u - op.v_pcc, w0, ts);
        spc.current_control[0].set_free_response(y0.alpha, y1.alpha);
        spc.current_control[1].set_free_response(y0.beta, y1.beta);

        let mut separator = SequenceSeparator::new(cfg.f_s, cfg.base.f_0());
        let n = separator.delay_len();
        separator.prime((1..=n).rev().map(|k| phasor_at(op.v_pcc, w0, -(k as f64) * ts)));

        let fault_mode = FaultModeController::new(cfg.faultmode, tuning.r_v);
        Ok(Self { cfg, tuning, plant, state, spc, fault_mode, separator, op, step: 0 })
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.cfg.control_period()
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.cfg.control_steps()
    }

    /// One control period followed by the plant substeps under a held
    /// command. Returns the record for the start of the period.
    pub fn step(&mut self) -> Result<Sample, Error> {
        let ts = self.cfg.control_period();
        let t = self.time();
        let meas = self.plant.measure(&self.state);
        let seq = self.separator.step(meas.v_pcc);
        let droop = droop_references(
            self.cfg.p_s,
            self.cfg.q_s,
            self.tuning.omega_0,
            self.spc.plc.omega,
            self.tuning.v_star,
            seq.mag_plus,
            self.tuning.d_p,
            self.tuning.d_q,
        );
        let fm = self.fault_mode.step(&seq, droop, self.tuning.r_v, ts);
        let (v_cmd, tel) = self.spc.step(&meas, fm.p_ref, fm.q_ref, fm.r_v_dyn, ts)?;

        let v_abc = inverse_clarke(meas.v_pcc);
        let i_g = park(meas.i_g, tel.theta);
        let i_meas = park(tel.i_meas, tel.theta);
        let raw = tel.i_ref_raw_dq();
        let lim = tel.i_ref_dq();
        let sample = Sample {
            t,
            v_pcc_alpha: meas.v_pcc.alpha,
            v_pcc_beta: meas.v_pcc.beta,
            v_pcc_a: v_abc.a,
            v_pcc_b: v_abc.b,
            v_pcc_c: v_abc.c,
            i_g_alpha: meas.i_g.alpha,
            i_g_beta: meas.i_g.beta,
            i_g_d: i_g.d,
            i_g_q: i_g.q,
            i_meas_d: i_meas.d,
            i_meas_q: i_meas.q,
            i_ref_raw_d: raw.d,
            i_ref_raw_q: raw.q,
            i_ref_d: lim.d,
            i_ref_q: lim.q,
            p: tel.p,
            q: tel.q,
            p_ref: fm.p_ref,
            q_ref: fm.q_ref,
            omega: tel.omega,
            theta: tel.theta,
            e_mag: tel.e_mag,
            r_v_dyn: fm.r_v_dyn,
            sf: fm.events.sf,
            fm: fm.events.mode == Mode::Fault,
            v_plus: seq.mag_plus,
            v_minus: seq.mag_minus,
        };
        if !sample.is_finite() || !v_cmd.is_finite() {
            return Err(Error::Diverged { t, reason: "non-finite controller signal".into() });
        }

        let mut next = self.state;
        for _ in 0..self.cfg.plant_substeps {
            next = self.plant.step(&next, v_cmd);
        }
        self.step += 1;
        next.t = self.time();
        if !next.is_finite() {
            return Err(Error::Diverged { t: next.t, reason: "plant state became non-finite".into() });
        }
        let worst = next.i_c.norm().max(next.i_g.norm()).max(next.v_cf.norm());
        if worst > DIVERGENCE_LIMIT {
            return Err(Error::Diverged {
                t: next.t,
                reason: format!("plant state reached {worst:.3e} pu, beyond {DIVERGENCE_LIMIT} pu"),
            });
        }
        self.state = next;
        Ok(sample)
    }
}

/// Runs a scenario to completion. Identical configs give bit-identical output.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<TimeSeries, RunError> {
    let mut sim = Simulation::new(cfg)?;
    let decimation = sim.cfg.decimation;
    let mut out = TimeSeries {
        sample_period: decimation as f64 * sim.cfg.control_period(),
        samples: Vec::with_capacity(sim.cfg.control_steps() / decimation + 1),
    };
    while !sim.is_finished() {
        let k = sim.step;
        match sim.step() {
            Ok(s) => {
                if k % decimation == 0 {
                    out.samples.push(s);
                }
            }
            Err(Error::Diverged { t, reason }) => {
                return Err(RunError::Diverged(Box::new(Divergence { t, reason, prefix: out })));
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}

#[cfg(feature = "parallel")]
pub fn run_batch(configs: &[ScenarioConfig]) -> Vec<Result<TimeSeries, RunError>> {
    use rayon::prelude::*;
    configs.par_iter().map(run_scenario).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn run_batch(configs: &[ScenarioConfig]) -> Vec<Result<TimeSeries, RunError>> {
    run_batch_sequential(configs)
}

pub fn run_batch_sequential(configs: &[ScenarioConfig]) -> Vec<Result<TimeSeries, RunError>> {
    configs.iter().map(run_scenario).collect()
}

fn window_indices(t: &[f64], window: (f64, f64)) -> Result<(usize, usize), Error> {
    if t.is_empty() || window.0.is_nan() || window.1.is_nan() || window.0 > window.1 {
        return Err(Error::invalid("window", "must be a non-empty interval"));
    }
    let eps = 1e-9 * (t[t.len() - 1] - t[0]).abs().max(1.0);
    if window.0 < t[0] - eps || window.1 > t[t.len() - 1] + eps {
        return Err(Error::invalid("window", "lies outside the series"));
    }
    let lo = t.partition_point(|&x| x < window.0 - eps);
    let hi = t.partition_point(|&x| x <= window.1 + eps);
    if lo >= hi {
        return Err(Error::invalid("window", "contains no samples"));
    }
    Ok((lo, hi))
}

/// Largest excursion past `reference` within `window`, in units of
/// `normalizer` (default `|reference|`). Excursions count in the direction of
/// travel from the first window sample towards the reference; a signal that
/// starts on the reference counts excursions in both directions.
pub fn overshoot(t: &[f64], x: &[f64], reference: f64, window: (f64, f64), normalizer: Option<f64>) -> Result<f64, Error> {
    let (lo, hi) = window_indices(t, window)?;
    let scale = normalizer.unwrap_or(reference.abs());
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::invalid("normalizer", "must be finite and strictly positive"));
    }
    let start = x[lo];
    let dir = (reference - start).signum();
    let worst = x[lo..hi]
        .iter()
        .map(|&v| if reference == start { (v - reference).abs() } else { (v - reference) * dir })
        .fold(0.0, f64::max);
    Ok(worst / scale)
}

/// Time from the first sample until the signal enters ±`band·scale` of the
/// reference for good (`scale` defaults to `|reference|`). `None` if the
/// final sample is outside the band.
pub fn settling_time(t: &[f64], x: &[f64], reference: f64, band: f64, normalizer: Option<f64>) -> Result<Option<f64>, Error> {
    if !(band.is_finite() && band > 0.0) {
        return Err(Error::invalid("band", "must be strictly positive"));
    }
    if t.is_empty() || t.len() != x.len() {
        return Err(Error::invalid("series", "must be non-empty with matching lengths"));
    }
    let tol = band * normalizer.unwrap_or(reference.abs());
    let outside = |v: f64| (v - reference).abs() > tol;
    match x.iter().rposition(|&v| outside(v)) {
        None => Ok(Some(0.0)),
        Some(k) if k + 1 == x.len() => Ok(None),
        Some(k) => Ok(Some(t[k + 1] - t[0])),
    }
}

/// Largest vector norm and when it occurs.
pub fn peak_current(t: &[f64], a: &[f64], b: &[f64]) -> Result<(f64, f64), Error> {
    if t.is_empty() || t.len() != a.len() || t.len() != b.len() {
        return Err(Error::invalid("series", "must be non-empty with matching lengths"));
    }
    let mut best = (a[0].hypot(b[0]), t[0]);
    for k in 1..t.len() {
        let n = a[k].hypot(b[k]);
        if n > best.0 {
            best = (n, t[k]);
        }
    }
    Ok(best)
}

fn mean_over(t: &[f64], x: &[f64], window: (f64, f64)) -> Option<f64> {
    let (lo, hi) = window_indices(t, window).ok()?;
    Some(x[lo..hi].iter().sum::<f64>() / (hi - lo) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub value: f64,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeTransition {
    pub t: f64,
    pub to: Mode,
}

/// Window after clearing over which recovery is judged (s).
pub const RECOVERY_WINDOW: f64 = 0.3;
/// Length of the averaging windows for steady values (s).
pub const STEADY_WINDOW: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMetrics {
    pub peak_i_ref: Peak,
    pub peak_i_grid: Peak,
    pub limiter_engaged: bool,
    pub limiter_first_t: Option<f64>,
    pub fm_transitions: Vec<ModeTransition>,
    pub p_prefault: Option<f64>,
    pub p_final: f64,
    pub q_final: f64,
    /// Recovery overshoot of the grid-current q component after clearing, in
    /// pu of rated current.
    pub i_q_recovery_overshoot: Option<f64>,
    pub i_d_settling_after_clear: Option<f64>,
    pub i_q_settling_after_clear: Option<f64>,
}

impl ScenarioMetrics {
    pub fn compute(ts: &TimeSeries, cfg: &ScenarioConfig) -> Result<Self, Error> {
        let t = ts.times();
        if t.is_empty() {
            return Err(Error::invalid("series", "is empty"));
        }
        let end = t[t.len() - 1];
        let (ref_peak_v, ref_peak_t) = peak_current(&t, &ts.column(|s| s.i_ref_d), &ts.column(|s| s.i_ref_q))?;
        let (grid_peak_v, grid_peak_t) = peak_current(&t, &ts.column(|s| s.i_g_alpha), &ts.column(|s| s.i_g_beta))?;
        let limiter_first_t = ts
            .samples
            .iter()
            .find(|s| s.i_ref_raw_d.hypot(s.i_ref_raw_q) > cfg.spc.i_lim)
            .map(|s| s.t);
        let mut fm_transitions = Vec::new();
        for w in ts.samples.windows(2) {
            if w[0].fm != w[1].fm {
                fm_transitions.push(ModeTransition { t: w[1].t, to: if w[1].fm { Mode::Fault } else { Mode::Normal } });
            }
        }
        let p = ts.column(|s| s.p);
        let q = ts.column(|s| s.q);
        let tail = ((end - STEADY_WINDOW).max(t[0]), end);
        let p_final = mean_over(&t, &p, tail).unwrap_or(p[p.len() - 1]);
        let q_final = mean_over(&t, &q, tail).unwrap_or(q[q.len() - 1]);

        let mut m = Self {
            peak_i_ref: Peak { value: ref_peak_v, t: ref_peak_t },
            peak_i_grid: Peak { value: grid_peak_v, t: grid_peak_t },
            limiter_engaged: limiter_first_t.is_some(),
            limiter_first_t,
            fm_transitions,
            p_prefault: None,
            p_final,
            q_final,
            i_q_recovery_overshoot: None,
            i_d_settling_after_clear: None,
            i_q_settling_after_clear: None,
        };
        if let Some(f) = &cfg.fault {
            m.p_prefault = mean_over(&t, &p, ((f.t_fault_on - STEADY_WINDOW).max(t[0]), f.t_fault_on - ts.sample_period));
            let i_d = ts.column(|s| s.i_g_d);
            let i_q = ts.column(|s| s.i_g_q);
            let q_ref = mean_over(&t, &i_q, tail).unwrap_or(i_q[i_q.len() - 1]);
            let d_ref = mean_over(&t, &i_d, tail).unwrap_or(i_d[i_d.len() - 1]);
            let win = (f.t_fault_clear, (f.t_fault_clear + RECOVERY_WINDOW).min(end));
            m.i_q_recovery_overshoot = overshoot(&t, &i_q, q_ref, win, Some(1.0)).ok();
            let lo = t.partition_point(|&x| x < f.t_fault_clear);
            m.i_d_settling_after_clear = settling_time(&t[lo..], &i_d[lo..], d_ref, 0.05, Some(1.0))?;
            m.i_q_settling_after_clear = settling_time(&t[lo..], &i_q[lo..], q_ref, 0.05, Some(1.0))?;
        }
        Ok(m)
    }
}
