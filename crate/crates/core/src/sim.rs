//! Two-timescale closed loop and current-violation scoring.
//!
//! A 1 s plant applies `service + F_0` to the battery, integrates SOC and
//! computes current and voltage from the circuit model. Every `period_s`
//! seconds the scheduler is re-solved from the true SOC and its first
//! offset is held for the next period.

use std::io::{Read, Write};

use dpc_qp::Settings;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::CircuitParams;
use crate::envelope::{EnvelopeOptions, OcvModel};
use crate::error::{Error, Result};
use crate::forecast::ForecastSet;
use crate::scheduler::{Mode, Scheduler, SchedulerConfig, SolveStatus};
use crate::soc::{h_step, BessConfig};

const SECOND_HOURS: f64 = 1.0 / 3600.0;

/// 1 Hz service power demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceTrace {
    pub power_kw: Vec<f64>,
}

impl ServiceTrace {
    pub fn new(power_kw: Vec<f64>) -> Result<Self> {
        if power_kw.iter().any(|p| !p.is_finite()) {
            return Err(Error::Data("service trace has non-finite values".into()));
        }
        Ok(Self { power_kw })
    }

    pub fn duration_s(&self) -> usize {
        self.power_kw.len()
    }

    pub fn mean_kw(&self) -> f64 {
        if self.power_kw.is_empty() {
            0.0
        } else {
            self.power_kw.iter().sum::<f64>() / self.power_kw.len() as f64
        }
    }

    /// Sample-wise sum; the result has the length of the shorter trace.
    pub fn plus(&self, other: &ServiceTrace) -> ServiceTrace {
        ServiceTrace {
            power_kw: self.power_kw.iter().zip(&other.power_kw).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn negated(&self) -> ServiceTrace {
        ServiceTrace {
            power_kw: self.power_kw.iter().map(|p| -p).collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t_s", "power_kw"])?;
        for (t, p) in self.power_kw.iter().enumerate() {
            w.write_record([t.to_string(), p.to_string()])?;
        }
        flush(w)
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        Self::new(crate::forecast::read_power_trace(input)?)
    }
}

fn flush<W: Write>(mut w: csv::Writer<W>) -> Result<()> {
    w.flush().map_err(|source| Error::Io {
        path: "<csv output>".into(),
        source,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServiceKind {
    Bursts,
    Steps,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceParams {
    pub duration_s: usize,
    /// Largest burst magnitude.
    pub amplitude_kw: f64,
    /// Fraction of time spent in bursts.
    pub duty: f64,
    pub mean_burst_s: f64,
    /// Smallest burst magnitude as a fraction of the amplitude.
    pub min_level: f64,
    /// `(power_kw, duration_s)` segments; the last one is held to the end.
    pub steps: Vec<(f64, usize)>,
}

impl Default for ServiceParams {
    fn default() -> Self {
        Self {
            duration_s: 7200,
            amplitude_kw: 600.0,
            duty: 0.1,
            mean_burst_s: 8.0,
            min_level: 0.6,
            steps: Vec::new(),
        }
    }
}

/// Zero-mean telegraph bursts: pairs of opposite-sign bursts of equal
/// magnitude and length separated by idle gaps.
fn bursts(p: &ServiceParams, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = vec![0.0; p.duration_s];
    if p.duty <= 0.0 || p.amplitude_kw == 0.0 {
        return out;
    }
    let mean_gap = p.mean_burst_s * (1.0 - p.duty) / p.duty;
    let mut t = 0usize;
    let mut pending: Option<(f64, usize)> = None;
    while t < p.duration_s {
        let gap = (rng.gen::<f64>() * 2.0 * mean_gap).round() as usize;
        t += gap;
        let (level, len) = match pending.take() {
            Some((level, len)) => (-level, len),
            None => {
                let mag = p.amplitude_kw * (p.min_level + (1.0 - p.min_level) * rng.gen::<f64>());
                let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                let len = 1 + (rng.gen::<f64>() * 2.0 * (p.mean_burst_s - 1.0).max(0.0)).round() as usize;
                pending = Some((sign * mag, len));
                (sign * mag, len)
            }
        };
        for k in t..(t + len).min(p.duration_s) {
            out[k] = level;
        }
        t += len;
    }
    out
}

/// Piecewise-constant segments. A zero `duration_s` means the summed
/// segment length; otherwise the last level is held or the tail cut.
fn steps(p: &ServiceParams) -> Vec<f64> {
    let mut out: Vec<f64> = p
        .steps
        .iter()
        .flat_map(|&(power, len)| std::iter::repeat(power).take(len))
        .collect();
    if p.duration_s > 0 {
        let last = p.steps.last().map_or(0.0, |s| s.0);
        out.resize(p.duration_s, last);
    }
    out
}

/// Deterministic synthetic service for a given seed.
pub fn make_synthetic_service(kind: ServiceKind, params: &ServiceParams, seed: u64) -> ServiceTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let power_kw = match kind {
        ServiceKind::Bursts => bursts(params, &mut rng),
        ServiceKind::Steps => steps(params),
        ServiceKind::Mixed => {
            let b = bursts(params, &mut rng);
            let s = steps(params);
            b.iter().zip(s.iter().chain(std::iter::repeat(&0.0))).map(|(a, c)| a + c).collect()
        }
    };
    ServiceTrace { power_kw }
}

/// Plant-side electrical model used to compute currents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantModel {
    pub circuit: CircuitParams,
    pub ocv_model: OcvModel,
    pub r_multiplier: f64,
}

impl PlantModel {
    pub fn matching(circuit: &CircuitParams) -> Self {
        Self {
            circuit: circuit.clone(),
            ocv_model: OcvModel::Linear,
            r_multiplier: 1.0,
        }
    }

    pub fn ocv(&self, soc: f64) -> f64 {
        match self.ocv_model {
            OcvModel::Linear => self.circuit.ocv.linear_at(soc),
            OcvModel::Table => self.circuit.ocv.interpolated_at(soc),
        }
    }

    pub fn resistance(&self) -> f64 {
        self.circuit.series_resistance_ohm * self.r_multiplier
    }

    /// Current and terminal voltage at `power_kw`; the current saturates at
    /// the power-transfer peak `v_oc / 2R` beyond the apex of the parabola.
    pub fn electrical(&self, soc: f64, power_kw: f64) -> (f64, f64, bool) {
        let v_oc = self.ocv(soc);
        let r = self.resistance();
        let p = power_kw * 1000.0;
        let disc = v_oc * v_oc - 4.0 * r * p;
        let (i, saturated) = if disc < 0.0 {
            (v_oc / (2.0 * r), true)
        } else {
            (2.0 * p / (v_oc + disc.sqrt()), false)
        };
        (i, v_oc - r * i, saturated)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub t_s: usize,
    pub service_kw: f64,
    pub offset_kw: f64,
    pub battery_kw: f64,
    /// SOC at the start of the second.
    pub soc: f64,
    pub current_a: f64,
    pub voltage_v: f64,
    pub saturated: bool,
}

/// Summary of one scheduler call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodLog {
    pub t_s: usize,
    pub soc: f64,
    pub offset_kw: f64,
    pub status: Option<SolveStatus>,
    pub slack_total: f64,
    pub objective: f64,
    pub sign_fixed: bool,
    pub complementarity_gap_kw: f64,
    pub iterations: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub records: Vec<SimRecord>,
    pub scheduler_log: Vec<PeriodLog>,
    pub soc0: f64,
    pub final_soc: f64,
    /// Battery model used by the plant for SOC integration (1 s steps).
    pub bess_1s: BessConfig,
}

impl SimulationTrace {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "t_s",
            "service_kw",
            "offset_kw",
            "battery_kw",
            "soc",
            "current_a",
            "voltage_v",
            "saturated",
        ])?;
        for r in &self.records {
            w.write_record([
                r.t_s.to_string(),
                r.service_kw.to_string(),
                r.offset_kw.to_string(),
                r.battery_kw.to_string(),
                r.soc.to_string(),
                r.current_a.to_string(),
                r.voltage_v.to_string(),
                (r.saturated as u8).to_string(),
            ])?;
        }
        flush(w)
    }

    pub fn read_records_csv<R: Read>(input: R) -> Result<Vec<SimRecord>> {
        #[derive(Deserialize)]
        struct Row {
            t_s: usize,
            service_kw: f64,
            offset_kw: f64,
            battery_kw: f64,
            soc: f64,
            current_a: f64,
            voltage_v: f64,
            saturated: u8,
        }
        let mut rd = csv::Reader::from_reader(input);
        let mut out = Vec::new();
        for row in rd.deserialize::<Row>() {
            let r = row?;
            out.push(SimRecord {
                t_s: r.t_s,
                service_kw: r.service_kw,
                offset_kw: r.offset_kw,
                battery_kw: r.battery_kw,
                soc: r.soc,
                current_a: r.current_a,
                voltage_v: r.voltage_v,
                saturated: r.saturated != 0,
            });
        }
        Ok(out)
    }
}

/// Runs the closed loop over the whole trace.
///
/// Scheduler failures do not stop the run: the failing period holds a zero
/// offset and the error is kept in the log.
pub fn run_closed_loop(
    trace: &ServiceTrace,
    cfg: &SchedulerConfig,
    forecasts: &ForecastSet,
    plant: &PlantModel,
    soc0: f64,
    period_s: usize,
    settings: &Settings,
) -> Result<SimulationTrace> {
    if period_s == 0 {
        return Err(Error::InvalidParam("scheduler period must be at least 1 s".into()));
    }
    if trace.duration_s() < period_s {
        return Err(Error::InvalidParam(format!(
            "trace of {} s is shorter than one {period_s} s period",
            trace.duration_s()
        )));
    }
    cfg.validate()?;
    crate::error::check_soc("soc0", soc0)?;
    let bess_1s = cfg.bess.with_step_hours(SECOND_HOURS);
    let mut scheduler = Scheduler::new(settings.clone());
    let mut records = Vec::with_capacity(trace.duration_s());
    let mut log = Vec::new();
    let mut soc = soc0;
    let mut offset = 0.0;
    for (t, &service) in trace.power_kw.iter().enumerate() {
        if t % period_s == 0 {
            let entry = match scheduler.schedule(soc.clamp(0.0, 1.0), forecasts, cfg) {
                Ok(r) => {
                    offset = r.offsets_kw[0];
                    PeriodLog {
                        t_s: t,
                        soc,
                        offset_kw: offset,
                        status: Some(r.status),
                        slack_total: r.slack_usage.total(),
                        objective: r.objective_value,
                        sign_fixed: r.sign_fixed,
                        complementarity_gap_kw: r.complementarity_gap_kw,
                        iterations: r.iterations,
                        error: None,
                    }
                }
                Err(e) => {
                    scheduler.reset();
                    offset = 0.0;
                    PeriodLog {
                        t_s: t,
                        soc,
                        offset_kw: 0.0,
                        status: None,
                        slack_total: 0.0,
                        objective: 0.0,
                        sign_fixed: false,
                        complementarity_gap_kw: 0.0,
                        iterations: 0,
                        error: Some(e.to_string()),
                    }
                }
            };
            log.push(entry);
        }
        let battery = service + offset;
        let (current_a, voltage_v, saturated) = plant.electrical(soc, battery);
        records.push(SimRecord {
            t_s: t,
            service_kw: service,
            offset_kw: offset,
            battery_kw: battery,
            soc,
            current_a,
            voltage_v,
            saturated,
        });
        soc -= h_step(battery, &bess_1s);
    }
    Ok(SimulationTrace {
        records,
        scheduler_log: log,
        soc0,
        final_soc: soc,
        bess_1s,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Upper,
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViolationEvent {
    pub side: Side,
    pub start_s: usize,
    /// Last violating second, inclusive.
    pub end_s: usize,
    pub peak_current_a: f64,
    pub limit_a: f64,
    /// `peak - limit`; positive on the upper side, negative on the lower.
    pub peak_diff_a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub n_violations: usize,
    pub mean_upper_a: Option<f64>,
    pub var_upper_a: Option<f64>,
    pub mean_lower_a: Option<f64>,
    pub var_lower_a: Option<f64>,
    pub events: Vec<ViolationEvent>,
}

fn mean_var(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (Some(mean), Some(var))
}

impl ViolationReport {
    pub fn from_events(events: Vec<ViolationEvent>) -> Self {
        let diffs = |side: Side| -> Vec<f64> {
            events.iter().filter(|e| e.side == side).map(|e| e.peak_diff_a).collect()
        };
        let (mean_upper_a, var_upper_a) = mean_var(&diffs(Side::Upper));
        let (mean_lower_a, var_lower_a) = mean_var(&diffs(Side::Lower));
        Self {
            n_violations: events.len(),
            mean_upper_a,
            var_upper_a,
            mean_lower_a,
            var_lower_a,
            events,
        }
    }

    pub fn count(&self, side: Side) -> usize {
        self.events.iter().filter(|e| e.side == side).count()
    }
}

/// SOC-dependent current limits `(i_lo, i_hi)` from the feasible power
/// interval of `circuit`, without a domain check on SOC.
pub fn current_limits(circuit: &CircuitParams, soc: f64) -> (f64, f64) {
    let v_oc = circuit.ocv.linear_at(soc);
    let b = circuit.combined_bounds_for_ocv(v_oc);
    let to_i = |p: f64| circuit.current_for_ocv(v_oc, p).unwrap_or(circuit.transfer_current_for_ocv(v_oc));
    (to_i(b.p_lo_kw), to_i(b.p_hi_kw))
}

/// Groups seconds with current beyond the SOC-dependent limit into events.
pub fn assess_violations(records: &[SimRecord], circuit: &CircuitParams) -> ViolationReport {
    let mut events = Vec::new();
    let mut open: Option<ViolationEvent> = None;
    for r in records {
        let (i_lo, i_hi) = current_limits(circuit, r.soc);
        let side = if r.current_a > i_hi {
            Some((Side::Upper, i_hi))
        } else if r.current_a < i_lo {
            Some((Side::Lower, i_lo))
        } else {
            None
        };
        match (side, open.as_mut()) {
            (Some((s, limit)), Some(ev)) if ev.side == s && ev.end_s + 1 == r.t_s => {
                ev.end_s = r.t_s;
                let diff = r.current_a - limit;
                let worse = match s {
                    Side::Upper => diff > ev.peak_diff_a,
                    Side::Lower => diff < ev.peak_diff_a,
                };
                if worse {
                    ev.peak_diff_a = diff;
                    ev.peak_current_a = r.current_a;
                    ev.limit_a = limit;
                }
            }
            (Some((s, limit)), _) => {
                if let Some(ev) = open.take() {
                    events.push(ev);
                }
                open = Some(ViolationEvent {
                    side: s,
                    start_s: r.t_s,
                    end_s: r.t_s,
                    peak_current_a: r.current_a,
                    limit_a: limit,
                    peak_diff_a: r.current_a - limit,
                });
            }
            (None, _) => {
                if let Some(ev) = open.take() {
                    events.push(ev);
                }
            }
        }
    }
    if let Some(ev) = open {
        events.push(ev);
    }
    ViolationReport::from_events(events)
}

/// Everything needed to run the closed loop for several initial SOCs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub circuit: CircuitParams,
    pub plant: PlantModel,
    pub bess: BessConfig,
    pub horizon: usize,
    pub soft_constraints: bool,
    pub slack_penalty: f64,
    pub envelope: EnvelopeOptions,
    pub period_s: usize,
    /// Service and forecasts for initial SOCs below `flip_soc`.
    pub service_low: ServiceTrace,
    pub forecasts_low: ForecastSet,
    /// Used from `flip_soc` upwards.
    pub service_high: ServiceTrace,
    pub forecasts_high: ForecastSet,
    pub flip_soc: f64,
}

impl SimScenario {
    pub fn inputs_for(&self, soc0: f64) -> (&ServiceTrace, &ForecastSet) {
        if soc0 >= self.flip_soc {
            (&self.service_high, &self.forecasts_high)
        } else {
            (&self.service_low, &self.forecasts_low)
        }
    }

    pub fn scheduler_config(&self, mode: Mode) -> Result<SchedulerConfig> {
        let mut cfg = SchedulerConfig::for_mode(
            mode,
            &self.circuit,
            self.bess.clone(),
            self.horizon,
            self.soft_constraints,
            &self.envelope,
        )?;
        cfg.slack_penalty = self.slack_penalty;
        Ok(cfg)
    }

    pub fn run(&self, soc0: f64, mode: Mode, settings: &Settings) -> Result<SimulationTrace> {
        let (service, forecasts) = self.inputs_for(soc0);
        let cfg = self.scheduler_config(mode)?;
        run_closed_loop(service, &cfg, forecasts, &self.plant, soc0, self.period_s, settings)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub soc0: f64,
    pub mode: Mode,
    pub report: ViolationReport,
    pub final_soc: f64,
    pub scheduler_errors: usize,
}

/// Runs every `(soc0, mode)` cell, in parallel, and returns rows ordered by
/// `soc0` list order and then `modes` order.
pub fn sweep_initial_soc(
    scenario: &SimScenario,
    soc0_list: &[f64],
    modes: &[Mode],
    settings: &Settings,
) -> Result<Vec<SweepRow>> {
    let cells: Vec<(f64, Mode)> = soc0_list
        .iter()
        .flat_map(|&s| modes.iter().map(move |&m| (s, m)))
        .collect();
    cells
        .par_iter()
        .map(|&(soc0, mode)| {
            let trace = scenario.run(soc0, mode, settings)?;
            Ok(SweepRow {
                soc0,
                mode,
                report: assess_violations(&trace.records, &scenario.circuit),
                final_soc: trace.final_soc,
                scheduler_errors: trace.scheduler_log.iter().filter(|l| l.error.is_some()).count(),
            })
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into())
}

/// Writes `mode,n_violations,mean_upper,var_upper,mean_lower,var_lower,soc0`.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["mode", "n_violations", "mean_upper", "var_upper", "mean_lower", "var_lower", "soc0"])?;
    for r in rows {
        w.write_record([
            r.mode.name().to_string(),
            r.report.n_violations.to_string(),
            opt(r.report.mean_upper_a),
            opt(r.report.var_upper_a),
            opt(r.report.mean_lower_a),
            opt(r.report.var_lower_a),
            r.soc0.to_string(),
        ])?;
    }
    flush(w)
}

/// A parsed row of a sweep CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCsvRow {
    pub mode: Mode,
    pub n_violations: usize,
    pub mean_upper: Option<f64>,
    pub var_upper: Option<f64>,
    pub mean_lower: Option<f64>,
    pub var_lower: Option<f64>,
    pub soc0: f64,
}

pub fn read_sweep_csv<R: Read>(input: R) -> Result<Vec<SweepCsvRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        if rec.len() != 7 {
            return Err(Error::Data(format!("sweep row has {} fields, expected 7", rec.len())));
        }
        let num = |k: usize| -> Result<Option<f64>> {
            let s = rec[k].trim();
            if s == "-" {
                return Ok(None);
            }
            s.parse::<f64>()
                .map(Some)
                .map_err(|e| Error::Data(format!("bad number {s:?}: {e}")))
        };
        out.push(SweepCsvRow {
            mode: Mode::parse(rec[0].trim()).ok_or_else(|| Error::Data(format!("unknown mode {:?}", &rec[0])))?,
            n_violations: rec[1]
                .trim()
                .parse()
                .map_err(|e| Error::Data(format!("bad count {:?}: {e}", &rec[1])))?,
            mean_upper: num(2)?,
            var_upper: num(3)?,
            mean_lower: num(4)?,
            var_lower: num(5)?,
            soc0: num(6)?.ok_or_else(|| Error::Data("missing soc0".into()))?,
        });
    }
    Ok(out)
}

/// Writes one row per event: `side,start_s,end_s,peak_current_a,limit_a,peak_diff_a`.
pub fn write_events_csv<W: Write>(report: &ViolationReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["side", "start_s", "end_s", "peak_current_a", "limit_a", "peak_diff_a"])?;
    for e in &report.events {
        let side = match e.side {
            Side::Upper => "upper",
            Side::Lower => "lower",
        };
        w.write_record([
            side.to_string(),
            e.start_s.to_string(),
            e.end_s.to_string(),
            e.peak_current_a.to_string(),
            e.limit_a.to_string(),
            e.peak_diff_a.to_string(),
        ])?;
    }
    flush(w)
}
