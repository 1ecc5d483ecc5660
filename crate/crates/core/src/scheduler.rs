//! Offset-profile schedulers with static or SOC-dependent power constraints.
//!
//! Every variant minimizes `sum_t c_t F_t^2` subject to SOC prediction
//! intervals staying within limits and the forecast battery power
//! `P_t + F_t` staying within power bounds. The bounds are `+-B^r` for
//! [`Mode::Spc`] and envelope lines evaluated on the predicted SOC for the
//! dynamic modes.
//!
//! The SOC map is piecewise linear in power. Each signed step power is split
//! as `x+ - x-` with both parts non-negative, which makes it affine. The
//! relaxation allows simultaneous charge and discharge; results are audited
//! and re-solved with fixed signs when that happens.

use std::io::Write;
use std::ops::Range;

use dpc_qp::{CsrMatrix, QpSolution, QuadraticProgram, Settings, Solver, Status, WarmStart};
use serde::{Deserialize, Serialize};

use crate::circuit::CircuitParams;
use crate::envelope::{build_envelope, EnvelopeOptions, PowerEnvelope};
use crate::error::{check_soc, Error, Result};
use crate::forecast::ForecastSet;
use crate::soc::{soc_pi_trajectories, BessConfig, SocTrajectory};

const SPLIT_WEIGHT: f64 = 1e-12;
const SPLIT_COST: f64 = 1e-7;
const SLACK_WEIGHT: f64 = 1e-9;
const MIN_COST_WEIGHT: f64 = 1e-9;
/// Largest tolerated `min(x+, x-)` in kW before signs are fixed.
pub const COMPLEMENTARITY_TOL_KW: f64 = 1e-3;
/// Slack below this is reported as unused.
const SLACK_USED_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Mode {
    Spc,
    Dpc,
    DpcNoVoltage,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Spc, Mode::Dpc, Mode::DpcNoVoltage];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Spc => "spc",
            Mode::Dpc => "dpc",
            Mode::DpcNoVoltage => "dpc-nv",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        Mode::ALL.into_iter().find(|m| m.name() == s)
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub mode: Mode,
    pub horizon: usize,
    /// Per-step weights `c_t`; empty means all ones.
    pub cost_weights: Vec<f64>,
    pub soft_constraints: bool,
    pub slack_penalty: f64,
    /// Required by the dynamic modes.
    pub envelope: Option<PowerEnvelope>,
    pub bess: BessConfig,
}

impl SchedulerConfig {
    /// Config for `mode` with the envelope that mode expects: full limits
    /// for DPC, current limits only for the no-voltage variant.
    pub fn for_mode(
        mode: Mode,
        circuit: &CircuitParams,
        bess: BessConfig,
        horizon: usize,
        soft_constraints: bool,
        envelope_opts: &EnvelopeOptions,
    ) -> Result<Self> {
        let envelope = match mode {
            Mode::Spc => None,
            Mode::Dpc => Some(build_envelope(
                circuit,
                &EnvelopeOptions {
                    include_voltage: true,
                    ..envelope_opts.clone()
                },
            )?),
            Mode::DpcNoVoltage => Some(build_envelope(
                circuit,
                &EnvelopeOptions {
                    include_voltage: false,
                    ..envelope_opts.clone()
                },
            )?),
        };
        Ok(Self {
            mode,
            horizon,
            cost_weights: Vec::new(),
            soft_constraints,
            slack_penalty: 1e6,
            envelope,
            bess,
        })
    }

    pub fn weight(&self, t: usize) -> f64 {
        self.cost_weights.get(t).copied().unwrap_or(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        self.bess.validate()?;
        if self.horizon == 0 {
            return Err(Error::InvalidParam("horizon must be at least 1".into()));
        }
        if !self.cost_weights.is_empty() && self.cost_weights.len() != self.horizon {
            return Err(Error::Shape(format!(
                "{} cost weights for a horizon of {}",
                self.cost_weights.len(),
                self.horizon
            )));
        }
        if self.cost_weights.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) {
            return Err(Error::InvalidParam("cost weights must be finite and >= 0".into()));
        }
        if !(self.slack_penalty > 0.0) || !self.slack_penalty.is_finite() {
            return Err(Error::InvalidParam(format!(
                "slack penalty must be > 0, got {}",
                self.slack_penalty
            )));
        }
        if self.mode != Mode::Spc {
            let env = self
                .envelope
                .as_ref()
                .ok_or_else(|| Error::InvalidParam(format!("mode {} needs an envelope", self.mode)))?;
            if !env.is_well_formed() {
                return Err(Error::InvalidParam(
                    "envelope upper lines must combine by min and lower lines by max".into(),
                ));
            }
            let (lo, hi) = env.soc_domain;
            if lo > self.bess.soc_min || hi < self.bess.soc_max {
                return Err(Error::InvalidParam(format!(
                    "envelope domain ({lo}, {hi}) does not cover the SOC limits ({}, {})",
                    self.bess.soc_min, self.bess.soc_max
                )));
            }
        }
        Ok(())
    }
}

/// Constraint families that may receive slack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    SocLower,
    SocUpper,
    PowerUpper,
    PowerLower,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::SocLower, Family::SocUpper, Family::PowerUpper, Family::PowerLower];

    pub fn name(self) -> &'static str {
        match self {
            Family::SocLower => "soc_lower",
            Family::SocUpper => "soc_upper",
            Family::PowerUpper => "power_upper",
            Family::PowerLower => "power_lower",
        }
    }
}

/// Summed slack per family; SOC slacks in kWh, power slacks in kW.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SlackUsage {
    pub soc_lower_kwh: f64,
    pub soc_upper_kwh: f64,
    pub power_upper_kw: f64,
    pub power_lower_kw: f64,
}

impl SlackUsage {
    pub fn get(&self, f: Family) -> f64 {
        match f {
            Family::SocLower => self.soc_lower_kwh,
            Family::SocUpper => self.soc_upper_kwh,
            Family::PowerUpper => self.power_upper_kw,
            Family::PowerLower => self.power_lower_kw,
        }
    }

    pub fn total(&self) -> f64 {
        Family::ALL.iter().map(|&f| self.get(f)).sum()
    }

    pub fn used(&self) -> Vec<Family> {
        Family::ALL.into_iter().filter(|&f| self.get(f) > SLACK_USED_TOL).collect()
    }
}

/// Variable and row layout of a built problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub horizon: usize,
    pub soft: bool,
    /// Row range of the non-negativity rows of the split variables, in the
    /// order `x+, x-, y+, y-`.
    pub split_rows: Range<usize>,
}

impl Layout {
    pub fn offset(&self, t: usize) -> usize {
        t
    }

    /// Discharge/charge parts of the trajectory driven by the upper energy
    /// interval (lower SOC bound).
    pub fn x_plus(&self, t: usize) -> usize {
        self.horizon + t
    }

    pub fn x_minus(&self, t: usize) -> usize {
        2 * self.horizon + t
    }

    /// Parts of the trajectory driven by the lower energy interval.
    pub fn y_plus(&self, t: usize) -> usize {
        3 * self.horizon + t
    }

    pub fn y_minus(&self, t: usize) -> usize {
        4 * self.horizon + t
    }

    pub fn slack(&self, f: Family, t: usize) -> Option<usize> {
        if !self.soft {
            return None;
        }
        let k = Family::ALL.iter().position(|&g| g == f).expect("family listed");
        Some((5 + k) * self.horizon + t)
    }

    pub fn num_vars(&self) -> usize {
        if self.soft {
            9 * self.horizon
        } else {
            5 * self.horizon
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltProblem {
    pub qp: QuadraticProgram,
    pub layout: Layout,
}

struct Rows {
    triplets: Vec<(usize, usize, f64)>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Rows {
    fn push(&mut self, coeffs: &[(usize, f64)], lower: f64, upper: f64) -> usize {
        let r = self.lower.len();
        for &(c, v) in coeffs {
            self.triplets.push((r, c, v));
        }
        self.lower.push(lower);
        self.upper.push(upper);
        r
    }
}

/// Which split pair drives a SOC trajectory.
#[derive(Clone, Copy)]
enum Trajectory {
    Lower,
    Upper,
}

fn split_vars(layout: &Layout, traj: Trajectory, t: usize) -> (usize, usize) {
    match traj {
        Trajectory::Lower => (layout.x_plus(t), layout.x_minus(t)),
        Trajectory::Upper => (layout.y_plus(t), layout.y_minus(t)),
    }
}

/// Coefficients of `E * (soc0 - SOC_s)` in kWh, i.e. the energy drawn over
/// steps `0..s`.
fn drawn_energy(layout: &Layout, traj: Trajectory, s: usize, bess: &BessConfig, scale: f64) -> Vec<(usize, f64)> {
    let dt = bess.step_hours;
    let eta = bess.efficiency;
    let mut out = Vec::with_capacity(2 * s);
    for tau in 0..s {
        let (p, m) = split_vars(layout, traj, tau);
        out.push((p, scale * dt / eta));
        out.push((m, -scale * dt * eta));
    }
    out
}

fn check_inputs(soc0: f64, forecasts: &ForecastSet, cfg: &SchedulerConfig) -> Result<()> {
    check_soc("soc0", soc0)?;
    cfg.validate()?;
    if forecasts.horizon() != cfg.horizon {
        return Err(Error::Shape(format!(
            "forecast horizon {} differs from scheduler horizon {}",
            forecasts.horizon(),
            cfg.horizon
        )));
    }
    forecasts.validate(cfg.bess.step_hours)
}

/// Adds the variables, split equalities, bounds and SOC rows shared by all
/// modes. Power rows are added by the caller.
fn common(soc0: f64, forecasts: &ForecastSet, cfg: &SchedulerConfig) -> (Layout, Vec<f64>, Vec<f64>, Rows) {
    let t_len = cfg.horizon;
    let soft = cfg.soft_constraints;
    let mut layout = Layout {
        horizon: t_len,
        soft,
        split_rows: 0..0,
    };
    let n = layout.num_vars();
    let mut w = vec![SPLIT_WEIGHT; n];
    let mut c = vec![0.0; n];
    for t in 0..t_len {
        w[layout.offset(t)] = cfg.weight(t).max(MIN_COST_WEIGHT);
        for v in [layout.x_plus(t), layout.x_minus(t), layout.y_plus(t), layout.y_minus(t)] {
            c[v] = SPLIT_COST;
        }
        for f in Family::ALL {
            if let Some(s) = layout.slack(f, t) {
                w[s] = SLACK_WEIGHT;
                c[s] = cfg.slack_penalty;
            }
        }
    }

    let mut rows = Rows {
        triplets: Vec::new(),
        lower: Vec::new(),
        upper: Vec::new(),
    };
    let dt = cfg.bess.step_hours;
    for t in 0..t_len {
        let f = layout.offset(t);
        let lo = forecasts.w_hi_kwh[t] / dt;
        rows.push(&[(layout.x_plus(t), 1.0), (layout.x_minus(t), -1.0), (f, -1.0)], lo, lo);
        let hi = forecasts.w_lo_kwh[t] / dt;
        rows.push(&[(layout.y_plus(t), 1.0), (layout.y_minus(t), -1.0), (f, -1.0)], hi, hi);
    }
    let start = rows.lower.len();
    for var in t_len..5 * t_len {
        rows.push(&[(var, 1.0)], 0.0, f64::INFINITY);
    }
    layout.split_rows = start..rows.lower.len();
    if soft {
        for var in 5 * t_len..9 * t_len {
            rows.push(&[(var, 1.0)], 0.0, f64::INFINITY);
        }
    }

    let e = cfg.bess.energy_capacity_kwh;
    for t in 0..t_len {
        // E soc0 - drawn >= E soc_min
        let mut coeffs = drawn_energy(&layout, Trajectory::Lower, t + 1, &cfg.bess, 1.0);
        if let Some(s) = layout.slack(Family::SocLower, t) {
            coeffs.push((s, -1.0));
        }
        rows.push(&coeffs, f64::NEG_INFINITY, e * (soc0 - cfg.bess.soc_min));
        // E soc0 - drawn <= E soc_max
        let mut coeffs = drawn_energy(&layout, Trajectory::Upper, t + 1, &cfg.bess, 1.0);
        if let Some(s) = layout.slack(Family::SocUpper, t) {
            coeffs.push((s, 1.0));
        }
        rows.push(&coeffs, e * (soc0 - cfg.bess.soc_max), f64::INFINITY);
    }
    (layout, w, c, rows)
}

fn finish(layout: Layout, w: Vec<f64>, c: Vec<f64>, rows: Rows) -> Result<BuiltProblem> {
    let n = layout.num_vars();
    let m = rows.lower.len();
    let a = CsrMatrix::from_triplets(m, n, &rows.triplets);
    let qp = QuadraticProgram::new(w, c, a, rows.lower, rows.upper)?;
    Ok(BuiltProblem { qp, layout })
}

/// Static power bounds `-B^r <= P + F <= B^r`.
pub fn build_spc_problem(soc0: f64, forecasts: &ForecastSet, cfg: &SchedulerConfig) -> Result<BuiltProblem> {
    check_inputs(soc0, forecasts, cfg)?;
    let b_r = cfg.bess.rated_power_kw;
    if !cfg.soft_constraints {
        let bad: Vec<usize> = (0..cfg.horizon)
            .filter(|&t| forecasts.p_hi_kw[t] - forecasts.p_lo_kw[t] > 2.0 * b_r)
            .collect();
        if !bad.is_empty() {
            return Err(Error::Infeasible {
                diagnosis: vec![format!(
                    "{}: power interval wider than 2 x rated power at steps {bad:?}",
                    Family::PowerUpper.name()
                )],
            });
        }
    }
    let (layout, w, c, mut rows) = common(soc0, forecasts, cfg);
    for t in 0..cfg.horizon {
        let f = layout.offset(t);
        let mut up = vec![(f, 1.0)];
        if let Some(s) = layout.slack(Family::PowerUpper, t) {
            up.push((s, -1.0));
        }
        rows.push(&up, f64::NEG_INFINITY, b_r - forecasts.p_hi_kw[t]);
        let mut lo = vec![(f, 1.0)];
        if let Some(s) = layout.slack(Family::PowerLower, t) {
            lo.push((s, 1.0));
        }
        rows.push(&lo, -b_r - forecasts.p_lo_kw[t], f64::INFINITY);
    }
    finish(layout, w, c, rows)
}

/// Envelope lines evaluated on both SOC trajectories at the start and end
/// of every step.
pub fn build_dpc_problem(soc0: f64, forecasts: &ForecastSet, cfg: &SchedulerConfig) -> Result<BuiltProblem> {
    check_inputs(soc0, forecasts, cfg)?;
    let env = cfg.envelope.as_ref().expect("validated");
    let (layout, w, c, mut rows) = common(soc0, forecasts, cfg);
    let e = cfg.bess.energy_capacity_kwh;
    for t in 0..cfg.horizon {
        let f = layout.offset(t);
        for s in [t, t + 1] {
            let trajectories: &[Trajectory] = if s == 0 {
                &[Trajectory::Lower]
            } else {
                &[Trajectory::Lower, Trajectory::Upper]
            };
            for &traj in trajectories {
                // P_up + F <= a + b (soc0 - drawn / E)
                for line in &env.upper {
                    let mut coeffs = vec![(f, 1.0)];
                    coeffs.extend(drawn_energy(&layout, traj, s, &cfg.bess, line.b_kw_per_soc / e));
                    if let Some(sl) = layout.slack(Family::PowerUpper, t) {
                        coeffs.push((sl, -1.0));
                    }
                    let rhs = line.a_kw + line.b_kw_per_soc * soc0 - forecasts.p_hi_kw[t];
                    rows.push(&coeffs, f64::NEG_INFINITY, rhs);
                }
                // P_lo + F >= a + b (soc0 - drawn / E)
                for line in &env.lower {
                    let mut coeffs = vec![(f, 1.0)];
                    coeffs.extend(drawn_energy(&layout, traj, s, &cfg.bess, line.b_kw_per_soc / e));
                    if let Some(sl) = layout.slack(Family::PowerLower, t) {
                        coeffs.push((sl, 1.0));
                    }
                    let rhs = line.a_kw + line.b_kw_per_soc * soc0 - forecasts.p_lo_kw[t];
                    rows.push(&coeffs, rhs, f64::INFINITY);
                }
            }
        }
    }
    finish(layout, w, c, rows)
}

pub fn build_problem(soc0: f64, forecasts: &ForecastSet, cfg: &SchedulerConfig) -> Result<BuiltProblem> {
    match cfg.mode {
        Mode::Spc => build_spc_problem(soc0, forecasts, cfg),
        Mode::Dpc | Mode::DpcNoVoltage => build_dpc_problem(soc0, forecasts, cfg),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleResult {
    pub offsets_kw: Vec<f64>,
    pub soc_pi: SocTrajectory,
    pub slack_usage: SlackUsage,
    /// Per-step slack summed over families.
    pub slack_per_step: Vec<f64>,
    pub status: SolveStatus,
    /// `sum_t c_t F_t^2`
    pub objective_value: f64,
    /// `max_t min(x+, x-)` over both trajectories after any re-solve.
    pub complementarity_gap_kw: f64,
    /// Gap of the relaxed solve, before any sign fixing.
    pub relaxed_gap_kw: f64,
    pub sign_fixed: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Solved,
    MaxIter,
}

fn complementarity_gap(x: &[f64], layout: &Layout) -> f64 {
    (0..layout.horizon)
        .map(|t| {
            let a = x[layout.x_plus(t)].min(x[layout.x_minus(t)]);
            let b = x[layout.y_plus(t)].min(x[layout.y_minus(t)]);
            a.max(b)
        })
        .fold(0.0, f64::max)
}

/// Fixes each split pair to the sign of its net value in `x`.
fn sign_fixed(problem: &BuiltProblem, x: &[f64]) -> QuadraticProgram {
    let mut qp = problem.qp.clone();
    let l = &problem.layout;
    let t_len = l.horizon;
    for t in 0..t_len {
        for (p, m) in [(l.x_plus(t), l.x_minus(t)), (l.y_plus(t), l.y_minus(t))] {
            let zero = if x[p] - x[m] >= 0.0 { m } else { p };
            // Split rows are one per variable starting at index `horizon`.
            let row = l.split_rows.start + (zero - t_len);
            qp.upper[row] = 0.0;
        }
    }
    qp
}

/// Solver wrapper that keeps a warm start between calls.
#[derive(Debug, Clone)]
pub struct Scheduler {
    solver: Solver,
    warm: Option<WarmStart>,
}

impl Scheduler {
    pub fn new(settings: Settings) -> Self {
        Self {
            solver: Solver::new(settings),
            warm: None,
        }
    }

    pub fn reset(&mut self) {
        self.warm = None;
    }

    fn solve_qp(&mut self, qp: &QuadraticProgram) -> Result<QpSolution> {
        let warm = self
            .warm
            .as_ref()
            .filter(|w| w.x.len() == qp.num_vars() && w.duals.len() == qp.num_constraints());
        Ok(self.solver.solve_warm(qp, warm)?)
    }

    pub fn schedule(&mut self, soc0: f64, forecasts: &ForecastSet, cfg: &SchedulerConfig) -> Result<ScheduleResult> {
        let problem = build_problem(soc0, forecasts, cfg)?;
        let mut sol = self.solve_qp(&problem.qp)?;
        if sol.status == Status::Infeasible {
            self.warm = None;
            if cfg.soft_constraints {
                return Err(Error::Solver("soft-constrained problem reported infeasible".into()));
            }
            return Err(Error::Infeasible {
                diagnosis: self.diagnose(soc0, forecasts, cfg),
            });
        }
        let relaxed_gap = complementarity_gap(&sol.x, &problem.layout);
        let mut iterations = sol.iterations;
        let mut fixed = false;
        if relaxed_gap > COMPLEMENTARITY_TOL_KW {
            let qp = sign_fixed(&problem, &sol.x);
            let resolved = self.solver.solve_warm(&qp, Some(&WarmStart::from(&sol)))?;
            iterations += resolved.iterations;
            if resolved.status != Status::Infeasible {
                sol = resolved;
                fixed = true;
            }
        }
        self.warm = Some(WarmStart::from(&sol));
        self.unpack(soc0, forecasts, cfg, &problem.layout, &sol, relaxed_gap, fixed, iterations)
    }

    #[allow(clippy::too_many_arguments)]
    fn unpack(
        &self,
        soc0: f64,
        forecasts: &ForecastSet,
        cfg: &SchedulerConfig,
        layout: &Layout,
        sol: &QpSolution,
        relaxed_gap_kw: f64,
        sign_fixed: bool,
        iterations: usize,
    ) -> Result<ScheduleResult> {
        let t_len = cfg.horizon;
        let offsets_kw: Vec<f64> = (0..t_len).map(|t| sol.x[layout.offset(t)]).collect();
        let soc_pi = soc_pi_trajectories(soc0, &forecasts.w_lo_kwh, &forecasts.w_hi_kwh, &offsets_kw, &cfg.bess)?;
        let mut usage = SlackUsage::default();
        let mut per_step = vec![0.0; t_len];
        for t in 0..t_len {
            for f in Family::ALL {
                if let Some(s) = layout.slack(f, t) {
                    let v = sol.x[s].max(0.0);
                    per_step[t] += v;
                    match f {
                        Family::SocLower => usage.soc_lower_kwh += v,
                        Family::SocUpper => usage.soc_upper_kwh += v,
                        Family::PowerUpper => usage.power_upper_kw += v,
                        Family::PowerLower => usage.power_lower_kw += v,
                    }
                }
            }
        }
        let objective_value = offsets_kw.iter().enumerate().map(|(t, f)| cfg.weight(t) * f * f).sum();
        Ok(ScheduleResult {
            offsets_kw,
            soc_pi,
            slack_usage: usage,
            slack_per_step: per_step,
            status: match sol.status {
                Status::Solved => SolveStatus::Solved,
                _ => SolveStatus::MaxIter,
            },
            objective_value,
            complementarity_gap_kw: complementarity_gap(&sol.x, layout),
            relaxed_gap_kw,
            sign_fixed,
            iterations,
        })
    }

    /// Families that need slack when the problem is relaxed.
    fn diagnose(&mut self, soc0: f64, forecasts: &ForecastSet, cfg: &SchedulerConfig) -> Vec<String> {
        let soft = SchedulerConfig {
            soft_constraints: true,
            ..cfg.clone()
        };
        let mut probe = Scheduler::new(self.solver.settings().clone());
        match probe.schedule(soc0, forecasts, &soft) {
            Ok(r) => {
                let used = r.slack_usage.used();
                if used.is_empty() {
                    vec!["no family needs slack; the hard problem is numerically infeasible".into()]
                } else {
                    used.iter()
                        .map(|f| format!("{} (slack {:.6})", f.name(), r.slack_usage.get(*f)))
                        .collect()
                }
            }
            Err(e) => vec![format!("relaxed problem failed too: {e}")],
        }
    }
}

/// One-shot schedule with a fresh solver.
pub fn schedule(soc0: f64, forecasts: &ForecastSet, cfg: &SchedulerConfig, settings: &Settings) -> Result<ScheduleResult> {
    Scheduler::new(settings.clone()).schedule(soc0, forecasts, cfg)
}

/// Re-evaluates the SOC and power constraints on `result.offsets_kw` with
/// the SOC module and returns every violation larger than `tol` (kW for
/// power rows, SOC fraction for SOC rows).
pub fn certify(soc0: f64, forecasts: &ForecastSet, cfg: &SchedulerConfig, result: &ScheduleResult, tol: f64) -> Vec<String> {
    let mut out = Vec::new();
    let f = &result.offsets_kw;
    let traj = match soc_pi_trajectories(soc0, &forecasts.w_lo_kwh, &forecasts.w_hi_kwh, f, &cfg.bess) {
        Ok(t) => t,
        Err(e) => return vec![e.to_string()],
    };
    for s in 1..=cfg.horizon {
        if traj.soc_lo[s] < cfg.bess.soc_min - tol {
            out.push(format!("soc_lower at {s}: {} < {}", traj.soc_lo[s], cfg.bess.soc_min));
        }
        if traj.soc_hi[s] > cfg.bess.soc_max + tol {
            out.push(format!("soc_upper at {s}: {} > {}", traj.soc_hi[s], cfg.bess.soc_max));
        }
    }
    for t in 0..cfg.horizon {
        let b_hi = forecasts.p_hi_kw[t] + f[t];
        let b_lo = forecasts.p_lo_kw[t] + f[t];
        match (&cfg.mode, &cfg.envelope) {
            (Mode::Spc, _) | (_, None) => {
                let b_r = cfg.bess.rated_power_kw;
                if b_hi > b_r + tol {
                    out.push(format!("power_upper at {t}: {b_hi} > {b_r}"));
                }
                if b_lo < -b_r - tol {
                    out.push(format!("power_lower at {t}: {b_lo} < {}", -b_r));
                }
            }
            (_, Some(env)) => {
                for soc in [traj.soc_lo[t], traj.soc_lo[t + 1], traj.soc_hi[t], traj.soc_hi[t + 1]] {
                    let (p_lo, p_hi) = env.eval(soc);
                    if b_hi > p_hi + tol {
                        out.push(format!("power_upper at {t} (soc {soc}): {b_hi} > {p_hi}"));
                    }
                    if b_lo < p_lo - tol {
                        out.push(format!("power_lower at {t} (soc {soc}): {b_lo} < {p_lo}"));
                    }
                }
            }
        }
    }
    out
}

impl ScheduleResult {
    /// Writes `t,F_kw,soc_lo,soc_hi,slack_total`. SOC values are at the end
    /// of each step.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "F_kw", "soc_lo", "soc_hi", "slack_total"])?;
        for (t, f) in self.offsets_kw.iter().enumerate() {
            w.write_record([
                t.to_string(),
                f.to_string(),
                self.soc_pi.soc_lo[t + 1].to_string(),
                self.soc_pi.soc_hi[t + 1].to_string(),
                self.slack_per_step[t].to_string(),
            ])?;
        }
        w.flush().map_err(|source| Error::Io {
            path: "<schedule csv>".into(),
            source,
        })?;
        Ok(())
    }
}

/// A row of a schedule CSV.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ScheduleRow {
    pub t: usize,
    #[serde(rename = "F_kw")]
    pub f_kw: f64,
    pub soc_lo: f64,
    pub soc_hi: f64,
    pub slack_total: f64,
}

pub fn read_schedule_csv<R: std::io::Read>(input: R) -> Result<Vec<ScheduleRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in rd.deserialize() {
        out.push(row?);
    }
    Ok(out)
}
