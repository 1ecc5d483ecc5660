//! Subcommand bodies. Each writes its files under the output directory and
//! prints a short summary to stdout.

use std::fs;
use std::path::{Path, PathBuf};

use dpc_core::envelope::{build_envelope, exact_bounds, PowerEnvelope};
use dpc_core::forecast::{estimate_forecast_set, read_power_trace, ForecastSet};
use dpc_core::scheduler::{schedule as solve_schedule, Mode, ScheduleResult, SolveStatus};
use dpc_core::sim::{
    assess_violations, current_limits, sweep_initial_soc, write_events_csv, write_sweep_csv, PeriodLog, SimRecord,
    SweepRow, ViolationReport,
};

use crate::config::Loaded;
use crate::svg::{thin, Chart, Series};
use crate::CliError;

const SVG_POINTS: usize = 3000;

pub struct Context {
    pub loaded: Loaded,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub mode: Option<String>,
}

impl Context {
    fn modes(&self) -> Result<Vec<Mode>, CliError> {
        self.loaded.modes(self.mode.as_deref())
    }

    fn soc0(&self, flag: Option<f64>) -> Result<f64, CliError> {
        let soc0 = flag.unwrap_or(self.loaded.cfg.scheduler.soc0);
        if !(0.0..=1.0).contains(&soc0) {
            return Err(CliError::Config(format!("soc0 = {soc0} is outside [0, 1]")));
        }
        Ok(soc0)
    }

    fn write(
        &self,
        name: &str,
        body: impl FnOnce(&mut Vec<u8>) -> Result<(), dpc_core::Error>,
    ) -> Result<PathBuf, CliError> {
        let mut buf = Vec::new();
        body(&mut buf)?;
        self.write_bytes(name, &buf)
    }

    fn write_bytes(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        fs::create_dir_all(&self.out).map_err(|source| CliError::Io {
            path: self.out.clone(),
            source,
        })?;
        let path = self.out.join(name);
        fs::write(&path, bytes).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        println!("wrote {}", path.display());
        Ok(path)
    }
}

pub fn envelope(ctx: &Context) -> Result<(), CliError> {
    let circuit = ctx.loaded.circuit()?;
    let base = ctx.loaded.envelope_options()?;
    let points = ctx.loaded.cfg.envelope.output_points;
    let mut chart = Chart::new("Power envelopes", "SOC", "power [kW]");
    for (tag, include_voltage) in [("dpc", true), ("nv", false)] {
        let opts = dpc_core::envelope::EnvelopeOptions {
            include_voltage,
            ..base.clone()
        };
        let env = build_envelope(&circuit, &opts)?;
        println!(
            "{tag}: {} upper and {} lower lines, fit error {:.3} kW",
            env.upper.len(),
            env.lower.len(),
            env.fit_error_kw
        );
        ctx.write(&format!("envelope_{tag}_coefficients.csv"), |b| env.write_coefficients_csv(b))?;
        ctx.write(&format!("envelope_{tag}_sampled.csv"), |b| env.write_sampled_csv(b, points))?;
        let (lo, hi) = opts.soc_domain;
        let grid: Vec<f64> = (0..points)
            .map(|k| lo + (hi - lo) * k as f64 / (points.max(2) - 1) as f64)
            .collect();
        let exact: Vec<_> = grid
            .iter()
            .map(|&s| (s, exact_bounds(&circuit, s, include_voltage, opts.ocv_model)))
            .collect();
        chart.push(Series::line(format!("{tag} exact max"), exact.iter().map(|(s, b)| (*s, b.p_hi_kw)).collect()).dashed());
        chart.push(Series::line(format!("{tag} exact min"), exact.iter().map(|(s, b)| (*s, b.p_lo_kw)).collect()).dashed());
        chart.push(Series::line(format!("{tag} fitted max"), grid.iter().map(|&s| (s, env.eval(s).1)).collect()));
        chart.push(Series::line(format!("{tag} fitted min"), grid.iter().map(|&s| (s, env.eval(s).0)).collect()));
    }
    ctx.write_bytes("envelope.svg", chart.render().as_bytes())?;
    Ok(())
}

pub fn schedule(ctx: &Context, soc0: Option<f64>) -> Result<(), CliError> {
    let soc0 = ctx.soc0(soc0)?;
    let forecasts = ctx.loaded.forecasts()?;
    let settings = ctx.loaded.settings();
    let circuit = ctx.loaded.circuit()?;
    let dpc_env = build_envelope(&circuit, &ctx.loaded.envelope_options()?)?;
    let mut stalled = Vec::new();
    for mode in ctx.modes()? {
        let cfg = ctx.loaded.scheduler_config(mode)?;
        let res = solve_schedule(soc0, &forecasts, &cfg, &settings)?;
        println!(
            "{mode}: objective {:.6}, slack {:.6}, gap {:.2e} kW{}",
            res.objective_value,
            res.slack_usage.total(),
            res.complementarity_gap_kw,
            if res.sign_fixed { ", sign-fixed" } else { "" }
        );
        ctx.write(&format!("schedule_{mode}.csv"), |b| res.write_csv(b))?;
        let svg = schedule_chart(mode, &res, &forecasts, cfg.bess.rated_power_kw, &dpc_env);
        ctx.write_bytes(&format!("schedule_{mode}.svg"), svg.as_bytes())?;
        if res.status == SolveStatus::MaxIter {
            stalled.push(mode.name());
        }
    }
    if !stalled.is_empty() {
        return Err(CliError::MaxIter(stalled.join(", ")));
    }
    Ok(())
}

fn schedule_chart(mode: Mode, res: &ScheduleResult, f: &ForecastSet, rated_kw: f64, env: &PowerEnvelope) -> String {
    let mut chart = Chart::new(&format!("Schedule ({mode})"), "step", "battery power [kW]");
    let horizon = res.offsets_kw.len();
    let steps = |v: &dyn Fn(usize) -> f64| -> Vec<(f64, f64)> {
        let mut pts: Vec<_> = (0..horizon).map(|t| (t as f64, v(t))).collect();
        if let Some(&(_, y)) = pts.last() {
            pts.push((horizon as f64, y));
        }
        pts
    };
    let soc = &res.soc_pi;
    let step_socs = |t: usize| [soc.soc_lo[t], soc.soc_hi[t], soc.soc_lo[t + 1], soc.soc_hi[t + 1]];
    chart.push(Series::line("offset F", steps(&|t| res.offsets_kw[t])).stepped());
    chart.push(Series::line("F + max service", steps(&|t| res.offsets_kw[t] + f.p_hi_kw[t])).stepped());
    chart.push(Series::line("F + min service", steps(&|t| res.offsets_kw[t] + f.p_lo_kw[t])).stepped());
    chart.push(Series::line("static limit", vec![(0.0, rated_kw), (horizon as f64, rated_kw)]).dashed());
    chart.push(Series::line("-static limit", vec![(0.0, -rated_kw), (horizon as f64, -rated_kw)]).dashed());
    chart.push(
        Series::line(
            "dynamic max",
            steps(&|t| step_socs(t).iter().map(|&s| env.eval(s).1).fold(f64::INFINITY, f64::min)),
        )
        .dashed()
        .stepped(),
    );
    chart.push(
        Series::line(
            "dynamic min",
            steps(&|t| step_socs(t).iter().map(|&s| env.eval(s).0).fold(f64::NEG_INFINITY, f64::max)),
        )
        .dashed()
        .stepped(),
    );
    chart.render()
}

pub fn simulate(ctx: &Context, soc0: Option<f64>) -> Result<(), CliError> {
    let soc0 = ctx.soc0(soc0)?;
    let scenario = ctx.loaded.sim_scenario(ctx.seed)?;
    let settings = ctx.loaded.settings();
    let mut rows = Vec::new();
    for mode in ctx.modes()? {
        let trace = scenario.run(soc0, mode, &settings)?;
        let report = assess_violations(&trace.records, &scenario.circuit);
        let errors = trace.scheduler_log.iter().filter(|l| l.error.is_some()).count();
        println!(
            "{mode}: {} violations, final soc {:.6}, {errors} scheduler errors",
            report.n_violations, trace.final_soc
        );
        ctx.write(&format!("sim_{mode}.csv"), |b| trace.write_csv(b))?;
        ctx.write(&format!("events_{mode}.csv"), |b| write_events_csv(&report, b))?;
        ctx.write(&format!("log_{mode}.csv"), |b| write_log_csv(&trace.scheduler_log, b))?;
        let svg = sim_chart(mode, &trace.records, &report, &scenario.circuit);
        ctx.write_bytes(&format!("sim_{mode}.svg"), svg.as_bytes())?;
        rows.push(SweepRow {
            soc0,
            mode,
            report,
            final_soc: trace.final_soc,
            scheduler_errors: errors,
        });
    }
    ctx.write("report.csv", |b| write_sweep_csv(&rows, b))?;
    Ok(())
}

/// Writes one row per scheduling period.
pub fn write_log_csv<W: std::io::Write>(log: &[PeriodLog], out: W) -> Result<(), dpc_core::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "t_s",
        "soc",
        "offset_kw",
        "status",
        "slack_total",
        "objective",
        "sign_fixed",
        "gap_kw",
        "iterations",
        "error",
    ])?;
    for l in log {
        let status = match l.status {
            Some(SolveStatus::Solved) => "solved",
            Some(SolveStatus::MaxIter) => "max_iter",
            None => "failed",
        };
        w.write_record([
            l.t_s.to_string(),
            format!("{:.9}", l.soc),
            format!("{:.6}", l.offset_kw),
            status.to_string(),
            format!("{:.6}", l.slack_total),
            format!("{:.6}", l.objective),
            (l.sign_fixed as u8).to_string(),
            format!("{:.3e}", l.complementarity_gap_kw),
            l.iterations.to_string(),
            l.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|source| dpc_core::Error::Io {
        path: "<log csv>".into(),
        source,
    })
}

fn sim_chart(mode: Mode, records: &[SimRecord], report: &ViolationReport, circuit: &dpc_core::circuit::CircuitParams) -> String {
    let mut chart = Chart::new(&format!("Closed loop ({mode})"), "time [s]", "current [A]");
    let limits: Vec<(f64, f64)> = records.iter().map(|r| current_limits(circuit, r.soc)).collect();
    chart.push(Series::line(
        "current",
        thin(records.iter().map(|r| (r.t_s as f64, r.current_a)).collect(), SVG_POINTS),
    ));
    chart.push(
        Series::line(
            "max current",
            thin(records.iter().zip(&limits).map(|(r, l)| (r.t_s as f64, l.1)).collect(), SVG_POINTS),
        )
        .dashed(),
    );
    chart.push(
        Series::line(
            "min current",
            thin(records.iter().zip(&limits).map(|(r, l)| (r.t_s as f64, l.0)).collect(), SVG_POINTS),
        )
        .dashed(),
    );
    chart.markers = report
        .events
        .iter()
        .map(|e| (e.start_s as f64, e.peak_current_a))
        .collect();
    chart.render()
}

pub fn sweep(ctx: &Context) -> Result<(), CliError> {
    let section = ctx
        .loaded
        .cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [sweep] section".into()))?;
    if section.soc0.is_empty() {
        return Err(CliError::Config("sweep.soc0 is empty".into()));
    }
    if let Some(bad) = section.soc0.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(CliError::Config(format!("sweep.soc0 value {bad} is outside [0, 1]")));
    }
    let scenario = ctx.loaded.sim_scenario(ctx.seed)?;
    let modes = ctx.modes()?;
    let rows = sweep_initial_soc(&scenario, &section.soc0, &modes, &ctx.loaded.settings())?;
    for mode in &modes {
        let total: usize = rows.iter().filter(|r| r.mode == *mode).map(|r| r.report.n_violations).sum();
        let errors: usize = rows.iter().filter(|r| r.mode == *mode).map(|r| r.scheduler_errors).sum();
        println!("{mode}: {total} violations over {} runs, {errors} scheduler errors", section.soc0.len());
    }
    ctx.write("sweep.csv", |b| write_sweep_csv(&rows, b))?;
    let mut chart = Chart::new("Violations by initial SOC", "initial SOC", "violations");
    for mode in &modes {
        chart.push(Series::line(
            mode.name(),
            rows.iter()
                .filter(|r| r.mode == *mode)
                .map(|r| (r.soc0, r.report.n_violations as f64))
                .collect(),
        ));
    }
    ctx.write_bytes("sweep.svg", chart.render().as_bytes())?;
    Ok(())
}

pub fn forecast(ctx: &Context, trace: Option<&Path>) -> Result<(), CliError> {
    let set = match trace {
        Some(path) => {
            let bytes = fs::read(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let series =
                read_power_trace(bytes.as_slice()).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let (q_lo, q_hi) = ctx
                .loaded
                .cfg
                .forecast
                .as_ref()
                .map(|f| (f.quantile_lo, f.quantile_hi))
                .unwrap_or((0.05, 0.95));
            let resample_s = ctx.loaded.cfg.bess.step_s.round() as usize;
            estimate_forecast_set(&series, resample_s, q_lo, q_hi, ctx.loaded.cfg.scheduler.horizon)?
        }
        None => ctx.loaded.forecasts()?,
    };
    println!(
        "power [{:.3}, {:.3}] kW, energy [{:.4}, {:.4}] kWh at step 0",
        set.p_lo_kw[0], set.p_hi_kw[0], set.w_lo_kwh[0], set.w_hi_kwh[0]
    );
    ctx.write("forecast.csv", |b| set.write_csv(b))?;
    Ok(())
}
