//! Acceptance checks, one PASS/FAIL line each. Exits nonzero if any fail.

#[path = "../../qp/tests/support/mod.rs"]
mod support;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use dpc_core::circuit::CircuitParams;
use dpc_core::envelope::{build_envelope, EnvelopeOptions, Line};
use dpc_core::fixtures::{
    motivating_bess, motivating_forecasts, motivating_pack, sim_bess, power_intensive_scenario, reference_pack,
    sim_pack, SIM_SEED,
};
use dpc_core::forecast::ForecastSet;
use dpc_core::scheduler::{schedule, Mode, ScheduleResult, SchedulerConfig, SolveStatus};
use dpc_core::sim::{sweep_initial_soc, SweepRow};
use dpc_qp::{kkt_residuals, Settings, Solver, Status};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SWEEP_SOC0: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Scans the current at 0.01 A and keeps the extreme powers whose terminal
/// voltage stays inside the window.
fn scan_bounds(c: &CircuitParams, soc: f64) -> (f64, f64) {
    let v_oc = c.ocv.linear_at(soc);
    let steps = (c.i_max_a * 100.0).round() as i64;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in -steps..=steps {
        let i = k as f64 * 0.01;
        let v = v_oc - c.series_resistance_ohm * i;
        if v < c.v_min_v || v > c.v_max_v {
            continue;
        }
        let p = v * i / 1000.0;
        lo = lo.min(p);
        hi = hi.max(p);
    }
    (lo, hi)
}

fn c1_power_bounds() -> Outcome {
    let pack = reference_pack();
    let start = Instant::now();
    let mut worst = 0.0_f64;
    for k in 0..=100 {
        let soc = k as f64 / 100.0;
        let (lo, hi) = scan_bounds(&pack, soc);
        let b = match pack.feasible_power(soc) {
            Ok(b) => b,
            Err(e) => return outcome(false, format!("soc {soc}: {e}")),
        };
        worst = worst.max((b.p_lo_kw - lo).abs()).max((b.p_hi_kw - hi).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 0.02 && secs < 5.0,
        format!("max deviation {worst:.4} kW over 101 points in {secs:.2} s"),
    )
}

fn sorted(lines: &[Line]) -> Vec<(f64, f64)> {
    let mut v: Vec<_> = lines.iter().map(|l| (l.a_kw, l.b_kw_per_soc)).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    v
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn c2_envelope_coefficients() -> Outcome {
    let env = match build_envelope(&reference_pack(), &EnvelopeOptions::default()) {
        Ok(e) => e,
        Err(e) => return outcome(false, e.to_string()),
    };
    let want_upper = [(464.0, 2088.0), (570.0, 180.0)];
    let want_lower = [(-3696.0, 3024.0), (-670.0, -180.0)];
    let (up, lo) = (sorted(&env.upper), sorted(&env.lower));
    if up.len() != 2 || lo.len() != 2 {
        return outcome(false, format!("got {} upper and {} lower lines", up.len(), lo.len()));
    }
    let worst = up
        .iter()
        .zip(&want_upper)
        .chain(lo.iter().zip(&want_lower))
        .map(|(g, w)| rel(g.0, w.0).max(rel(g.1, w.1)))
        .fold(0.0, f64::max);
    outcome(worst <= 1e-9, format!("upper {up:?}, lower {lo:?}, max relative error {worst:.1e}"))
}

fn c3_convexity() -> Outcome {
    let packs = [("reference", reference_pack()), ("motivating", motivating_pack()), ("sim", sim_pack())];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut failures = Vec::new();
    let mut count = 0;
    for (name, pack) in &packs {
        for include_voltage in [true, false] {
            let opts = EnvelopeOptions {
                include_voltage,
                ..EnvelopeOptions::default()
            };
            let env = match build_envelope(pack, &opts) {
                Ok(e) => e,
                Err(e) => return outcome(false, format!("{name}: {e}")),
            };
            let (lo, hi) = env.soc_domain;
            let bad = (0..1000)
                .filter(|_| !env.midpoint_ok(rng.gen_range(lo..=hi), rng.gen_range(lo..=hi)))
                .count();
            if bad > 0 {
                failures.push(format!("{name} voltage={include_voltage}: {bad}"));
            }
            count += 1;
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{count} envelopes x 1000 pairs")
        } else {
            failures.join("; ")
        },
    )
}

fn motivating_cfg(mode: Mode) -> dpc_core::Result<SchedulerConfig> {
    SchedulerConfig::for_mode(mode, &motivating_pack(), motivating_bess(), 6, false, &EnvelopeOptions::default())
}

fn c4_motivating(fixture_schedules: &mut Vec<ScheduleResult>) -> Outcome {
    let settings = Settings::default();
    let f = motivating_forecasts();
    let run = |mode| motivating_cfg(mode).and_then(|c| schedule(0.2, &f, &c, &settings).map(|r| (c, r)));
    let (spc, (dpc_cfg, dpc)) = match (run(Mode::Spc), run(Mode::Dpc)) {
        (Ok((_, s)), Ok(d)) => (s, d),
        (Err(e), _) | (_, Err(e)) => return outcome(false, e.to_string()),
    };
    let spc_max = spc.offsets_kw.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let early_charge = dpc.offsets_kw[0] < 0.0 || dpc.offsets_kw[1] < 0.0;
    let env = dpc_cfg.envelope.as_ref().expect("dynamic mode");
    let p = f.p_hi_kw[2] + dpc.offsets_kw[2];
    let limit = [
        dpc.soc_pi.soc_lo[2],
        dpc.soc_pi.soc_hi[2],
        dpc.soc_pi.soc_lo[3],
        dpc.soc_pi.soc_hi[3],
    ]
    .iter()
    .map(|&s| env.eval(s).1)
    .fold(f64::INFINITY, f64::min);
    let delivered = p <= limit + 1e-6;
    let pass = spc_max < 1e-6 && early_charge && delivered;
    let detail = format!(
        "SPC max |F| {spc_max:.1e} kW; DPC F {:?} kW; step 2 power {p:.3} kW vs limit {limit:.3} kW",
        dpc.offsets_kw.iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>()
    );
    fixture_schedules.push(spc);
    fixture_schedules.push(dpc);
    outcome(pass, detail)
}

fn c5_qp_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut solver = Solver::new(Settings::default());
    let (mut worst_x, mut worst_kkt) = (0.0_f64, 0.0_f64);
    for case in 0..200 {
        let qp = support::random_small_qp(&mut rng);
        let Some(expected) = support::enumerate_active_sets(&qp) else {
            return outcome(false, format!("case {case}: enumeration found no feasible point"));
        };
        let sol = match solver.solve(&qp) {
            Ok(s) => s,
            Err(e) => return outcome(false, format!("case {case}: {e}")),
        };
        if sol.status != Status::Solved {
            return outcome(false, format!("case {case}: status {:?}", sol.status));
        }
        for (a, b) in sol.x.iter().zip(&expected) {
            worst_x = worst_x.max((a - b).abs());
        }
        let (p, d) = kkt_residuals(&qp, &sol.x, &sol.duals);
        worst_kkt = worst_kkt.max(p).max(d);
    }
    outcome(
        worst_x <= 1e-6 && worst_kkt <= 1e-6,
        format!("200 problems, max |x - x*| {worst_x:.1e}, max KKT residual {worst_kkt:.1e}"),
    )
}

fn violations(rows: &[SweepRow], mode: Mode) -> usize {
    rows.iter().filter(|r| r.mode == mode).map(|r| r.report.n_violations).sum()
}

fn c6_reduction(rows: &[SweepRow], secs: f64) -> Outcome {
    let (spc, nv, dpc) = (
        violations(rows, Mode::Spc),
        violations(rows, Mode::DpcNoVoltage),
        violations(rows, Mode::Dpc),
    );
    let dpc_ok = (dpc as f64) <= 0.3 * spc as f64 && spc > 0;
    let nv_ok = (nv as f64 - spc as f64).abs() <= 0.2 * spc as f64;
    outcome(
        dpc_ok && nv_ok && secs < 120.0,
        format!(
            "violations SPC {spc}, DPC-NV {nv}, DPC {dpc} (DPC/SPC {:.3}, NV/SPC {:.3}); sweep {secs:.1} s",
            dpc as f64 / spc.max(1) as f64,
            nv as f64 / spc.max(1) as f64
        ),
    )
}

fn c7_ranking(rows: &[SweepRow]) -> Outcome {
    let mut cells = Vec::new();
    let mut ok = true;
    for &soc0 in &SWEEP_SOC0 {
        let count = |m: Mode| {
            rows.iter()
                .find(|r| r.soc0 == soc0 && r.mode == m)
                .map(|r| r.report.n_violations)
                .unwrap_or(usize::MAX)
        };
        let (d, n, s) = (count(Mode::Dpc), count(Mode::DpcNoVoltage), count(Mode::Spc));
        ok &= d <= n && n <= s && s != usize::MAX;
        cells.push(format!("{soc0}: {d}<={n}<={s}"));
    }
    outcome(ok, cells.join(", "))
}

fn c8_soc_bookkeeping() -> Outcome {
    let scenario = power_intensive_scenario(SIM_SEED);
    let mut worst = 0.0_f64;
    for mode in Mode::ALL {
        let trace = match scenario.run(0.3, mode, &Settings::default()) {
            Ok(t) => t,
            Err(e) => return outcome(false, e.to_string()),
        };
        let b = sim_bess();
        let mut soc = 0.3;
        for r in &trace.records {
            let energy_kwh = r.battery_kw / 3600.0;
            soc -= if r.battery_kw >= 0.0 {
                energy_kwh / (b.efficiency * b.energy_capacity_kwh)
            } else {
                energy_kwh * b.efficiency / b.energy_capacity_kwh
            };
        }
        worst = worst.max((soc - trace.final_soc).abs());
    }
    outcome(worst <= 1e-9, format!("max final SOC difference {worst:.1e} over three modes"))
}

fn c9_complementarity(fixture_schedules: &[ScheduleResult], sweep_settings: &Settings) -> Outcome {
    let zero = ForecastSet::zeros(16);
    let mut schedules: Vec<(String, f64, bool, SolveStatus)> = fixture_schedules
        .iter()
        .map(|r| ("motivating".to_string(), r.complementarity_gap_kw, r.sign_fixed, r.status))
        .collect();
    for mode in Mode::ALL {
        let cfg = SchedulerConfig::for_mode(mode, &sim_pack(), sim_bess(), 16, true, &EnvelopeOptions::default());
        match cfg.and_then(|c| schedule(0.5, &zero, &c, sweep_settings)) {
            Ok(r) => schedules.push((format!("zero {mode}"), r.complementarity_gap_kw, r.sign_fixed, r.status)),
            Err(e) => return outcome(false, format!("zero {mode}: {e}")),
        }
    }
    let scenario = power_intensive_scenario(SIM_SEED);
    let mut failed_periods = 0;
    for &soc0 in &SWEEP_SOC0 {
        for mode in Mode::ALL {
            let trace = match scenario.run(soc0, mode, sweep_settings) {
                Ok(t) => t,
                Err(e) => return outcome(false, e.to_string()),
            };
            for l in &trace.scheduler_log {
                match l.status {
                    Some(status) => schedules.push((
                        format!("{mode} soc0 {soc0} t {}", l.t_s),
                        l.complementarity_gap_kw,
                        l.sign_fixed,
                        status,
                    )),
                    None => failed_periods += 1,
                }
            }
        }
    }
    let worst = schedules.iter().map(|s| s.1).fold(0.0, f64::max);
    let fixed = schedules.iter().filter(|s| s.2).count();
    let bad: Vec<_> = schedules
        .iter()
        .filter(|s| s.1 > 1e-3 || s.3 != SolveStatus::Solved)
        .map(|s| s.0.clone())
        .collect();
    outcome(
        bad.is_empty() && failed_periods == 0,
        format!(
            "{} schedules, max gap {worst:.1e} kW, {fixed} sign-fixed, {} over tolerance or unconverged, {failed_periods} failed periods{}",
            schedules.len(),
            bad.len(),
            bad.first().map(|b| format!(" (first: {b})")).unwrap_or_default()
        ),
    )
}

fn config_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/power_intensive.toml")
}

fn c10_determinism() -> Outcome {
    let dirs = match (tempfile::tempdir(), tempfile::tempdir()) {
        (Ok(a), Ok(b)) => [a, b],
        _ => return outcome(false, "cannot create temp dirs".into()),
    };
    for d in &dirs {
        let status = Command::new(env!("CARGO_BIN_EXE_dpc"))
            .args(["sweep", "--config"])
            .arg(config_path())
            .arg("--out")
            .arg(d.path())
            .args(["--seed", &SIM_SEED.to_string()])
            .output();
        match status {
            Ok(o) if o.status.success() => {}
            Ok(o) => return outcome(false, format!("dpc sweep failed: {}", String::from_utf8_lossy(&o.stderr))),
            Err(e) => return outcome(false, e.to_string()),
        }
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("sweep.csv")).unwrap_or_default();
    let (a, b) = (read(&dirs[0]), read(&dirs[1]));
    let rows = String::from_utf8_lossy(&a).lines().count().saturating_sub(1);
    outcome(!a.is_empty() && a == b, format!("two runs, {} bytes, {rows} rows, identical: {}", a.len(), a == b))
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut report = |name: &'static str, o: Outcome| {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((name, o));
    };
    let mut fixture_schedules = Vec::new();
    report("1 power-bound oracle", c1_power_bounds());
    report("2 envelope coefficients", c2_envelope_coefficients());
    report("3 envelope convexity", c3_convexity());
    report("4 motivating example", c4_motivating(&mut fixture_schedules));
    report("5 QP solver oracle", c5_qp_oracle());
    let settings = Settings::default();
    let start = Instant::now();
    let sweep = sweep_initial_soc(&power_intensive_scenario(SIM_SEED), &SWEEP_SOC0, &Mode::ALL, &settings);
    let secs = start.elapsed().as_secs_f64();
    match sweep {
        Ok(rows) => {
            report("6 violation reduction", c6_reduction(&rows, secs));
            report("7 mode ranking", c7_ranking(&rows));
        }
        Err(e) => {
            report("6 violation reduction", outcome(false, e.to_string()));
            report("7 mode ranking", outcome(false, e.to_string()));
        }
    }
    report("8 SOC bookkeeping", c8_soc_bookkeeping());
    report("9 complementarity audit", c9_complementarity(&fixture_schedules, &settings));
    report("10 sweep determinism", c10_determinism());
    let failed = results.iter().filter(|(_, o)| !o.pass).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
