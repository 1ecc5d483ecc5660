use dpc_core::envelope::EnvelopeOptions;
use dpc_core::fixtures::{motivating_bess, motivating_forecasts, motivating_pack, power_intensive_scenario, SIM_SEED};
use dpc_core::scheduler::{certify, schedule, Mode, SchedulerConfig};
use dpc_core::sim::{assess_violations, read_sweep_csv, sweep_initial_soc, write_sweep_csv, ServiceTrace, SimScenario};
use dpc_qp::Settings;

fn short_scenario(seconds: usize) -> SimScenario {
    let mut s = power_intensive_scenario(SIM_SEED);
    s.service_low = ServiceTrace::new(s.service_low.power_kw[..seconds].to_vec()).unwrap();
    s.service_high = ServiceTrace::new(s.service_high.power_kw[..seconds].to_vec()).unwrap();
    s
}

#[test]
fn single_cell_sweep_matches_direct_assessment() {
    let scenario = short_scenario(1800);
    let settings = Settings::default();
    let rows = sweep_initial_soc(&scenario, &[0.2], &[Mode::Spc], &settings).unwrap();
    assert_eq!(rows.len(), 1);
    let trace = scenario.run(0.2, Mode::Spc, &settings).unwrap();
    assert_eq!(rows[0].report, assess_violations(&trace.records, &scenario.circuit));
    assert_eq!(rows[0].final_soc, trace.final_soc);
}

#[test]
fn sweep_rows_follow_soc_then_mode_order() {
    let scenario = short_scenario(900);
    let soc0 = [0.4, 0.2, 0.7];
    let rows = sweep_initial_soc(&scenario, &soc0, &Mode::ALL, &Settings::default()).unwrap();
    let keys: Vec<_> = rows.iter().map(|r| (r.soc0, r.mode)).collect();
    let want: Vec<_> = soc0.iter().flat_map(|&s| Mode::ALL.map(|m| (s, m))).collect();
    assert_eq!(keys, want);
    let mut text = Vec::new();
    write_sweep_csv(&rows, &mut text).unwrap();
    let parsed = read_sweep_csv(text.as_slice()).unwrap();
    assert_eq!(parsed.len(), 9);
    for (p, r) in parsed.iter().zip(&rows) {
        assert_eq!((p.mode, p.n_violations, p.soc0), (r.mode, r.report.n_violations, r.soc0));
    }
}

#[test]
fn high_soc_cells_use_the_flipped_service() {
    let scenario = short_scenario(900);
    let (low, _) = scenario.inputs_for(0.5);
    let (high, f_high) = scenario.inputs_for(0.7);
    assert!(low.mean_kw() > 0.0 && high.mean_kw() < 0.0);
    assert!(f_high.w_lo_kwh[0] < -5.0);
}

#[test]
fn dpc_schedule_on_the_motivating_case_certifies() {
    let settings = Settings::default();
    for mode in Mode::ALL {
        let cfg = SchedulerConfig::for_mode(
            mode,
            &motivating_pack(),
            motivating_bess(),
            6,
            false,
            &EnvelopeOptions::default(),
        )
        .unwrap();
        let r = schedule(0.2, &motivating_forecasts(), &cfg, &settings).unwrap();
        assert!(certify(0.2, &motivating_forecasts(), &cfg, &r, 1e-5).is_empty(), "{mode}");
    }
}

#[test]
fn service_trace_csv_round_trip() {
    let trace = power_intensive_scenario(SIM_SEED).service_low;
    let mut text = Vec::new();
    trace.write_csv(&mut text).unwrap();
    assert_eq!(ServiceTrace::read_csv(text.as_slice()).unwrap(), trace);
}
