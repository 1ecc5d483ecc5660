//! Shipped packs and scenarios.

use crate::circuit::{CircuitParams, OcvCurve};
use crate::envelope::EnvelopeOptions;
use crate::forecast::ForecastSet;
use crate::sim::{make_synthetic_service, PlantModel, ServiceKind, ServiceParams, SimScenario};
use crate::soc::BessConfig;

/// `v_oc = 620 + 180 soc` V, 0.05 ohm, 580-840 V, 1000 A.
pub fn reference_pack() -> CircuitParams {
    CircuitParams::new(OcvCurve::linear(620.0, 180.0), 0.05, 580.0, 840.0, 1000.0).expect("valid pack")
}

/// Reference pack with the rated current lowered to 970 A, so the
/// discharge bound at SOC 0.2 (589.3 kW) sits below a 600 kW request.
pub fn motivating_pack() -> CircuitParams {
    CircuitParams::new(OcvCurve::linear(620.0, 180.0), 0.05, 580.0, 840.0, 970.0).expect("valid pack")
}

/// 560 kWh, 720 kW, lossless, 5-minute steps.
pub fn motivating_bess() -> BessConfig {
    BessConfig {
        energy_capacity_kwh: 560.0,
        rated_power_kw: 720.0,
        efficiency: 1.0,
        soc_min: 0.05,
        soc_max: 0.95,
        step_hours: 1.0 / 12.0,
    }
}

/// A single 600 kW discharge in the third of six 5-minute steps.
pub fn motivating_forecasts() -> ForecastSet {
    let p = vec![0.0, 0.0, 600.0, 0.0, 0.0, 0.0];
    let w: Vec<f64> = p.iter().map(|v| v / 12.0).collect();
    ForecastSet {
        p_hi_kw: p.clone(),
        p_lo_kw: p,
        w_hi_kwh: w.clone(),
        w_lo_kwh: w,
    }
}

/// 500 kWh, 720 kW, efficiency 0.95, 90 s steps.
pub fn sim_bess() -> BessConfig {
    BessConfig {
        energy_capacity_kwh: 500.0,
        rated_power_kw: 720.0,
        efficiency: 0.95,
        soc_min: 0.05,
        soc_max: 0.95,
        step_hours: 0.025,
    }
}

/// Pack for the closed-loop scenario: the voltage limit caps discharge well
/// below 600 kW at low SOC while the current limit alone would not.
pub fn sim_pack() -> CircuitParams {
    CircuitParams::new(OcvCurve::linear(650.0, 150.0), 0.08, 640.0, 820.0, 1100.0).expect("valid pack")
}

pub const SIM_SEED: u64 = 20_240_601;
/// Steady drain added to the bursts, kW.
pub const SIM_DRAIN_KW: f64 = 50.0;

/// Burst service plus a steady drain (positive discharges).
pub fn sim_service(drain_kw: f64) -> ServiceParams {
    ServiceParams {
        duration_s: 7200,
        amplitude_kw: 600.0,
        duty: 0.1,
        mean_burst_s: 8.0,
        min_level: 0.6,
        steps: vec![(drain_kw, 7200)],
    }
}

/// Power-intensive closed-loop scenario, 2 h per run.
///
/// Below `flip_soc` the service drains the battery; from there up it
/// charges it, with the energy intervals swapped accordingly.
pub fn power_intensive_scenario(seed: u64) -> SimScenario {
    let circuit = sim_pack();
    let bess = sim_bess();
    let horizon = 16;
    let drain_step_kwh = SIM_DRAIN_KW * bess.step_hours;
    let low = make_synthetic_service(ServiceKind::Mixed, &sim_service(SIM_DRAIN_KW), seed);
    let high = make_synthetic_service(ServiceKind::Mixed, &sim_service(-SIM_DRAIN_KW), seed);
    SimScenario {
        plant: PlantModel::matching(&circuit),
        circuit,
        bess,
        horizon,
        soft_constraints: true,
        slack_penalty: 1e6,
        envelope: EnvelopeOptions::default(),
        period_s: 90,
        service_low: low,
        forecasts_low: ForecastSet::constant(
            -600.0 + SIM_DRAIN_KW,
            600.0 + SIM_DRAIN_KW,
            -5.2 + drain_step_kwh,
            4.1 + drain_step_kwh,
            horizon,
        ),
        service_high: high,
        forecasts_high: ForecastSet::constant(
            -600.0 - SIM_DRAIN_KW,
            600.0 - SIM_DRAIN_KW,
            -4.1 - drain_step_kwh,
            5.2 - drain_step_kwh,
            horizon,
        ),
        flip_soc: 0.6,
    }
}
