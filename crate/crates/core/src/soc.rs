//! State-of-charge dynamics.
//!
//! Discharging `p > 0` for one step of `step_hours` lowers SOC by
//! `step_hours / E * p / eta`; charging raises it by `step_hours / E * eta * |p|`.
//! Nothing is clamped: bound enforcement belongs to the scheduler and the
//! simulator's violation log.

use serde::{Deserialize, Serialize};

use crate::error::{check_soc, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BessConfig {
    pub energy_capacity_kwh: f64,
    pub rated_power_kw: f64,
    pub efficiency: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub step_hours: f64,
}

impl BessConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParam(msg));
        if !(self.energy_capacity_kwh > 0.0) || !self.energy_capacity_kwh.is_finite() {
            return bad(format!("energy capacity must be > 0, got {}", self.energy_capacity_kwh));
        }
        if !(self.rated_power_kw > 0.0) || !self.rated_power_kw.is_finite() {
            return bad(format!("rated power must be > 0, got {}", self.rated_power_kw));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return bad(format!("efficiency must be in (0, 1], got {}", self.efficiency));
        }
        if !(0.0 <= self.soc_min && self.soc_min < self.soc_max && self.soc_max <= 1.0) {
            return bad(format!(
                "soc limits must satisfy 0 <= min < max <= 1, got ({}, {})",
                self.soc_min, self.soc_max
            ));
        }
        if !(self.step_hours > 0.0) || !self.step_hours.is_finite() {
            return bad(format!("step duration must be > 0, got {}", self.step_hours));
        }
        Ok(())
    }

    /// Same battery with a different step duration.
    pub fn with_step_hours(&self, step_hours: f64) -> Self {
        Self {
            step_hours,
            ..self.clone()
        }
    }

    /// SOC lost per kW of discharge over one step.
    pub fn discharge_coeff(&self) -> f64 {
        self.step_hours / (self.energy_capacity_kwh * self.efficiency)
    }

    /// SOC gained per kW of charge over one step.
    pub fn charge_coeff(&self) -> f64 {
        self.step_hours * self.efficiency / self.energy_capacity_kwh
    }
}

/// SOC decrement over one step at constant power `power_kw`.
pub fn h_step(power_kw: f64, cfg: &BessConfig) -> f64 {
    if power_kw >= 0.0 {
        cfg.discharge_coeff() * power_kw
    } else {
        cfg.charge_coeff() * power_kw
    }
}

/// `soc0` followed by the SOC after each step; `powers.len() + 1` entries.
pub fn soc_trajectory(soc0: f64, powers_kw: &[f64], cfg: &BessConfig) -> Result<Vec<f64>> {
    check_soc("soc0", soc0)?;
    let mut out = Vec::with_capacity(powers_kw.len() + 1);
    let mut soc = soc0;
    out.push(soc);
    for &p in powers_kw {
        soc -= h_step(p, cfg);
        out.push(soc);
    }
    Ok(out)
}

/// Lower and upper SOC prediction-interval trajectories, `T + 1` entries each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocTrajectory {
    pub soc_lo: Vec<f64>,
    pub soc_hi: Vec<f64>,
}

impl SocTrajectory {
    pub fn horizon(&self) -> usize {
        self.soc_lo.len().saturating_sub(1)
    }
}

/// SOC bounds under energy prediction intervals and offsets.
///
/// The lower trajectory follows `w_hi + F` (most discharge) and the upper
/// one `w_lo + F`. Energies in kWh per step are divided by the step length
/// to get average power.
pub fn soc_pi_trajectories(
    soc0: f64,
    w_lo_kwh: &[f64],
    w_hi_kwh: &[f64],
    offsets_kw: &[f64],
    cfg: &BessConfig,
) -> Result<SocTrajectory> {
    let n = offsets_kw.len();
    if w_lo_kwh.len() != n || w_hi_kwh.len() != n {
        return Err(Error::Shape(format!(
            "energy intervals have lengths {} and {}, offsets {n}",
            w_lo_kwh.len(),
            w_hi_kwh.len()
        )));
    }
    let dt = cfg.step_hours;
    let lo_power: Vec<f64> = w_hi_kwh.iter().zip(offsets_kw).map(|(w, f)| w / dt + f).collect();
    let hi_power: Vec<f64> = w_lo_kwh.iter().zip(offsets_kw).map(|(w, f)| w / dt + f).collect();
    Ok(SocTrajectory {
        soc_lo: soc_trajectory(soc0, &lo_power, cfg)?,
        soc_hi: soc_trajectory(soc0, &hi_power, cfg)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{motivating_bess, sim_bess};
    use proptest::prelude::*;

    #[test]
    fn h_step_examples() {
        let cfg = sim_bess();
        assert!((h_step(600.0, &cfg) - 0.025 * 600.0 / (500.0 * 0.95)).abs() < 1e-15);
        assert!((h_step(600.0, &cfg) - 0.031_578_947_368_421).abs() < 1e-12);
        assert!((h_step(-600.0, &cfg) + 0.0285).abs() < 1e-15);
        assert_eq!(h_step(0.0, &cfg), 0.0);
    }

    #[test]
    fn motivating_discharge_drops_fifty_kwh() {
        let cfg = motivating_bess();
        let traj = soc_trajectory(0.20, &[0.0, 0.0, 600.0, 0.0, 0.0, 0.0], &cfg).unwrap();
        assert_eq!(traj.len(), 7);
        let last = *traj.last().unwrap();
        assert!((last - (0.20 - 50.0 / 560.0)).abs() < 1e-12);
        assert!((last - 0.1107).abs() < 1e-4);
    }

    #[test]
    fn empty_powers_give_initial_soc() {
        assert_eq!(soc_trajectory(0.3, &[], &sim_bess()).unwrap(), vec![0.3]);
        assert!(soc_trajectory(1.3, &[], &sim_bess()).is_err());
    }

    #[test]
    fn lossless_round_trip() {
        let cfg = BessConfig {
            efficiency: 1.0,
            ..sim_bess()
        };
        let traj = soc_trajectory(0.4, &[-300.0, 300.0], &cfg).unwrap();
        assert_eq!(traj[2], 0.4);
    }

    #[test]
    fn pi_trajectories() {
        let cfg = sim_bess();
        let zero = vec![0.0; 4];
        let flat = soc_pi_trajectories(0.5, &zero, &zero, &zero, &cfg).unwrap();
        assert!(flat.soc_lo.iter().chain(&flat.soc_hi).all(|&s| s == 0.5));

        let n = 8;
        let t = soc_pi_trajectories(0.5, &vec![-5.2; n], &vec![4.1; n], &vec![0.0; n], &cfg).unwrap();
        assert_eq!(t.horizon(), n);
        let gaps: Vec<f64> = t.soc_hi.iter().zip(&t.soc_lo).map(|(h, l)| h - l).collect();
        for k in 1..=n {
            assert!(t.soc_lo[k] < t.soc_lo[k - 1]);
            assert!(t.soc_hi[k] > t.soc_hi[k - 1]);
            assert!((gaps[k] - k as f64 * gaps[1]).abs() < 1e-12);
        }

        let shifted = soc_pi_trajectories(0.5, &zero, &zero, &vec![200.0; 4], &cfg).unwrap();
        assert_eq!(shifted.soc_lo, shifted.soc_hi);
        assert!(shifted.soc_lo[4] < 0.5);

        assert!(matches!(
            soc_pi_trajectories(0.5, &zero, &[0.0; 3], &zero, &cfg),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn validates_config() {
        assert!(sim_bess().validate().is_ok());
        let bad = BessConfig {
            efficiency: 1.2,
            ..sim_bess()
        };
        assert!(bad.validate().is_err());
        let bad = BessConfig {
            soc_min: 0.9,
            soc_max: 0.1,
            ..sim_bess()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn h_is_monotone_and_convex(p in -2000.0f64..2000.0, q in -2000.0f64..2000.0, eta in 0.5f64..=1.0) {
            let cfg = BessConfig { efficiency: eta, ..sim_bess() };
            let (a, b) = if p <= q { (p, q) } else { (q, p) };
            prop_assert!(h_step(a, &cfg) <= h_step(b, &cfg));
            let mid = h_step(0.5 * (a + b), &cfg);
            prop_assert!(mid <= 0.5 * (h_step(a, &cfg) + h_step(b, &cfg)) + 1e-15);
        }

        #[test]
        fn lossless_depends_only_on_sum(powers in prop::collection::vec(-800.0f64..800.0, 1..30)) {
            let cfg = BessConfig { efficiency: 1.0, ..sim_bess() };
            let traj = soc_trajectory(0.5, &powers, &cfg).unwrap();
            let total: f64 = powers.iter().sum();
            let direct = 0.5 - cfg.step_hours / cfg.energy_capacity_kwh * total;
            prop_assert!((traj.last().unwrap() - direct).abs() < 1e-12);
        }

        #[test]
        fn pi_order_is_preserved(
            w in prop::collection::vec((-20.0f64..20.0, 0.0f64..20.0), 1..20),
            f in -500.0f64..500.0,
        ) {
            let w_lo: Vec<f64> = w.iter().map(|p| p.0).collect();
            let w_hi: Vec<f64> = w.iter().map(|p| p.0 + p.1).collect();
            let offsets = vec![f; w.len()];
            let t = soc_pi_trajectories(0.5, &w_lo, &w_hi, &offsets, &sim_bess()).unwrap();
            for (l, h) in t.soc_lo.iter().zip(&t.soc_hi) {
                prop_assert!(l <= h);
            }
        }

        #[test]
        fn closed_cycle_loses_energy(
            charge in prop::collection::vec(1.0f64..800.0, 1..20),
            eta in 0.5f64..=1.0,
        ) {
            // Charge with the given profile, then discharge until SOC is back;
            // delivered energy is at most eta^2 times injected energy.
            let cfg = BessConfig { efficiency: eta, ..sim_bess() };
            let injected: f64 = charge.iter().sum::<f64>() * cfg.step_hours;
            let gained: f64 = charge.iter().map(|p| -h_step(-p, &cfg)).sum();
            let delivered = gained / cfg.discharge_coeff() * cfg.step_hours;
            prop_assert!(delivered <= eta * eta * injected * (1.0 + 1e-12));
        }
    }
}
