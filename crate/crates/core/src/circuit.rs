//! Steady-state equivalent circuit of a battery pack: an open-circuit voltage
//! source in series with a resistance.
//!
//! Conventions: current and power are positive when discharging; powers are
//! in kW, currents in A, voltages in V, resistance in ohm, SOC in `[0, 1]`.
//! Terminal voltage is `v = v_oc(soc) - R i` and delivered power is
//! `p = v_oc i - R i^2`.

use serde::{Deserialize, Serialize};

use crate::error::{check_soc, Error, Result};

const W_PER_KW: f64 = 1000.0;

/// Non-fatal findings about an OCV table or its linear fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OcvWarning {
    /// Voltage decreases somewhere as SOC increases.
    NonMonotoneVoltage,
    /// The fitted slope is not strictly positive.
    NonPositiveSlope,
}

/// Tabulated open-circuit voltage with a least-squares line over a central
/// SOC range. Schedulers use the line everywhere; the table is available for
/// plant-side interpolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcvCurve {
    samples: Vec<(f64, f64)>,
    intercept_v: f64,
    slope_v: f64,
    fit_range: (f64, f64),
    max_residual_v: f64,
    warnings: Vec<OcvWarning>,
}

impl OcvCurve {
    /// Least-squares line through the samples whose SOC lies in `fit_range`.
    pub fn fit(samples: &[(f64, f64)], fit_range: (f64, f64)) -> Result<Self> {
        let (lo, hi) = fit_range;
        if !(lo < hi) || lo < 0.0 || hi > 1.0 {
            return Err(Error::InvalidParam(format!("fit range ({lo}, {hi}) is not a sub-interval of [0, 1]")));
        }
        for w in samples.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::InvalidParam(format!(
                    "OCV samples must be strictly increasing in soc ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        if samples.iter().any(|(s, v)| !s.is_finite() || !v.is_finite()) {
            return Err(Error::InvalidParam("non-finite OCV sample".into()));
        }
        let inside: Vec<(f64, f64)> = samples
            .iter()
            .copied()
            .filter(|(s, _)| *s >= lo && *s <= hi)
            .collect();
        if inside.len() < 2 {
            return Err(Error::Fit(format!(
                "{} OCV samples inside fit range ({lo}, {hi}); need at least 2",
                inside.len()
            )));
        }

        let n = inside.len() as f64;
        let mean_s = inside.iter().map(|p| p.0).sum::<f64>() / n;
        let mean_v = inside.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = inside.iter().map(|(s, _)| (s - mean_s).powi(2)).sum();
        let sxy: f64 = inside.iter().map(|(s, v)| (s - mean_s) * (v - mean_v)).sum();
        let slope_v = sxy / sxx;
        let intercept_v = mean_v - slope_v * mean_s;
        let max_residual_v = inside
            .iter()
            .map(|(s, v)| (v - intercept_v - slope_v * s).abs())
            .fold(0.0, f64::max);

        let mut warnings = Vec::new();
        if samples.windows(2).any(|w| w[1].1 < w[0].1) {
            warnings.push(OcvWarning::NonMonotoneVoltage);
        }
        if !(slope_v > 0.0) {
            warnings.push(OcvWarning::NonPositiveSlope);
        }
        Ok(Self {
            samples: samples.to_vec(),
            intercept_v,
            slope_v,
            fit_range,
            max_residual_v,
            warnings,
        })
    }

    /// An exactly linear curve `intercept + slope * soc` over `[0, 1]`.
    pub fn linear(intercept_v: f64, slope_v: f64) -> Self {
        Self::fit(&[(0.0, intercept_v), (1.0, intercept_v + slope_v)], (0.0, 1.0))
            .expect("two distinct points always fit")
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn intercept_v(&self) -> f64 {
        self.intercept_v
    }

    pub fn slope_v(&self) -> f64 {
        self.slope_v
    }

    pub fn fit_range(&self) -> (f64, f64) {
        self.fit_range
    }

    /// Largest absolute deviation of in-range samples from the line.
    pub fn max_residual_v(&self) -> f64 {
        self.max_residual_v
    }

    pub fn warnings(&self) -> &[OcvWarning] {
        &self.warnings
    }

    /// Checks the curve invariants: positive slope and a fit residual within
    /// `tolerance_v`. Returns a human-readable list of violations.
    pub fn invariant_violations(&self, tolerance_v: f64) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.slope_v > 0.0) {
            out.push(format!("fit slope {} V is not > 0", self.slope_v));
        }
        if self.max_residual_v > tolerance_v {
            out.push(format!(
                "fit residual {} V exceeds tolerance {tolerance_v} V",
                self.max_residual_v
            ));
        }
        if self.warnings.contains(&OcvWarning::NonMonotoneVoltage) {
            out.push("voltages are not non-decreasing in soc".into());
        }
        out
    }

    /// Linear-fit OCV at `soc`.
    pub fn ocv_at(&self, soc: f64) -> Result<f64> {
        check_soc("soc", soc)?;
        Ok(self.linear_at(soc))
    }

    /// Linear-fit OCV, with a flag set when `soc` lies outside the fit range
    /// and the value is an extrapolation.
    pub fn ocv_at_flagged(&self, soc: f64) -> Result<(f64, bool)> {
        let v = self.ocv_at(soc)?;
        Ok((v, soc < self.fit_range.0 || soc > self.fit_range.1))
    }

    /// Linear-fit OCV without domain checking.
    pub fn linear_at(&self, soc: f64) -> f64 {
        self.intercept_v + self.slope_v * soc
    }

    /// Piecewise-linear interpolation of the table, extrapolating linearly
    /// from the end segments.
    pub fn interpolated_at(&self, soc: f64) -> f64 {
        let s = &self.samples;
        if s.len() < 2 {
            return self.linear_at(soc);
        }
        let k = match s.iter().position(|p| p.0 > soc) {
            Some(0) => 1,
            Some(k) => k,
            None => s.len() - 1,
        };
        let (s0, v0) = s[k - 1];
        let (s1, v1) = s[k];
        v0 + (v1 - v0) * (soc - s0) / (s1 - s0)
    }
}

/// Electrical description of the pack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    pub ocv: OcvCurve,
    pub series_resistance_ohm: f64,
    pub v_min_v: f64,
    pub v_max_v: f64,
    /// Rated current, applied symmetrically to charge and discharge.
    pub i_max_a: f64,
}

/// Power interval `[p_lo_kw, p_hi_kw]`; charge limit is negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBounds {
    pub p_lo_kw: f64,
    pub p_hi_kw: f64,
}

impl PowerBounds {
    pub fn contains(&self, p_kw: f64) -> bool {
        p_kw >= self.p_lo_kw && p_kw <= self.p_hi_kw
    }

    /// True when the interval does not straddle zero, which happens only if
    /// the OCV is outside the voltage window.
    pub fn is_degenerate(&self) -> bool {
        self.p_lo_kw > 0.0 || self.p_hi_kw < 0.0
    }
}

/// Outcome of checking that the rated current stays below the
/// maximum-power-transfer current `v_oc / 2R` over the fit range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MptReport {
    pub holds: bool,
    /// Smallest `v_oc / 2R` over the fit range.
    pub worst_i_transfer_a: f64,
    pub worst_soc: f64,
    /// `worst_i_transfer_a - i_max_a`.
    pub margin_a: f64,
}

impl CircuitParams {
    pub fn new(ocv: OcvCurve, series_resistance_ohm: f64, v_min_v: f64, v_max_v: f64, i_max_a: f64) -> Result<Self> {
        let p = Self {
            ocv,
            series_resistance_ohm,
            v_min_v,
            v_max_v,
            i_max_a,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.series_resistance_ohm > 0.0) || !self.series_resistance_ohm.is_finite() {
            return Err(Error::InvalidParam(format!(
                "series resistance must be > 0, got {}",
                self.series_resistance_ohm
            )));
        }
        if !(self.v_min_v > 0.0 && self.v_min_v < self.v_max_v) || !self.v_max_v.is_finite() {
            return Err(Error::InvalidParam(format!(
                "voltage window must satisfy 0 < v_min < v_max, got ({}, {})",
                self.v_min_v, self.v_max_v
            )));
        }
        if !(self.i_max_a > 0.0) || !self.i_max_a.is_finite() {
            return Err(Error::InvalidParam(format!("rated current must be > 0, got {}", self.i_max_a)));
        }
        Ok(())
    }

    /// Same pack with a different series resistance.
    pub fn with_resistance(&self, series_resistance_ohm: f64) -> Result<Self> {
        let mut p = self.clone();
        p.series_resistance_ohm = series_resistance_ohm;
        p.validate()?;
        Ok(p)
    }

    pub fn check_mpt_assumption(&self) -> MptReport {
        // v_oc is affine in soc, so the minimum over the range is at an end.
        let (lo, hi) = self.ocv.fit_range();
        let two_r = 2.0 * self.series_resistance_ohm;
        let (worst_soc, v) = [lo, hi]
            .into_iter()
            .map(|s| (s, self.ocv.linear_at(s)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("two candidates");
        let worst = v / two_r;
        MptReport {
            holds: self.i_max_a < worst,
            worst_i_transfer_a: worst,
            worst_soc,
            margin_a: worst - self.i_max_a,
        }
    }

    /// Bounds that keep the terminal voltage inside `[v_min, v_max]`.
    pub fn voltage_bounds_for_ocv(&self, v_oc: f64) -> PowerBounds {
        let r = self.series_resistance_ohm;
        PowerBounds {
            p_hi_kw: self.v_min_v / r * (v_oc - self.v_min_v) / W_PER_KW,
            p_lo_kw: self.v_max_v / r * (v_oc - self.v_max_v) / W_PER_KW,
        }
    }

    /// Bounds that keep the current inside `[-i_max, i_max]`.
    pub fn current_bounds_for_ocv(&self, v_oc: f64) -> PowerBounds {
        let r = self.series_resistance_ohm;
        let i = self.i_max_a;
        PowerBounds {
            p_hi_kw: (v_oc * i - r * i * i) / W_PER_KW,
            p_lo_kw: (-v_oc * i - r * i * i) / W_PER_KW,
        }
    }

    /// Intersection of the voltage- and current-derived bounds, unchecked.
    pub fn combined_bounds_for_ocv(&self, v_oc: f64) -> PowerBounds {
        let v = self.voltage_bounds_for_ocv(v_oc);
        let c = self.current_bounds_for_ocv(v_oc);
        PowerBounds {
            p_hi_kw: v.p_hi_kw.min(c.p_hi_kw),
            p_lo_kw: v.p_lo_kw.max(c.p_lo_kw),
        }
    }

    pub fn power_bounds_voltage(&self, soc: f64) -> Result<PowerBounds> {
        Ok(self.voltage_bounds_for_ocv(self.ocv.ocv_at(soc)?))
    }

    pub fn power_bounds_current(&self, soc: f64) -> Result<PowerBounds> {
        Ok(self.current_bounds_for_ocv(self.ocv.ocv_at(soc)?))
    }

    pub fn feasible_power(&self, soc: f64) -> Result<PowerBounds> {
        let b = self.combined_bounds_for_ocv(self.ocv.ocv_at(soc)?);
        if b.p_lo_kw > b.p_hi_kw {
            return Err(Error::EmptyInterval {
                soc,
                p_lo_kw: b.p_lo_kw,
                p_hi_kw: b.p_hi_kw,
            });
        }
        Ok(b)
    }

    /// Current drawn for `power_kw` at open-circuit voltage `v_oc`, on the
    /// branch below the maximum-power-transfer current.
    pub fn current_for_ocv(&self, v_oc: f64, power_kw: f64) -> Result<f64> {
        let r = self.series_resistance_ohm;
        let p = power_kw * W_PER_KW;
        let disc = v_oc * v_oc - 4.0 * r * p;
        if disc < 0.0 {
            return Err(Error::InfeasiblePower {
                power_kw,
                max_kw: v_oc * v_oc / (4.0 * r) / W_PER_KW,
            });
        }
        // Smaller root (v_oc - sqrt(disc)) / 2R in cancellation-free form.
        Ok(2.0 * p / (v_oc + disc.sqrt()))
    }

    pub fn current_from_power(&self, soc: f64, power_kw: f64) -> Result<f64> {
        self.current_for_ocv(self.ocv.ocv_at(soc)?, power_kw)
    }

    pub fn terminal_voltage(&self, soc: f64, current_a: f64) -> Result<f64> {
        Ok(self.ocv.ocv_at(soc)? - self.series_resistance_ohm * current_a)
    }

    /// Current at the peak of the power parabola, `v_oc / 2R`.
    pub fn transfer_current_for_ocv(&self, v_oc: f64) -> f64 {
        v_oc / (2.0 * self.series_resistance_ohm)
    }
}
