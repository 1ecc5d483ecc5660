//! Empirical prediction intervals from a historical 1 Hz power series.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shortest series accepted for power intervals, in samples.
pub const MIN_SERIES_LEN: usize = 100;

/// Power (kW) and energy (kWh per step) intervals over a horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSet {
    pub p_hi_kw: Vec<f64>,
    pub p_lo_kw: Vec<f64>,
    pub w_hi_kwh: Vec<f64>,
    pub w_lo_kwh: Vec<f64>,
}

impl ForecastSet {
    /// Time-invariant intervals repeated over `horizon` steps.
    pub fn constant(p_lo_kw: f64, p_hi_kw: f64, w_lo_kwh: f64, w_hi_kwh: f64, horizon: usize) -> Self {
        Self {
            p_hi_kw: vec![p_hi_kw; horizon],
            p_lo_kw: vec![p_lo_kw; horizon],
            w_hi_kwh: vec![w_hi_kwh; horizon],
            w_lo_kwh: vec![w_lo_kwh; horizon],
        }
    }

    pub fn zeros(horizon: usize) -> Self {
        Self::constant(0.0, 0.0, 0.0, 0.0, horizon)
    }

    pub fn horizon(&self) -> usize {
        self.p_hi_kw.len()
    }

    /// Checks lengths, interval ordering and that energy intervals are no
    /// larger than power intervals once converted with `step_hours`.
    pub fn validate(&self, step_hours: f64) -> Result<()> {
        let t = self.horizon();
        if self.p_lo_kw.len() != t || self.w_hi_kwh.len() != t || self.w_lo_kwh.len() != t {
            return Err(Error::Shape(format!(
                "forecast sequences have lengths {}, {}, {}, {}",
                self.p_hi_kw.len(),
                self.p_lo_kw.len(),
                self.w_hi_kwh.len(),
                self.w_lo_kwh.len()
            )));
        }
        let all = self.p_hi_kw.iter().chain(&self.p_lo_kw).chain(&self.w_hi_kwh).chain(&self.w_lo_kwh);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam("non-finite forecast value".into()));
        }
        for k in 0..t {
            if self.p_lo_kw[k] > self.p_hi_kw[k] {
                return Err(Error::InvalidParam(format!(
                    "power interval inverted at step {k}: {} > {}",
                    self.p_lo_kw[k], self.p_hi_kw[k]
                )));
            }
            if self.w_lo_kwh[k] > self.w_hi_kwh[k] {
                return Err(Error::InvalidParam(format!(
                    "energy interval inverted at step {k}: {} > {}",
                    self.w_lo_kwh[k], self.w_hi_kwh[k]
                )));
            }
            let p_mag = self.p_hi_kw[k].abs().max(self.p_lo_kw[k].abs());
            let w_mag = self.w_hi_kwh[k].abs().max(self.w_lo_kwh[k].abs()) / step_hours;
            if w_mag > p_mag * (1.0 + 1e-9) + 1e-9 {
                return Err(Error::InvalidParam(format!(
                    "energy interval at step {k} averages {w_mag} kW, above the power interval magnitude {p_mag} kW"
                )));
            }
        }
        Ok(())
    }

    /// The first `horizon` steps.
    pub fn truncated(&self, horizon: usize) -> Self {
        let cut = |v: &Vec<f64>| v[..horizon.min(v.len())].to_vec();
        Self {
            p_hi_kw: cut(&self.p_hi_kw),
            p_lo_kw: cut(&self.p_lo_kw),
            w_hi_kwh: cut(&self.w_hi_kwh),
            w_lo_kwh: cut(&self.w_lo_kwh),
        }
    }

    /// Writes `t,p_lo_kw,p_hi_kw,w_lo_kwh,w_hi_kwh`, one row per step.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "p_lo_kw", "p_hi_kw", "w_lo_kwh", "w_hi_kwh"])?;
        for t in 0..self.horizon() {
            w.write_record([
                t.to_string(),
                self.p_lo_kw[t].to_string(),
                self.p_hi_kw[t].to_string(),
                self.w_lo_kwh[t].to_string(),
                self.w_hi_kwh[t].to_string(),
            ])?;
        }
        w.flush().map_err(|source| Error::Io {
            path: "<csv output>".into(),
            source,
        })
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            t: usize,
            p_lo_kw: f64,
            p_hi_kw: f64,
            w_lo_kwh: f64,
            w_hi_kwh: f64,
        }
        let mut set = Self::zeros(0);
        for (k, row) in csv::Reader::from_reader(input).deserialize::<Row>().enumerate() {
            let r = row?;
            if r.t != k {
                return Err(Error::Data(format!("forecast row {k} has step index {}", r.t)));
            }
            set.p_lo_kw.push(r.p_lo_kw);
            set.p_hi_kw.push(r.p_hi_kw);
            set.w_lo_kwh.push(r.w_lo_kwh);
            set.w_hi_kwh.push(r.w_hi_kwh);
        }
        Ok(set)
    }
}

/// Quantile with linear interpolation between order statistics at position
/// `(n - 1) * q`.
pub fn empirical_quantile(data: &[f64], q: f64) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Data("quantile of an empty sample".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Domain {
            what: "quantile level",
            value: q,
            lo: 0.0,
            hi: 1.0,
        });
    }
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted_quantile(&sorted, q))
}

fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * q;
    let k = pos.floor() as usize;
    let frac = pos - k as f64;
    if k + 1 >= sorted.len() {
        sorted[sorted.len() - 1]
    } else {
        sorted[k] + frac * (sorted[k + 1] - sorted[k])
    }
}

fn quantile_pair(data: &[f64], q_lo: f64, q_hi: f64) -> Result<(f64, f64)> {
    if q_lo > q_hi {
        return Err(Error::InvalidParam(format!("quantile levels inverted: {q_lo} > {q_hi}")));
    }
    Ok((empirical_quantile(data, q_lo)?, empirical_quantile(data, q_hi)?))
}

/// Power intervals from the raw series, constant over the horizon.
pub fn estimate_power_pis(series_kw: &[f64], q_lo: f64, q_hi: f64, horizon: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if series_kw.len() < MIN_SERIES_LEN {
        return Err(Error::Data(format!(
            "power series has {} samples, need at least {MIN_SERIES_LEN}",
            series_kw.len()
        )));
    }
    let (lo, hi) = quantile_pair(series_kw, q_lo, q_hi)?;
    Ok((vec![lo; horizon], vec![hi; horizon]))
}

/// Block means of `resample_s` samples times the block length in hours.
/// A trailing partial block is dropped.
pub fn block_energies_kwh(series_kw: &[f64], resample_s: usize) -> Vec<f64> {
    let hours = resample_s as f64 / 3600.0;
    series_kw
        .chunks_exact(resample_s)
        .map(|c| c.iter().sum::<f64>() / resample_s as f64 * hours)
        .collect()
}

/// Energy intervals (kWh per block) from block-averaged series.
pub fn estimate_energy_pis(
    series_kw: &[f64],
    resample_s: usize,
    q_lo: f64,
    q_hi: f64,
    horizon: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if resample_s == 0 {
        return Err(Error::InvalidParam("resample length must be at least 1 s".into()));
    }
    if series_kw.len() < resample_s {
        return Err(Error::Data(format!(
            "series of {} s is shorter than one {resample_s} s block",
            series_kw.len()
        )));
    }
    let blocks = block_energies_kwh(series_kw, resample_s);
    let (lo, hi) = quantile_pair(&blocks, q_lo, q_hi)?;
    Ok((vec![lo; horizon], vec![hi; horizon]))
}

/// Power and energy intervals from one series.
pub fn estimate_forecast_set(
    series_kw: &[f64],
    resample_s: usize,
    q_lo: f64,
    q_hi: f64,
    horizon: usize,
) -> Result<ForecastSet> {
    let (p_lo_kw, p_hi_kw) = estimate_power_pis(series_kw, q_lo, q_hi, horizon)?;
    let (w_lo_kwh, w_hi_kwh) = estimate_energy_pis(series_kw, resample_s, q_lo, q_hi, horizon)?;
    Ok(ForecastSet {
        p_hi_kw,
        p_lo_kw,
        w_hi_kwh,
        w_lo_kwh,
    })
}

/// Reads a `t_s,power_kw` CSV sampled at 1 Hz. Timestamps must advance by
/// exactly one second.
pub fn read_power_trace<R: Read>(input: R) -> Result<Vec<f64>> {
    let mut rd = csv::Reader::from_reader(input);
    let headers = rd.headers()?.clone();
    if headers.len() < 2 || headers.get(0).map(str::trim) != Some("t_s") || headers.get(1).map(str::trim) != Some("power_kw") {
        return Err(Error::Data(format!(
            "trace header must be t_s,power_kw, got {}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    let mut prev: Option<f64> = None;
    for (row, rec) in rd.records().enumerate() {
        let rec = rec?;
        let field = |k: usize, name: &str| -> Result<f64> {
            rec.get(k)
                .ok_or_else(|| Error::Data(format!("row {}: missing {name}", row + 1)))?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Data(format!("row {}: bad {name}: {e}", row + 1)))
        };
        let t = field(0, "t_s")?;
        let p = field(1, "power_kw")?;
        if !p.is_finite() {
            return Err(Error::Data(format!("row {}: non-finite power", row + 1)));
        }
        if let Some(tp) = prev {
            if (t - tp - 1.0).abs() > 1e-6 {
                return Err(Error::Data(format!(
                    "row {}: timestamp {t} does not follow {tp} by 1 s",
                    row + 1
                )));
            }
        }
        prev = Some(t);
        out.push(p);
    }
    Ok(out)
}
