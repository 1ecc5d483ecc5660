//! Piecewise-linear approximation of the feasible power region over SOC.
//!
//! The upper boundary is the pointwise minimum of `K` lines and the lower
//! boundary the pointwise maximum of `J` lines, so the region between them
//! is convex and each bound is linear in SOC.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::circuit::{CircuitParams, PowerBounds};
use crate::error::{Error, Result};

/// `p = a_kw + b_kw_per_soc * soc`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub a_kw: f64,
    pub b_kw_per_soc: f64,
}

impl Line {
    pub fn new(a_kw: f64, b_kw_per_soc: f64) -> Self {
        Self { a_kw, b_kw_per_soc }
    }

    pub fn at(&self, soc: f64) -> f64 {
        self.a_kw + self.b_kw_per_soc * soc
    }

    fn through(s0: f64, p0: f64, s1: f64, p1: f64) -> Self {
        let b = (p1 - p0) / (s1 - s0);
        Self::new(p0 - b * s0, b)
    }
}

/// How a family of lines is reduced to a boundary value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Combine {
    Min,
    Max,
}

impl Combine {
    fn apply(self, lines: &[Line], soc: f64) -> f64 {
        let vals = lines.iter().map(|l| l.at(soc));
        match self {
            Combine::Min => vals.fold(f64::INFINITY, f64::min),
            Combine::Max => vals.fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Which OCV model the exact boundary is sampled from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OcvModel {
    /// The least-squares line; exact bounds are then affine pieces.
    Linear,
    /// Piecewise-linear interpolation of the OCV table.
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerEnvelope {
    pub upper: Vec<Line>,
    pub lower: Vec<Line>,
    pub upper_combine: Combine,
    pub lower_combine: Combine,
    pub soc_domain: (f64, f64),
    /// Largest deviation from the sampled exact boundary.
    pub fit_error_kw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeOptions {
    pub k_upper: usize,
    pub j_lower: usize,
    pub include_voltage: bool,
    pub sample_count: usize,
    pub soc_domain: (f64, f64),
    pub max_fit_error_kw: f64,
    pub ocv_model: OcvModel,
}

impl Default for EnvelopeOptions {
    fn default() -> Self {
        Self {
            k_upper: 2,
            j_lower: 2,
            include_voltage: true,
            sample_count: 181,
            soc_domain: (0.05, 0.95),
            max_fit_error_kw: 25.0,
            ocv_model: OcvModel::Linear,
        }
    }
}

impl EnvelopeOptions {
    pub fn without_voltage() -> Self {
        Self {
            include_voltage: false,
            ..Self::default()
        }
    }
}

/// Exact bounds at `soc` under the chosen OCV model and limit set.
pub fn exact_bounds(params: &CircuitParams, soc: f64, include_voltage: bool, model: OcvModel) -> PowerBounds {
    let v_oc = match model {
        OcvModel::Linear => params.ocv.linear_at(soc),
        OcvModel::Table => params.ocv.interpolated_at(soc),
    };
    if include_voltage {
        params.combined_bounds_for_ocv(v_oc)
    } else {
        params.current_bounds_for_ocv(v_oc)
    }
}

fn analytic_lines(params: &CircuitParams, include_voltage: bool) -> (Vec<Line>, Vec<Line>) {
    let a = params.ocv.intercept_v();
    let b = params.ocv.slope_v();
    let r = params.series_resistance_ohm;
    let i = params.i_max_a;
    let kw = 1000.0;
    let mut upper = vec![Line::new((a * i - r * i * i) / kw, b * i / kw)];
    let mut lower = vec![Line::new((-a * i - r * i * i) / kw, -b * i / kw)];
    if include_voltage {
        let vl = params.v_min_v;
        let vh = params.v_max_v;
        upper.insert(0, Line::new(vl * (a - vl) / (r * kw), vl * b / (r * kw)));
        lower.insert(0, Line::new(vh * (a - vh) / (r * kw), vh * b / (r * kw)));
    }
    (upper, lower)
}

/// Greedy chord fit of a concave `values` sampled at `socs` using at most
/// `count` lines, shifted down so the pointwise minimum never exceeds the
/// samples.
fn fit_concave(socs: &[f64], values: &[f64], count: usize) -> (Vec<Line>, f64) {
    let n = socs.len();
    let mut breaks = vec![0, n - 1];
    let chords = |breaks: &[usize]| -> Vec<Line> {
        breaks
            .windows(2)
            .map(|w| Line::through(socs[w[0]], values[w[0]], socs[w[1]], values[w[1]]))
            .collect()
    };
    while breaks.len() - 1 < count {
        let mut worst = (0.0, None);
        for w in breaks.windows(2) {
            let line = Line::through(socs[w[0]], values[w[0]], socs[w[1]], values[w[1]]);
            for k in w[0] + 1..w[1] {
                let err = (values[k] - line.at(socs[k])).abs();
                if err > worst.0 {
                    worst = (err, Some(k));
                }
            }
        }
        match worst.1 {
            Some(k) => {
                let pos = breaks.partition_point(|&b| b < k);
                breaks.insert(pos, k);
            }
            None => break,
        }
    }
    let mut lines = chords(&breaks);
    let excess = socs
        .iter()
        .zip(values)
        .map(|(&s, &v)| Combine::Min.apply(&lines, s) - v)
        .fold(0.0, f64::max);
    for l in &mut lines {
        l.a_kw -= excess;
    }
    let err = socs
        .iter()
        .zip(values)
        .map(|(&s, &v)| (Combine::Min.apply(&lines, s) - v).abs())
        .fold(0.0, f64::max);
    (lines, err)
}

fn negate(lines: &[Line]) -> Vec<Line> {
    lines.iter().map(|l| Line::new(-l.a_kw, -l.b_kw_per_soc)).collect()
}

/// Fits the feasible power region of `params`.
///
/// With the linear OCV model and enough lines the fit is exact: one line
/// per binding limit. Otherwise a greedy chord fit is used and shifted
/// inward, so the envelope never allows more power than the sampled bounds.
pub fn build_envelope(params: &CircuitParams, opts: &EnvelopeOptions) -> Result<PowerEnvelope> {
    if opts.k_upper == 0 || opts.j_lower == 0 {
        return Err(Error::InvalidParam("envelope needs at least one line per side".into()));
    }
    if opts.sample_count < 11 {
        return Err(Error::InvalidParam(format!(
            "envelope needs at least 11 samples, got {}",
            opts.sample_count
        )));
    }
    let (lo, hi) = opts.soc_domain;
    if !(0.0 <= lo && lo < hi && hi <= 1.0) {
        return Err(Error::InvalidParam(format!("envelope domain ({lo}, {hi}) is not inside [0, 1]")));
    }
    let socs: Vec<f64> = (0..opts.sample_count)
        .map(|k| lo + (hi - lo) * k as f64 / (opts.sample_count - 1) as f64)
        .collect();
    let exact: Vec<PowerBounds> = socs
        .iter()
        .map(|&s| exact_bounds(params, s, opts.include_voltage, opts.ocv_model))
        .collect();
    let hi_vals: Vec<f64> = exact.iter().map(|b| b.p_hi_kw).collect();
    let lo_vals: Vec<f64> = exact.iter().map(|b| b.p_lo_kw).collect();

    let per_side = if opts.include_voltage { 2 } else { 1 };
    let (upper, lower) = if opts.ocv_model == OcvModel::Linear
        && opts.k_upper >= per_side
        && opts.j_lower >= per_side
    {
        analytic_lines(params, opts.include_voltage)
    } else {
        let (upper, _) = fit_concave(&socs, &hi_vals, opts.k_upper);
        let neg: Vec<f64> = lo_vals.iter().map(|v| -v).collect();
        let (lower, _) = fit_concave(&socs, &neg, opts.j_lower);
        (upper, negate(&lower))
    };

    let mut env = PowerEnvelope {
        upper,
        lower,
        upper_combine: Combine::Min,
        lower_combine: Combine::Max,
        soc_domain: opts.soc_domain,
        fit_error_kw: 0.0,
    };
    env.fit_error_kw = socs
        .iter()
        .zip(&exact)
        .map(|(&s, b)| {
            let (l, u) = env.eval(s);
            (u - b.p_hi_kw).abs().max((l - b.p_lo_kw).abs())
        })
        .fold(0.0, f64::max);
    if env.fit_error_kw > opts.max_fit_error_kw {
        return Err(Error::Fit(format!(
            "{} upper / {} lower lines reach a fit error of {:.3} kW, above the cap of {} kW",
            opts.k_upper, opts.j_lower, env.fit_error_kw, opts.max_fit_error_kw
        )));
    }
    Ok(env)
}

impl PowerEnvelope {
    /// `(p_lo, p_hi)` at `soc` without a domain check.
    pub fn eval(&self, soc: f64) -> (f64, f64) {
        (
            self.lower_combine.apply(&self.lower, soc),
            self.upper_combine.apply(&self.upper, soc),
        )
    }

    pub fn bounds_at(&self, soc: f64) -> Result<PowerBounds> {
        let (lo, hi) = self.soc_domain;
        if !(soc >= lo && soc <= hi) {
            return Err(Error::Domain {
                what: "soc",
                value: soc,
                lo,
                hi,
            });
        }
        let (p_lo_kw, p_hi_kw) = self.eval(soc);
        Ok(PowerBounds { p_lo_kw, p_hi_kw })
    }

    /// True when both combine rules match the line-family semantics the
    /// scheduler relies on: upper is a minimum, lower is a maximum.
    pub fn is_well_formed(&self) -> bool {
        self.upper_combine == Combine::Min && self.lower_combine == Combine::Max
    }

    /// Midpoint concavity of the upper boundary and convexity of the lower
    /// boundary at `(a, b)`.
    pub fn midpoint_ok(&self, a: f64, b: f64) -> bool {
        let m = 0.5 * (a + b);
        let (la, ua) = self.eval(a);
        let (lb, ub) = self.eval(b);
        let (lm, um) = self.eval(m);
        let scale = 1.0 + ua.abs().max(ub.abs()).max(la.abs()).max(lb.abs());
        let tol = 1e-9 * scale;
        um >= 0.5 * (ua + ub) - tol && lm <= 0.5 * (la + lb) + tol
    }

    /// Midpoint test on every pair of a 201-point grid over the domain whose
    /// midpoint is itself a grid point.
    pub fn verify_convexity(&self) -> bool {
        let (lo, hi) = self.soc_domain;
        let n = 200;
        let at = |k: usize| lo + (hi - lo) * k as f64 / n as f64;
        for i in 0..=n {
            for j in (i + 2..=n).step_by(2) {
                if !self.midpoint_ok(at(i), at(j)) {
                    return false;
                }
            }
        }
        true
    }

    /// Same lines with the upper boundary taken as the pointwise maximum.
    pub fn with_upper_combine(mut self, combine: Combine) -> Self {
        self.upper_combine = combine;
        self
    }

    /// Writes `side,a_kw,b_kw_per_soc` rows.
    pub fn write_coefficients_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["side", "a_kw", "b_kw_per_soc"])?;
        for (side, lines) in [("upper", &self.upper), ("lower", &self.lower)] {
            for l in lines {
                w.write_record([side.to_string(), l.a_kw.to_string(), l.b_kw_per_soc.to_string()])?;
            }
        }
        w.flush().map_err(|source| Error::Io {
            path: "<envelope csv>".into(),
            source,
        })?;
        Ok(())
    }

    /// Reads a coefficient CSV. The fit error is unknown and set to zero.
    pub fn read_coefficients_csv<R: Read>(input: R, soc_domain: (f64, f64)) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(input);
        let mut upper = Vec::new();
        let mut lower = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let num = |k: usize| -> Result<f64> {
                rec.get(k)
                    .ok_or_else(|| Error::Data(format!("envelope row has {} fields, expected 3", rec.len())))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Data(format!("bad envelope coefficient: {e}")))
            };
            let line = Line::new(num(1)?, num(2)?);
            match rec.get(0).map(str::trim) {
                Some("upper") => upper.push(line),
                Some("lower") => lower.push(line),
                other => {
                    return Err(Error::Data(format!("unknown envelope side {other:?}")));
                }
            }
        }
        if upper.is_empty() || lower.is_empty() {
            return Err(Error::Data("envelope needs at least one upper and one lower line".into()));
        }
        Ok(Self {
            upper,
            lower,
            upper_combine: Combine::Min,
            lower_combine: Combine::Max,
            soc_domain,
            fit_error_kw: 0.0,
        })
    }

    /// Writes `soc,p_lo_kw,p_hi_kw` at `count` evenly spaced SOC values over
    /// the domain.
    pub fn write_sampled_csv<W: Write>(&self, out: W, count: usize) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["soc", "p_lo_kw", "p_hi_kw"])?;
        let (lo, hi) = self.soc_domain;
        for k in 0..count {
            let s = lo + (hi - lo) * k as f64 / (count.max(2) - 1) as f64;
            let (pl, ph) = self.eval(s);
            w.write_record([s.to_string(), pl.to_string(), ph.to_string()])?;
        }
        w.flush().map_err(|source| Error::Io {
            path: "<envelope csv>".into(),
            source,
        })?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::OcvCurve;
    use crate::fixtures::reference_pack;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1.0)
    }

    fn assert_lines(got: &[Line], want: &[(f64, f64)]) {
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(want) {
            assert!(rel(g.a_kw, w.0) < 1e-12, "{g:?} vs {w:?}");
            assert!(rel(g.b_kw_per_soc, w.1) < 1e-12, "{g:?} vs {w:?}");
        }
    }

    #[test]
    fn reference_pack_lines_are_exact() {
        let env = build_envelope(&reference_pack(), &EnvelopeOptions::default()).unwrap();
        assert_lines(&env.upper, &[(464.0, 2088.0), (570.0, 180.0)]);
        assert_lines(&env.lower, &[(-3696.0, 3024.0), (-670.0, -180.0)]);
        assert!(env.fit_error_kw < 1e-9);
    }

    #[test]
    fn current_only_envelope_has_one_line_per_side() {
        let opts = EnvelopeOptions {
            k_upper: 1,
            j_lower: 1,
            ..EnvelopeOptions::without_voltage()
        };
        let env = build_envelope(&reference_pack(), &opts).unwrap();
        assert_lines(&env.upper, &[(570.0, 180.0)]);
        assert_lines(&env.lower, &[(-670.0, -180.0)]);
    }

    #[test]
    fn doubling_resistance_moves_current_line() {
        let p = reference_pack().with_resistance(0.10).unwrap();
        let env = build_envelope(&p, &EnvelopeOptions::default()).unwrap();
        assert!(rel(env.upper[1].a_kw, 520.0) < 1e-12);
        assert!(rel(env.upper[1].b_kw_per_soc, 180.0) < 1e-12);
    }

    #[test]
    fn bounds_at_reference_points() {
        let env = build_envelope(&reference_pack(), &EnvelopeOptions::default()).unwrap();
        assert!(rel(env.bounds_at(0.5).unwrap().p_hi_kw, 660.0) < 1e-12);
        assert!(rel(env.bounds_at(0.95).unwrap().p_lo_kw, -823.2) < 1e-12);
        let s = 106.0 / 1908.0;
        let (a, b) = (env.upper[0].at(s), env.upper[1].at(s));
        assert!(rel(a, b) < 1e-12);
        assert!(rel(a, 580.0) < 1e-3);
        assert!(matches!(env.bounds_at(0.02), Err(Error::Domain { .. })));
    }

    #[test]
    fn convexity_checks() {
        let env = build_envelope(&reference_pack(), &EnvelopeOptions::default()).unwrap();
        assert!(env.verify_convexity());
        assert!(!env.clone().with_upper_combine(Combine::Max).verify_convexity());
        let single = build_envelope(
            &reference_pack(),
            &EnvelopeOptions {
                k_upper: 1,
                j_lower: 1,
                ..EnvelopeOptions::without_voltage()
            },
        )
        .unwrap();
        assert!(single.verify_convexity());
    }

    #[test]
    fn single_line_with_voltage_is_conservative() {
        let p = reference_pack();
        let opts = EnvelopeOptions {
            k_upper: 1,
            j_lower: 1,
            ..EnvelopeOptions::default()
        };
        let env = build_envelope(&p, &opts).unwrap();
        assert!(env.fit_error_kw > 0.0);
        for k in 0..=90 {
            let s = 0.05 + 0.01 * k as f64;
            let exact = p.feasible_power(s).unwrap();
            let (l, u) = env.eval(s);
            assert!(u <= exact.p_hi_kw + 1e-9 && l >= exact.p_lo_kw - 1e-9);
            assert!(u >= exact.p_hi_kw - env.fit_error_kw - 1e-9);
        }
    }

    #[test]
    fn fit_cap_is_enforced() {
        let opts = EnvelopeOptions {
            k_upper: 1,
            j_lower: 1,
            max_fit_error_kw: 1e-3,
            ..EnvelopeOptions::default()
        };
        assert!(matches!(build_envelope(&reference_pack(), &opts), Err(Error::Fit(_))));
    }

    #[test]
    fn nonlinear_table_fit_stays_inside() {
        let table: Vec<(f64, f64)> = (0..=20)
            .map(|k| {
                let s = k as f64 / 20.0;
                (s, 600.0 + 200.0 * s + 30.0 * (1.0 - (-12.0 * s).exp()) - 25.0 * (-12.0 * (1.0 - s)).exp())
            })
            .collect();
        let ocv = OcvCurve::fit(&table, (0.1, 0.9)).unwrap();
        let p = CircuitParams::new(ocv, 0.05, 580.0, 840.0, 1000.0).unwrap();
        let opts = EnvelopeOptions {
            k_upper: 4,
            j_lower: 4,
            max_fit_error_kw: f64::INFINITY,
            ocv_model: OcvModel::Table,
            ..EnvelopeOptions::default()
        };
        let env = build_envelope(&p, &opts).unwrap();
        assert!(env.upper.len() <= 4 && env.lower.len() <= 4);
        for k in 0..opts.sample_count {
            let s = 0.05 + 0.9 * k as f64 / (opts.sample_count - 1) as f64;
            let exact = exact_bounds(&p, s, true, OcvModel::Table);
            let (l, u) = env.eval(s);
            assert!(u <= exact.p_hi_kw + 1e-9);
            assert!(l >= exact.p_lo_kw - 1e-9);
        }
    }

    #[test]
    fn coefficient_csv_round_trip() {
        let env = build_envelope(&reference_pack(), &EnvelopeOptions::default()).unwrap();
        let mut buf = Vec::new();
        env.write_coefficients_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("side,a_kw,b_kw_per_soc\nupper,464,2088\n"));
        let back = PowerEnvelope::read_coefficients_csv(&buf[..], env.soc_domain).unwrap();
        assert_eq!(back.upper, env.upper);
        assert_eq!(back.lower, env.lower);
    }

    #[test]
    fn sampled_csv_has_header_and_rows() {
        let env = build_envelope(&reference_pack(), &EnvelopeOptions::default()).unwrap();
        let mut buf = Vec::new();
        env.write_sampled_csv(&mut buf, 11).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 12);
        assert!(text.starts_with("soc,p_lo_kw,p_hi_kw\n0.05,"));
    }

    #[test]
    fn rejects_bad_options() {
        let p = reference_pack();
        let zero = EnvelopeOptions {
            k_upper: 0,
            ..EnvelopeOptions::default()
        };
        assert!(build_envelope(&p, &zero).is_err());
        let few = EnvelopeOptions {
            sample_count: 5,
            ..EnvelopeOptions::default()
        };
        assert!(build_envelope(&p, &few).is_err());
    }
}
