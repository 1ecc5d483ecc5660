//! Scenario documents.
//!
//! A scenario is one TOML file. Units are part of every key name. Relative
//! paths inside it are resolved against the directory of the file.

use std::fs;
use std::path::{Path, PathBuf};

use dpc_core::circuit::{CircuitParams, OcvCurve};
use dpc_core::envelope::{EnvelopeOptions, OcvModel};
use dpc_core::forecast::{estimate_forecast_set, read_power_trace, ForecastSet};
use dpc_core::scheduler::{Mode, SchedulerConfig};
use dpc_core::sim::{make_synthetic_service, PlantModel, ServiceKind, ServiceParams, ServiceTrace, SimScenario};
use dpc_core::soc::BessConfig;
use dpc_qp::Settings;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub circuit: CircuitSection,
    pub bess: BessSection,
    #[serde(default)]
    pub envelope: EnvelopeSection,
    #[serde(default)]
    pub scheduler: SchedulerSection,
    #[serde(default)]
    pub solver: SolverSection,
    pub forecast: Option<ForecastSection>,
    pub service: Option<ServiceSection>,
    #[serde(default)]
    pub sim: SimSection,
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub output: OutputSection,
}

/// Either `file` pointing at a TOML document with the remaining keys, or
/// the keys inline. The OCV is linear (`ocv_intercept_v`, `ocv_slope_v`) or
/// fitted to `ocv_table` rows of `[soc, volts]`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitSection {
    pub file: Option<PathBuf>,
    pub ocv_intercept_v: Option<f64>,
    pub ocv_slope_v: Option<f64>,
    pub ocv_table: Option<Vec<[f64; 2]>>,
    pub ocv_fit_soc_min: Option<f64>,
    pub ocv_fit_soc_max: Option<f64>,
    pub series_resistance_ohm: Option<f64>,
    pub v_min_v: Option<f64>,
    pub v_max_v: Option<f64>,
    pub i_max_a: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BessSection {
    pub energy_capacity_kwh: f64,
    pub rated_power_kw: f64,
    #[serde(default = "one")]
    pub efficiency: f64,
    #[serde(default = "soc_lo_default")]
    pub soc_min: f64,
    #[serde(default = "soc_hi_default")]
    pub soc_max: f64,
    #[serde(default = "period_default")]
    pub step_s: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvelopeSection {
    pub k_upper: usize,
    pub j_lower: usize,
    pub sample_count: usize,
    pub soc_min: f64,
    pub soc_max: f64,
    pub max_fit_error_kw: f64,
    /// `linear` or `table`.
    pub ocv_model: String,
    /// Points in the sampled boundary CSV.
    pub output_points: usize,
}

impl Default for EnvelopeSection {
    fn default() -> Self {
        let d = EnvelopeOptions::default();
        Self {
            k_upper: d.k_upper,
            j_lower: d.j_lower,
            sample_count: d.sample_count,
            soc_min: d.soc_domain.0,
            soc_max: d.soc_domain.1,
            max_fit_error_kw: d.max_fit_error_kw,
            ocv_model: "linear".into(),
            output_points: 101,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchedulerSection {
    /// `spc`, `dpc`, `dpc-nv` or `all`.
    pub mode: String,
    pub horizon: usize,
    pub soft_constraints: bool,
    pub slack_penalty: f64,
    pub cost_weights: Vec<f64>,
    pub soc0: f64,
}

impl Default for SchedulerSection {
    fn default() -> Self {
        Self {
            mode: "dpc".into(),
            horizon: 16,
            soft_constraints: true,
            slack_penalty: 1e6,
            cost_weights: Vec::new(),
            soc0: 0.5,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub max_iter: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = Settings::default();
        Self {
            tol_abs: s.tol_abs,
            tol_rel: s.tol_rel,
            max_iter: s.max_iter,
        }
    }
}

/// A scalar repeated over the horizon or one value per step.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum PerStep {
    Scalar(f64),
    Steps(Vec<f64>),
}

impl PerStep {
    fn expand(&self, horizon: usize, key: &str) -> Result<Vec<f64>, CliError> {
        match self {
            PerStep::Scalar(v) => Ok(vec![*v; horizon]),
            PerStep::Steps(v) if v.len() == horizon => Ok(v.clone()),
            PerStep::Steps(v) => Err(CliError::Config(format!(
                "forecast.{key} has {} values for a horizon of {horizon}",
                v.len()
            ))),
        }
    }
}

/// Exactly one source: a forecast CSV (`file`), a 1 Hz trace to estimate
/// intervals from (`trace_file`), or the four interval keys.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastSection {
    pub file: Option<PathBuf>,
    pub trace_file: Option<PathBuf>,
    pub p_lo_kw: Option<PerStep>,
    pub p_hi_kw: Option<PerStep>,
    pub w_lo_kwh: Option<PerStep>,
    pub w_hi_kwh: Option<PerStep>,
    #[serde(default = "q_lo_default")]
    pub quantile_lo: f64,
    #[serde(default = "q_hi_default")]
    pub quantile_hi: f64,
}

/// Exactly one source: a `t_s,power_kw` CSV (`file`) or synthetic parameters.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceSection {
    pub file: Option<PathBuf>,
    /// `bursts`, `steps` or `mixed`.
    pub kind: Option<String>,
    pub duration_s: Option<usize>,
    pub amplitude_kw: Option<f64>,
    pub duty: Option<f64>,
    pub mean_burst_s: Option<f64>,
    pub min_level: Option<f64>,
    /// `[power_kw, duration_s]` segments.
    pub steps_kw_s: Option<Vec<(f64, usize)>>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub period_s: usize,
    pub plant_r_multiplier: f64,
    /// `linear` or `table`.
    pub plant_ocv_model: String,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            period_s: 90,
            plant_r_multiplier: 1.0,
            plant_ocv_model: "linear".into(),
        }
    }
}

/// Initial SOCs to sweep. From `flip_soc` upwards the `high_*` inputs
/// replace the main service and forecast.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub soc0: Vec<f64>,
    pub flip_soc: Option<f64>,
    pub high_service: Option<ServiceSection>,
    pub high_forecast: Option<ForecastSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

fn one() -> f64 {
    1.0
}
fn soc_lo_default() -> f64 {
    0.05
}
fn soc_hi_default() -> f64 {
    0.95
}
fn period_default() -> f64 {
    90.0
}
fn q_lo_default() -> f64 {
    0.05
}
fn q_hi_default() -> f64 {
    0.95
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
}

fn ocv_model(name: &str, key: &str) -> Result<OcvModel, CliError> {
    match name {
        "linear" => Ok(OcvModel::Linear),
        "table" => Ok(OcvModel::Table),
        other => Err(CliError::Config(format!("{key} must be linear or table, got {other:?}"))),
    }
}

/// A loaded scenario with its base directory.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub cfg: ScenarioConfig,
    pub base: PathBuf,
}

impl Loaded {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = read_text(path)?;
        let cfg: ScenarioConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { cfg, base })
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn circuit(&self) -> Result<CircuitParams, CliError> {
        let section = match &self.cfg.circuit.file {
            Some(file) => {
                let path = self.resolve(file);
                let inline = &self.cfg.circuit;
                if inline.ocv_intercept_v.is_some() || inline.series_resistance_ohm.is_some() {
                    return Err(CliError::Config(
                        "circuit: give either file or inline parameters, not both".into(),
                    ));
                }
                let nested: CircuitSection = toml::from_str(&read_text(&path)?)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                if nested.file.is_some() {
                    return Err(CliError::Config(format!("{}: nested circuit file", path.display())));
                }
                nested
            }
            None => self.cfg.circuit.clone(),
        };
        circuit_from(&section)
    }

    pub fn bess(&self) -> Result<BessConfig, CliError> {
        let b = &self.cfg.bess;
        let cfg = BessConfig {
            energy_capacity_kwh: b.energy_capacity_kwh,
            rated_power_kw: b.rated_power_kw,
            efficiency: b.efficiency,
            soc_min: b.soc_min,
            soc_max: b.soc_max,
            step_hours: b.step_s / 3600.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn envelope_options(&self) -> Result<EnvelopeOptions, CliError> {
        let e = &self.cfg.envelope;
        Ok(EnvelopeOptions {
            k_upper: e.k_upper,
            j_lower: e.j_lower,
            include_voltage: true,
            sample_count: e.sample_count,
            soc_domain: (e.soc_min, e.soc_max),
            max_fit_error_kw: e.max_fit_error_kw,
            ocv_model: ocv_model(&e.ocv_model, "envelope.ocv_model")?,
        })
    }

    pub fn settings(&self) -> Settings {
        let s = &self.cfg.solver;
        Settings {
            tol_abs: s.tol_abs,
            tol_rel: s.tol_rel,
            max_iter: s.max_iter,
            ..Settings::default()
        }
    }

    /// Modes named by `--mode`, or by `scheduler.mode` when absent.
    pub fn modes(&self, flag: Option<&str>) -> Result<Vec<Mode>, CliError> {
        let name = flag.unwrap_or(&self.cfg.scheduler.mode);
        if name == "all" {
            return Ok(Mode::ALL.to_vec());
        }
        Mode::parse(name)
            .map(|m| vec![m])
            .ok_or_else(|| CliError::Config(format!("unknown mode {name:?}; expected spc, dpc, dpc-nv or all")))
    }

    pub fn scheduler_config(&self, mode: Mode) -> Result<SchedulerConfig, CliError> {
        let s = &self.cfg.scheduler;
        let mut cfg = SchedulerConfig::for_mode(
            mode,
            &self.circuit()?,
            self.bess()?,
            s.horizon,
            s.soft_constraints,
            &self.envelope_options()?,
        )?;
        cfg.slack_penalty = s.slack_penalty;
        cfg.cost_weights = s.cost_weights.clone();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn forecasts(&self) -> Result<ForecastSet, CliError> {
        let f = self
            .cfg
            .forecast
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [forecast] section".into()))?;
        self.forecast_from(f)
    }

    pub fn forecast_from(&self, f: &ForecastSection) -> Result<ForecastSet, CliError> {
        let horizon = self.cfg.scheduler.horizon;
        let inline = [&f.p_lo_kw, &f.p_hi_kw, &f.w_lo_kwh, &f.w_hi_kwh];
        let n_inline = inline.iter().filter(|v| v.is_some()).count();
        let sources = f.file.is_some() as usize + f.trace_file.is_some() as usize + (n_inline > 0) as usize;
        if sources != 1 {
            return Err(CliError::Config(
                "forecast: give exactly one of file, trace_file or the four interval keys".into(),
            ));
        }
        let set = if let Some(file) = &f.file {
            let path = self.resolve(file);
            let set = ForecastSet::read_csv(open(&path)?.as_slice())
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            if set.horizon() < horizon {
                return Err(CliError::Config(format!(
                    "{}: {} steps for a horizon of {horizon}",
                    path.display(),
                    set.horizon()
                )));
            }
            set.truncated(horizon)
        } else if let Some(file) = &f.trace_file {
            let path = self.resolve(file);
            let series = read_power_trace(open(&path)?.as_slice())
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let resample_s = self.cfg.bess.step_s.round() as usize;
            estimate_forecast_set(&series, resample_s, f.quantile_lo, f.quantile_hi, horizon)?
        } else {
            if n_inline != 4 {
                return Err(CliError::Config(
                    "forecast: p_lo_kw, p_hi_kw, w_lo_kwh and w_hi_kwh must all be given".into(),
                ));
            }
            let get = |v: &Option<PerStep>, key: &str| v.as_ref().expect("counted").expand(horizon, key);
            ForecastSet {
                p_lo_kw: get(&f.p_lo_kw, "p_lo_kw")?,
                p_hi_kw: get(&f.p_hi_kw, "p_hi_kw")?,
                w_lo_kwh: get(&f.w_lo_kwh, "w_lo_kwh")?,
                w_hi_kwh: get(&f.w_hi_kwh, "w_hi_kwh")?,
            }
        };
        set.validate(self.cfg.bess.step_s / 3600.0)?;
        Ok(set)
    }

    pub fn service(&self, seed: Option<u64>) -> Result<ServiceTrace, CliError> {
        let s = self
            .cfg
            .service
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [service] section".into()))?;
        self.service_from(s, seed)
    }

    pub fn service_from(&self, s: &ServiceSection, seed: Option<u64>) -> Result<ServiceTrace, CliError> {
        let synthetic = s.kind.is_some();
        if s.file.is_some() == synthetic {
            return Err(CliError::Config("service: give exactly one of file or kind".into()));
        }
        if let Some(file) = &s.file {
            let path = self.resolve(file);
            return ServiceTrace::read_csv(open(&path)?.as_slice())
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())));
        }
        let kind = match s.kind.as_deref().expect("checked") {
            "bursts" => ServiceKind::Bursts,
            "steps" => ServiceKind::Steps,
            "mixed" => ServiceKind::Mixed,
            other => {
                return Err(CliError::Config(format!(
                    "service.kind must be bursts, steps or mixed, got {other:?}"
                )))
            }
        };
        let d = ServiceParams::default();
        let params = ServiceParams {
            duration_s: s.duration_s.unwrap_or(d.duration_s),
            amplitude_kw: s.amplitude_kw.unwrap_or(d.amplitude_kw),
            duty: s.duty.unwrap_or(d.duty),
            mean_burst_s: s.mean_burst_s.unwrap_or(d.mean_burst_s),
            min_level: s.min_level.unwrap_or(d.min_level),
            steps: s.steps_kw_s.clone().unwrap_or_default(),
        };
        Ok(make_synthetic_service(kind, &params, seed.or(s.seed).unwrap_or(0)))
    }

    pub fn plant(&self) -> Result<PlantModel, CliError> {
        let circuit = self.circuit()?;
        Ok(PlantModel {
            circuit,
            ocv_model: ocv_model(&self.cfg.sim.plant_ocv_model, "sim.plant_ocv_model")?,
            r_multiplier: self.cfg.sim.plant_r_multiplier,
        })
    }

    /// Closed-loop scenario; without a sweep flip the high-SOC inputs equal
    /// the main ones and are never used.
    pub fn sim_scenario(&self, seed: Option<u64>) -> Result<SimScenario, CliError> {
        let service = self.service(seed)?;
        let forecasts = self.forecasts()?;
        let (service_high, forecasts_high, flip_soc) = match &self.cfg.sweep {
            Some(sw) if sw.flip_soc.is_some() => {
                let hs = sw
                    .high_service
                    .as_ref()
                    .ok_or_else(|| CliError::Config("sweep.flip_soc needs [sweep.high_service]".into()))?;
                let hf = sw
                    .high_forecast
                    .as_ref()
                    .ok_or_else(|| CliError::Config("sweep.flip_soc needs [sweep.high_forecast]".into()))?;
                (self.service_from(hs, seed)?, self.forecast_from(hf)?, sw.flip_soc.expect("matched"))
            }
            _ => (service.clone(), forecasts.clone(), f64::INFINITY),
        };
        let s = &self.cfg.scheduler;
        Ok(SimScenario {
            circuit: self.circuit()?,
            plant: self.plant()?,
            bess: self.bess()?,
            horizon: s.horizon,
            soft_constraints: s.soft_constraints,
            slack_penalty: s.slack_penalty,
            envelope: self.envelope_options()?,
            period_s: self.cfg.sim.period_s,
            service_low: service,
            forecasts_low: forecasts,
            service_high,
            forecasts_high,
            flip_soc,
        })
    }

    pub fn out_dir(&self, flag: Option<&Path>) -> PathBuf {
        match flag {
            Some(p) => p.to_path_buf(),
            None => self.resolve(&self.cfg.output.dir),
        }
    }
}

fn open(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
}

fn circuit_from(c: &CircuitSection) -> Result<CircuitParams, CliError> {
    let need = |v: Option<f64>, key: &str| v.ok_or_else(|| CliError::Config(format!("circuit.{key} is required")));
    let ocv = match (&c.ocv_table, c.ocv_intercept_v, c.ocv_slope_v) {
        (Some(rows), None, None) => {
            let samples: Vec<(f64, f64)> = rows.iter().map(|r| (r[0], r[1])).collect();
            let range = (c.ocv_fit_soc_min.unwrap_or(0.05), c.ocv_fit_soc_max.unwrap_or(0.95));
            OcvCurve::fit(&samples, range)?
        }
        (None, Some(a), Some(b)) => OcvCurve::linear(a, b),
        _ => {
            return Err(CliError::Config(
                "circuit: give either ocv_table or both ocv_intercept_v and ocv_slope_v".into(),
            ))
        }
    };
    Ok(CircuitParams::new(
        ocv,
        need(c.series_resistance_ohm, "series_resistance_ohm")?,
        need(c.v_min_v, "v_min_v")?,
        need(c.v_max_v, "v_max_v")?,
        need(c.i_max_a, "i_max_a")?,
    )?)
}
