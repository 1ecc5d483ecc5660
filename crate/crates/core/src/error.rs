use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} = {value} is outside [{lo}, {hi}]")]
    Domain { what: &'static str, value: f64, lo: f64, hi: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("empty power interval at soc {soc}: lower {p_lo_kw} kW > upper {p_hi_kw} kW")]
    EmptyInterval { soc: f64, p_lo_kw: f64, p_hi_kw: f64 },
    #[error("power {power_kw} kW exceeds the maximum transferable {max_kw} kW")]
    InfeasiblePower { power_kw: f64, max_kw: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("scheduling problem is infeasible: {}", diagnosis.join(", "))]
    Infeasible { diagnosis: Vec<String> },
    #[error("solver did not converge: {0}")]
    Solver(String),
    #[error(transparent)]
    Qp(#[from] dpc_qp::QpError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("bad data: {0}")]
    Data(String),
}

pub(crate) fn check_soc(what: &'static str, soc: f64) -> Result<()> {
    if (0.0..=1.0).contains(&soc) {
        Ok(())
    } else {
        Err(Error::Domain { what, value: soc, lo: 0.0, hi: 1.0 })
    }
}
