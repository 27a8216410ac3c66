use thiserror::Error;

/// Errors produced by the model, simulation and fitting layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid value for `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("scan at theta_s = {theta_s_deg} deg is degenerate (constant or zero rate)")]
    DegenerateScan { theta_s_deg: f64 },

    #[error("both HV and VH rates are zero")]
    ZeroRates,

    #[error("rate_HV is zero; f is infinite, use the label-swapped convention")]
    InfiniteF,

    #[error("signal wavelength {signal_nm} nm has no physical idler for pump {pump_nm} nm")]
    NoIdler { signal_nm: f64, pump_nm: f64 },

    #[error("insufficient scan data: {0}")]
    InsufficientData(String),

    #[error("fit did not converge")]
    NotConverged,

    #[error("{what}, line {line}: {reason}")]
    Parse {
        what: &'static str,
        line: usize,
        reason: String,
    },

    #[error("no channel reports to aggregate")]
    EmptyReports,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
