use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value failed validation. `key` is the dotted path in the
    /// config file (e.g. `channel.bandwidth_hz`).
    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("malformed config: {0}")]
    ConfigParse(String),

    #[error("invalid argument `{name}`: must be {requirement}, got {value}")]
    InvalidArgument {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },

    /// The inner problem would reward unbounded travel or hovering.
    #[error("dual variable out of admissible range: nu = {nu:e} (cap {cap:e})")]
    InadmissibleDual { nu: f64, cap: f64 },

    #[error(
        "relative value iteration did not converge after {iterations} iterations (span {span:e})"
    )]
    NotConverged { iterations: usize, span: f64 },

    #[error("average power target {p_avg} W is infeasible; minimal achievable average power is {min_power} W")]
    Infeasible { p_avg: f64, min_power: f64 },

    #[error(
        "no evaluated policy satisfies the power target {p_avg} W; least violating policy draws {least_power} W at nu = {least_nu:e}"
    )]
    NoFeasiblePolicy {
        p_avg: f64,
        least_power: f64,
        least_nu: f64,
    },

    #[error("unsupported policy file version {0}")]
    PolicyVersion(u32),

    #[error("policy does not match the state grid: {0}")]
    PolicyMismatch(String),

    #[error("replayed outputs differ from the manifest: {0}")]
    ReplayMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::InvalidArgument {
            name,
            requirement: "finite and > 0",
            value,
        })
    }
}

pub(crate) fn check_non_negative(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(Error::InvalidArgument {
            name,
            requirement: "finite and >= 0",
            value,
        })
    }
}
