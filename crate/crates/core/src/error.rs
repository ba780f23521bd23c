use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} = {value} is outside its domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("characteristic functions live on different grids")]
    GridMismatch,

    #[error("radius {r} exceeds the grid range (r_max = {r_max})")]
    OutOfRange { r: f64, r_max: f64 },

    #[error("inversion tail beyond r_max is not negligible (bound {bound:.3e} > tol {tol:.3e})")]
    TailNotNegligible { bound: f64, tol: f64 },

    #[error("{what} diverges (last partial value {partial:.6e}, growth factor {growth:.3})")]
    Divergent {
        what: String,
        partial: f64,
        growth: f64,
    },

    #[error("operation requires a cutoff kernel but the kernel is not integrable")]
    NonCutoff,

    #[error("quadrature did not reach tolerance {tol:.1e} (estimated error {estimate:.3e})")]
    Quadrature { tol: f64, estimate: f64 },

    #[error("Picard sweep ratio {ratio:.4} exceeds the contraction bound {bound:.4}")]
    ContractionViolated { ratio: f64, bound: f64 },

    #[error("step at t = {t} rejected after {halvings} halvings: {reason}")]
    StepRejected {
        t: f64,
        halvings: u32,
        reason: String,
    },

    #[error("invalid configuration at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
