use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("field/grid mismatch: {0}")]
    Mismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("time {t} outside schedule horizon [0, {t_end}]")]
    TimeOutOfRange { t: f64, t_end: f64 },

    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("atom {norm} outside admissible ball of radius {r_max}")]
    AtomOutsideBall { norm: f64, r_max: f64 },

    #[error("invalid material: {0}")]
    Material(String),

    #[error("solver did not converge: {what} (residual {residual:.3e} after {iterations} iterations)")]
    NoConvergence {
        what: &'static str,
        residual: f64,
        iterations: usize,
    },

    #[error("objective increased during alternation: {before:.15e} -> {after:.15e}")]
    NonMonotone { before: f64, after: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
