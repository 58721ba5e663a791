use thiserror::Error;

use crate::geometry::RegionId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("inconsistent units: {0}")]
    InvalidUnit(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("unknown preset label `{0}`")]
    UnknownPreset(String),
    #[error("mesh generation failed: {0}")]
    Mesh(String),
    #[error("linear solve did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("region {0} is not an interface")]
    NotInterface(RegionId),
    #[error("region {0} is not a meshed bulk region")]
    NotBulk(RegionId),
    #[error("no boundary samples for region {0}")]
    MissingSamples(RegionId),
    #[error("missing loss tangent for lossy region {0}")]
    MissingLossTangent(String),
    #[error("budget total is zero")]
    ZeroTotal,
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("no resonance dip found in trace")]
    NoDip,
    #[error("fit diverged: {0}")]
    FitDiverged(String),
    #[error("ill-conditioned fit: impedance-mismatch angle {0:.3} rad reaches pi/2")]
    IllConditioned(f64),
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error("empty input")]
    Empty,
    #[error("missing counterpart: {0}")]
    MissingCounterpart(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
