use thiserror::Error;

/// Errors surfaced by the scattering, classical and arrival-time engines.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("zero momentum: the equation of time is undefined at p = 0")]
    ZeroMomentum,

    #[error(
        "classically forbidden path: V(q) >= E somewhere between source and detector \
         (E = {energy}, max V on path = {barrier_top})"
    )]
    ClassicallyForbidden { energy: f64, barrier_top: f64 },

    #[error("invalid detector placement: {0}")]
    InvalidDetector(String),

    #[error(
        "empty channel: normalization {normalization_sq:.3e} below floor {floor:.3e}, \
         no particles arrive through this channel"
    )]
    EmptyChannel { normalization_sq: f64, floor: f64 },

    #[error(
        "momentum grid too coarse for the requested workload: \
         {nodes} nodes, at least {required_nodes} required"
    )]
    InsufficientResolution { nodes: usize, required_nodes: usize },

    #[error("integrand is not finite at node p = {node}")]
    NonFiniteIntegrand { node: f64 },

    #[error("scattering phase undefined: amplitude vanishes at p = {p}")]
    SingularPhase { p: f64 },

    #[error("stationary-phase iteration did not converge after {iterations} iterations")]
    NoStationaryPoint { iterations: usize },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error(
        "stationary momentum p = {p} is evanescent inside the barrier (k_v = {k_v}); \
         the approximate reflection profile is undefined here"
    )]
    EvanescentWindow { p: f64, k_v: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
