//! Arrival-time distributions for 1D quantum wave packets on potential
//! barriers.
//!
//! The observable is the time a detector at a fixed point clicks, treated
//! through a positive operator valued measure built from non-orthogonal
//! arrival-time states. Packets prepared on one side of a non-negative
//! barrier are post-selected into transmitted or reflected channels (or
//! intercepted while still incoming), and each channel gets a conditional
//! probability density over arrival times, together with scattering
//! diagnostics: Wigner phase times, the width-saturation of the tunneling
//! delay, and the two-bump structure of quantum reflection.
//!
//! Units are natural, `hbar = 1`, with a configurable mass; momenta,
//! lengths, energies and times are all expressed in the matching powers of
//! the chosen length and time base.
//!
//! The crate is a library plus the `qtoa` binary, whose subcommands read a
//! TOML experiment description and write figure-ready CSV/JSON.

pub mod analysis;
pub mod classical;
pub mod config;
pub mod error;
pub mod quadrature;
pub mod scattering;
pub mod toa;
pub mod wavepacket;

pub use analysis::{
    approx_reflection_profile, barrier_phase_time, phase_time_prediction,
    stationary_phase_momentum, two_bump_condition, CoefficientKind, PhaseTimeReport,
    TwoBumpReport,
};
pub use classical::{
    classical_toa, classical_toa_piecewise, classical_toa_smooth, classical_toa_with_bounce,
    free_classical_toa, phase_portrait, separatrix, PhasePortrait, Potential, SeparatrixSign,
    SmoothBarrier, Trajectory,
};
pub use error::{Error, Result};
pub use quadrature::{
    build_momentum_grid, integrate_complex, integrate_density, oscillation_resolution_check,
    MomentumGrid, Resolution,
};
pub use scattering::{
    eigenstate, scattering_coefficients, transfer_matrix, wavefunction_continuity_check, Channel,
    Direction, PiecewiseBarrier, ScatteringCoefficients, Segment, Selection, TransferMatrix,
};
pub use toa::{
    arrival_amplitude, eigenstate_overlap, eigenstate_overlap_truncated, free_arrival_amplitude,
    free_toa_eigenfunction, incoming_amplitude, normalization_sq,
    normalization_sq_at_mean_momentum, reflection_amplitude, toa_distribution,
    transmission_amplitude, Detector, DetectorSide, TimeGrid, ToaDistribution, ToaParams,
};
pub use wavepacket::{GaussianPacket, MomentumAmplitude, PreparationQuality};
