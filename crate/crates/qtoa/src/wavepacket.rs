//! The initial Gaussian state in position and momentum representations.
//!
//! The momentum-space form is the canonical one here: every arrival-time
//! integral is a momentum integral weighted by `psi~(p)`. The position form
//! exists for validation and plotting.

use num_complex::Complex64;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Minimum p0*delta and maximum delta/|q0| for the single-sided
/// momentum-weight approximations to be trustworthy.
pub const MIN_P0_DELTA: f64 = 5.0;
pub const MAX_DELTA_OVER_Q0: f64 = 0.5;

/// Any state that exposes a momentum-space amplitude on the positive
/// spectrum can drive the arrival-time machinery; Gaussians are the one
/// preparation shipped here.
pub trait MomentumAmplitude {
    fn momentum_amplitude(&self, p: f64) -> Complex64;
    /// Mass of the particle the state describes.
    fn mass(&self) -> f64;
    /// Packet mass carried by p < 0; must be negligible for the
    /// single-sided channel weights.
    fn negative_tail_weight(&self) -> f64;
}

/// Gaussian packet of width `Delta q = delta` centred at `q0` with mean
/// momentum `p0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPacket {
    pub q0: f64,
    pub p0: f64,
    pub delta: f64,
    pub mass: f64,
}

impl GaussianPacket {
    pub fn new(q0: f64, p0: f64, delta: f64, mass: f64) -> Result<Self> {
        if !(q0.is_finite() && p0.is_finite() && delta.is_finite() && mass.is_finite()) {
            return Err(Error::InvalidInput("packet parameters must be finite".into()));
        }
        if delta <= 0.0 {
            return Err(Error::InvalidInput(format!("delta must be positive, got {delta}")));
        }
        if mass <= 0.0 {
            return Err(Error::InvalidInput(format!("mass must be positive, got {mass}")));
        }
        Ok(GaussianPacket { q0, p0, delta, mass })
    }

    /// `<q|psi> = (1/2 pi delta^2)^{1/4} e^{-delta^2 p0^2} e^{-((q-q0)/2delta - i delta p0)^2}`.
    ///
    /// The two exponents are combined before exponentiating; evaluated
    /// separately they overflow already at modest `p0 delta`.
    pub fn position_amplitude(&self, q: f64) -> Complex64 {
        let norm = (1.0 / (2.0 * std::f64::consts::PI * self.delta * self.delta)).powf(0.25);
        let z = Complex64::new((q - self.q0) / (2.0 * self.delta), -self.delta * self.p0);
        let exponent = -z * z - self.delta * self.delta * self.p0 * self.p0;
        norm * exponent.exp()
    }

    /// `psi~(p) = (2 delta^2 / pi)^{1/4} e^{-delta^2 (p - p0)^2 - i p q0}`.
    pub fn momentum_amplitude(&self, p: f64) -> Complex64 {
        let norm = (2.0 * self.delta * self.delta / std::f64::consts::PI).powf(0.25);
        let exponent =
            Complex64::new(-self.delta * self.delta * (p - self.p0) * (p - self.p0), -p * self.q0);
        norm * exponent.exp()
    }

    /// Packet mass on the negative momentum half-line.
    pub fn negative_tail_weight(&self) -> f64 {
        0.5 * erfc(std::f64::consts::SQRT_2 * self.delta * self.p0)
    }

    /// Diagnostics deciding whether the single-sided momentum weights are
    /// justified for this preparation.
    pub fn preparation_quality(&self) -> PreparationQuality {
        let p0_delta = self.p0 * self.delta;
        let delta_over_q0 =
            if self.q0 == 0.0 { None } else { Some(self.delta / self.q0.abs()) };
        let negative_tail_weight = self.negative_tail_weight();
        let acceptable = p0_delta >= MIN_P0_DELTA
            && delta_over_q0.is_some_and(|r| r <= MAX_DELTA_OVER_Q0);
        PreparationQuality { p0_delta, delta_over_q0, negative_tail_weight, acceptable }
    }
}

impl MomentumAmplitude for GaussianPacket {
    fn momentum_amplitude(&self, p: f64) -> Complex64 {
        GaussianPacket::momentum_amplitude(self, p)
    }

    fn mass(&self) -> f64 {
        self.mass
    }

    fn negative_tail_weight(&self) -> f64 {
        GaussianPacket::negative_tail_weight(self)
    }
}

/// Preparation report: `p0 delta`, `delta / |q0|` (undefined at q0 = 0) and
/// the negative-momentum mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreparationQuality {
    pub p0_delta: f64,
    pub delta_over_q0: Option<f64>,
    pub negative_tail_weight: f64,
    pub acceptable: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::MomentumGrid;

    fn fig_packet() -> GaussianPacket {
        GaussianPacket::new(-50.0, 2.0, 10.0, 1.0).unwrap()
    }

    #[test]
    fn modulus_at_the_centre() {
        let packet = fig_packet();
        let at_q0 = packet.position_amplitude(packet.q0).norm();
        let expect_q =
            (1.0 / (2.0 * std::f64::consts::PI * packet.delta * packet.delta)).powf(0.25);
        assert!((at_q0 - expect_q).abs() < 1e-12);

        let at_p0 = packet.momentum_amplitude(packet.p0).norm();
        let expect_p = (2.0 * packet.delta * packet.delta / std::f64::consts::PI).powf(0.25);
        assert!((at_p0 - expect_p).abs() < 1e-12);
    }

    #[test]
    fn both_representations_are_normalized() {
        let packet = fig_packet();
        let q_grid = MomentumGrid::simpson(0.0, 200.0, 8001).unwrap();
        let q_mass: f64 = q_grid
            .nodes()
            .iter()
            .zip(q_grid.weights())
            .map(|(&u, &w)| w * packet.position_amplitude(u - 150.0).norm_sqr())
            .sum();
        assert!((q_mass - 1.0).abs() < 1e-10, "position mass {q_mass}");

        let p_grid = MomentumGrid::simpson(0.0, 4.0, 8001).unwrap();
        let p_mass: f64 = p_grid
            .nodes()
            .iter()
            .zip(p_grid.weights())
            .map(|(&p, &w)| w * packet.momentum_amplitude(p).norm_sqr())
            .sum();
        assert!((p_mass - 1.0).abs() < 1e-10, "momentum mass {p_mass}");
    }

    #[test]
    fn densities_are_symmetric_about_their_centres() {
        let packet = fig_packet();
        for off in [0.3, 1.7, 9.2] {
            let a = packet.position_amplitude(packet.q0 - off).norm_sqr();
            let b = packet.position_amplitude(packet.q0 + off).norm_sqr();
            assert!((a - b).abs() < 1e-14 * a.max(1e-300));
        }
        for off in [0.01, 0.1, 0.35] {
            let a = packet.momentum_amplitude(packet.p0 - off).norm_sqr();
            let b = packet.momentum_amplitude(packet.p0 + off).norm_sqr();
            assert!((a - b).abs() < 1e-14 * a.max(1e-300));
        }
    }

    #[test]
    fn negative_tail_is_below_floor_for_fig_packet() {
        let w = fig_packet().negative_tail_weight();
        assert!(w < 1e-15, "negative tail {w:e}");
    }

    #[test]
    fn preparation_quality_reports_fig_packet() {
        let q = fig_packet().preparation_quality();
        assert!((q.p0_delta - 20.0).abs() < 1e-12);
        assert!((q.delta_over_q0.unwrap() - 0.2).abs() < 1e-12);
        assert!(q.acceptable);
    }

    #[test]
    fn stationary_packet_is_flagged() {
        let q = GaussianPacket::new(-50.0, 0.0, 10.0, 1.0).unwrap().preparation_quality();
        assert_eq!(q.p0_delta, 0.0);
        assert!(!q.acceptable);
        assert!((q.negative_tail_weight - 0.5).abs() < 1e-12);
    }

    #[test]
    fn packet_at_origin_is_flagged() {
        let q = GaussianPacket::new(0.0, 2.0, 10.0, 1.0).unwrap().preparation_quality();
        assert!(q.delta_over_q0.is_none());
        assert!(!q.acceptable);
    }

    #[test]
    fn degenerate_parameters_are_rejected() {
        assert!(GaussianPacket::new(-50.0, 2.0, 0.0, 1.0).is_err());
        assert!(GaussianPacket::new(-50.0, 2.0, -1.0, 1.0).is_err());
        assert!(GaussianPacket::new(-50.0, 2.0, 10.0, 0.0).is_err());
        assert!(GaussianPacket::new(f64::NAN, 2.0, 10.0, 1.0).is_err());
    }
}
