//! Derived diagnostics: scattering phase times, the width-saturation of the
//! tunneling delay, the two-bump reflection predictor and stationary-phase
//! momenta.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quadrature::MomentumGrid;
use crate::scattering::{scattering_coefficients, Channel, PiecewiseBarrier};
use crate::toa::{toa_distribution, Detector, DetectorSide, TimeGrid, ToaParams};
use crate::wavepacket::GaussianPacket;

/// Which scattering amplitude a phase diagnostic differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefficientKind {
    Transmission,
    Reflection,
}

fn coefficient(barrier: &PiecewiseBarrier, p: f64, kind: CoefficientKind) -> Result<Complex64> {
    let c = scattering_coefficients(barrier, p)?;
    Ok(match kind {
        CoefficientKind::Transmission => c.transmission,
        CoefficientKind::Reflection => c.reflection,
    })
}

/// Relative step for the central energy differences.
const PHASE_STEP_FRACTION: f64 = 1e-5;

/// Phase increment between two amplitude samples. In strict mode a jump
/// larger than pi/2 means the amplitude crossed zero between the samples
/// and the phase derivative is not defined there. In smooth mode the
/// increment is folded modulo pi, which follows the phase of the amplitude
/// as a line rather than a ray and rides through simple sign-flip zeros.
fn phase_increment(w_hi: Complex64, w_lo: Complex64, p: f64, smooth: bool) -> Result<f64> {
    let mut dphi = (w_hi * w_lo.conj()).arg();
    if smooth {
        dphi -= std::f64::consts::PI * (dphi / std::f64::consts::PI).round();
        Ok(dphi)
    } else if dphi.abs() > std::f64::consts::FRAC_PI_2 {
        Err(Error::SingularPhase { p })
    } else {
        Ok(dphi)
    }
}

/// d(arg W)/dE at `p` by Richardson-extrapolated central differences.
fn phase_derivative_energy(
    barrier: &PiecewiseBarrier,
    p: f64,
    kind: CoefficientKind,
    smooth: bool,
) -> Result<f64> {
    if !(p.is_finite() && p > 0.0) {
        return Err(Error::InvalidInput(format!("momentum must be positive, got {p}")));
    }
    let m = barrier.mass();
    let e = p * p / (2.0 * m);
    let h = PHASE_STEP_FRACTION * e;
    let p_of = |energy: f64| (2.0 * m * energy).sqrt();

    let w_centre = coefficient(barrier, p, kind)?;
    let w_hi = coefficient(barrier, p_of(e + h), kind)?;
    let w_lo = coefficient(barrier, p_of(e - h), kind)?;
    let scale = w_hi.norm().max(w_lo.norm());
    if scale == 0.0 || (!smooth && w_centre.norm() < 1e-3 * scale) {
        return Err(Error::SingularPhase { p });
    }

    let w_hi_half = coefficient(barrier, p_of(e + 0.5 * h), kind)?;
    let w_lo_half = coefficient(barrier, p_of(e - 0.5 * h), kind)?;
    let d_full = phase_increment(w_hi, w_lo, p, smooth)? / (2.0 * h);
    let d_half = phase_increment(w_hi_half, w_lo_half, p, smooth)? / h;
    Ok((4.0 * d_half - d_full) / 3.0)
}

/// Wigner phase time d(arg T)/dE (or d(arg R)/dE), the stationary-phase
/// arrival delay of the packet peak relative to free flight over the same
/// source-to-detector path.
pub fn wigner_delay(barrier: &PiecewiseBarrier, p: f64, kind: CoefficientKind) -> Result<f64> {
    phase_derivative_energy(barrier, p, kind, false)
}

/// d(arg W)/dp in length units, tolerant of sign-flip zeros of W.
pub(crate) fn smooth_phase_slope(
    barrier: &PiecewiseBarrier,
    p: f64,
    kind: CoefficientKind,
) -> Result<f64> {
    let de = phase_derivative_energy(barrier, p, kind, true)?;
    Ok(de * p / barrier.mass())
}

/// Transmission phase time referenced to the barrier faces,
/// `d(arg T)/dE + m * support_width / p`. Unlike [`wigner_delay`] this is
/// the quantity that saturates with barrier width for opaque barriers.
pub fn barrier_phase_time(barrier: &PiecewiseBarrier, p: f64) -> Result<f64> {
    let delay = wigner_delay(barrier, p, CoefficientKind::Transmission)?;
    let (left, right) = barrier.support();
    Ok(delay + barrier.mass() * (right - left) / p)
}

/// Peak-arrival prediction: computed free peak plus the Wigner delay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseTimeReport {
    pub p0: f64,
    pub wigner_delay: f64,
    /// Most probable free arrival over the same path, computed with V = 0.
    pub reference_free_toa: f64,
    pub predicted_toa: f64,
}

/// Stationary-phase prediction of the arrival peak for the detector's
/// channel: transmission for a right-side detector, reflection for a
/// left-side one.
pub fn phase_time_prediction(
    packet: &GaussianPacket,
    barrier: &PiecewiseBarrier,
    detector: &Detector,
    time_grid: &TimeGrid,
    grid: &MomentumGrid,
) -> Result<PhaseTimeReport> {
    detector.validate(barrier)?;
    let kind = match detector.side {
        DetectorSide::RightOfBarrier => CoefficientKind::Transmission,
        DetectorSide::LeftOfBarrier => CoefficientKind::Reflection,
    };
    let delay = wigner_delay(barrier, packet.p0, kind)?;
    // Free reference over the same path, with the reflected path unfolded
    // through the origin the amplitude phases are referenced to.
    let x_ref = match detector.side {
        DetectorSide::RightOfBarrier => detector.position,
        DetectorSide::LeftOfBarrier => -detector.position,
    };
    let free = PiecewiseBarrier::free(packet.mass);
    let reference = toa_distribution(
        packet,
        &free,
        &Detector::right_of_barrier(x_ref),
        Channel::R_MINUS,
        time_grid,
        grid,
        &ToaParams::default(),
    )?;
    Ok(PhaseTimeReport {
        p0: packet.p0,
        wigner_delay: delay,
        reference_free_toa: reference.most_probable_toa,
        predicted_toa: reference.most_probable_toa + delay,
    })
}

/// How close the interior momentum is to an exact reflection zero
/// `p'0 a = n pi`, and the barrier height that would make it exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoBumpReport {
    pub n_nearest: u32,
    pub residual: f64,
    pub v_star: f64,
}

/// Reflection-zero condition for a single square barrier in the quantum
/// reflection regime E0 > V.
pub fn two_bump_condition(barrier: &PiecewiseBarrier, p0: f64) -> Result<TwoBumpReport> {
    if !(p0.is_finite() && p0 > 0.0) {
        return Err(Error::InvalidInput(format!("momentum must be positive, got {p0}")));
    }
    let (width, height) = barrier.as_single_square().ok_or_else(|| {
        Error::NotApplicable("the reflection-zero condition needs a single square barrier".into())
    })?;
    let m = barrier.mass();
    let e0 = p0 * p0 / (2.0 * m);
    if e0 <= height {
        return Err(Error::NotApplicable(format!(
            "quantum reflection needs E0 > V, got E0 = {e0}, V = {height}"
        )));
    }
    let kv_sq = 2.0 * m * height;
    let interior = (p0 * p0 - kv_sq).sqrt();
    let phase = interior * width;
    let n = (phase / std::f64::consts::PI).round().max(1.0);
    let target = n * std::f64::consts::PI / width;
    Ok(TwoBumpReport {
        n_nearest: n as u32,
        residual: phase - n * std::f64::consts::PI,
        v_star: (p0 * p0 - target * target) / (2.0 * m),
    })
}

const STATIONARY_MAX_ITERATIONS: usize = 200;

/// Momentum contributing stationarily to the arrival at time `t`: the
/// fixed point of `p = m (path + d(arg W)/dp) / t`, with path `x - q0`
/// for transmission and `-y - q0` for reflection.
pub fn stationary_phase_momentum(
    t: f64,
    detector: &Detector,
    q0: f64,
    barrier: &PiecewiseBarrier,
    kind: CoefficientKind,
) -> Result<f64> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::InvalidInput(format!("stationary-phase time must be positive, got {t}")));
    }
    let expected_side = match kind {
        CoefficientKind::Transmission => DetectorSide::RightOfBarrier,
        CoefficientKind::Reflection => DetectorSide::LeftOfBarrier,
    };
    if detector.side != expected_side {
        return Err(Error::InvalidDetector(format!(
            "{kind:?} stationary phase needs a detector on the {expected_side:?} side"
        )));
    }
    let path = match kind {
        CoefficientKind::Transmission => detector.position - q0,
        CoefficientKind::Reflection => -detector.position - q0,
    };
    if path <= 0.0 {
        return Err(Error::NoStationaryPoint { iterations: 0 });
    }
    let m = barrier.mass();
    let mut p = m * path / t;
    for _ in 0..STATIONARY_MAX_ITERATIONS {
        let slope = if barrier.is_free() { 0.0 } else { smooth_phase_slope(barrier, p, kind)? };
        let next = 0.5 * (p + m * (path + slope) / t);
        if !(next.is_finite() && next > 0.0) {
            return Err(Error::NoStationaryPoint { iterations: STATIONARY_MAX_ITERATIONS });
        }
        let done = (next - p).abs() <= 1e-12 * p.abs().max(1.0);
        p = next;
        if done {
            return Ok(p);
        }
    }
    Err(Error::NoStationaryPoint { iterations: STATIONARY_MAX_ITERATIONS })
}

/// The unnormalized stationary-phase profile behind the two-bump
/// reflection structure,
/// `sin^2(sqrt(p(t)^2 - k_v^2) a) exp(-2 delta^2 (p(t) - p0)^2)`.
pub fn approx_reflection_profile(
    t: f64,
    y: f64,
    q0: f64,
    packet: &GaussianPacket,
    barrier: &PiecewiseBarrier,
) -> Result<f64> {
    let (width, height) = barrier.as_single_square().ok_or_else(|| {
        Error::NotApplicable("the approximate profile needs a single square barrier".into())
    })?;
    let detector = Detector::left_of_barrier(y);
    let p_t = stationary_phase_momentum(t, &detector, q0, barrier, CoefficientKind::Reflection)?;
    let kv_sq = 2.0 * barrier.mass() * height;
    if p_t * p_t <= kv_sq {
        return Err(Error::EvanescentWindow { p: p_t, k_v: kv_sq.sqrt() });
    }
    let interior = (p_t * p_t - kv_sq).sqrt();
    let gauss = -2.0 * packet.delta * packet.delta * (p_t - packet.p0) * (p_t - packet.p0);
    Ok((interior * width).sin().powi(2) * gauss.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::build_momentum_grid;

    /// Closed-form d(arg T)/dE for the square barrier, differentiated by
    /// hand on both sides of the top; the oracle the finite differences
    /// must reproduce.
    fn analytic_transmission_delay(v: f64, a: f64, m: f64, p: f64) -> f64 {
        let kv2 = 2.0 * m * v;
        let d_arg_dp = if p * p > kv2 {
            let pp = (p * p - kv2).sqrt();
            let theta = pp * a;
            let b = (p * p + pp * pp) / (2.0 * p * pp);
            let b_prime = -kv2 * kv2 / (2.0 * p * p * pp * pp * pp);
            let theta_prime = a * p / pp;
            let (s, c) = theta.sin_cos();
            -a + (b_prime * s * c + b * theta_prime) / (c * c + b * b * s * s)
        } else {
            let kappa = (kv2 - p * p).sqrt();
            let g = (kappa * kappa - p * p) / (2.0 * p * kappa);
            let g_prime = -kv2 * kv2 / (2.0 * p * p * kappa * kappa * kappa);
            let th = (kappa * a).tanh();
            let sech2 = 1.0 - th * th;
            let psi_prime =
                (g_prime * th + g * a * (-p / kappa) * sech2) / (1.0 + g * g * th * th);
            -a - psi_prime
        };
        (m / p) * d_arg_dp
    }

    #[test]
    fn free_delay_is_exactly_zero() {
        let b = PiecewiseBarrier::free(1.0);
        assert_eq!(wigner_delay(&b, 2.0, CoefficientKind::Transmission).unwrap(), 0.0);
    }

    #[test]
    fn finite_differences_match_the_analytic_derivative() {
        // Deterministic sweep over both branches, resonances included.
        let mut worst = 0.0_f64;
        let mut count = 0;
        for i in 0..10 {
            let v = 0.4 + 0.45 * i as f64;
            for j in 0..10 {
                let a = 1.0 + 0.9 * j as f64;
                let b = PiecewiseBarrier::square(v, a, 1.0).unwrap();
                let p = 0.6 + 0.23 * ((i * 10 + j) % 11) as f64;
                if (p * p - 2.0 * v).abs() < 1e-2 {
                    continue; // skip the barrier top where the formulas switch
                }
                let fd = wigner_delay(&b, p, CoefficientKind::Transmission).unwrap();
                let exact = analytic_transmission_delay(v, a, 1.0, p);
                worst = worst.max((fd - exact).abs());
                count += 1;
                assert!(
                    (fd - exact).abs() < 1e-6 * exact.abs().max(1.0),
                    "V={v} a={a} p={p}: fd {fd} vs analytic {exact}"
                );
            }
        }
        assert!(count >= 90, "sweep too thin: {count} points, worst {worst:e}");
    }

    #[test]
    fn hartman_saturation_of_the_barrier_phase_time() {
        // kappa a in [10, 20]: the face-referenced delay is width-independent.
        let (v, p, m) = (4.5_f64, 2.0_f64, 1.0_f64);
        let kappa = (2.0 * m * v - p * p).sqrt();
        let widths: Vec<f64> = (0..=10).map(|i| (10.0 + i as f64) / kappa).collect();
        let mut delays = Vec::new();
        for &a in &widths {
            let b = PiecewiseBarrier::square(v, a, m).unwrap();
            delays.push(barrier_phase_time(&b, p).unwrap());
        }
        let lo = delays.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = delays.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(hi > 0.0);
        assert!((hi - lo) / hi < 0.02, "spread {} over {delays:?}", hi - lo);
        // And the raw arrival delay does not saturate: it tracks the
        // shrinking free path, dropping by about m/p per unit width.
        let d_first = wigner_delay(
            &PiecewiseBarrier::square(v, widths[0], m).unwrap(),
            p,
            CoefficientKind::Transmission,
        )
        .unwrap();
        let d_last = wigner_delay(
            &PiecewiseBarrier::square(v, *widths.last().unwrap(), m).unwrap(),
            p,
            CoefficientKind::Transmission,
        )
        .unwrap();
        let slope = (d_last - d_first) / (widths.last().unwrap() - widths[0]);
        assert!((slope + m / p).abs() < 0.02, "arrival-delay slope {slope}");
    }

    #[test]
    fn reflection_phase_is_singular_at_the_two_bump_zero() {
        let p0 = 2.0;
        let b0 = PiecewiseBarrier::square(1.125, 10.0, 1.0).unwrap();
        let report = two_bump_condition(&b0, p0).unwrap();
        let starred = PiecewiseBarrier::square(report.v_star, 10.0, 1.0).unwrap();
        assert!(matches!(
            wigner_delay(&starred, p0, CoefficientKind::Reflection),
            Err(Error::SingularPhase { .. })
        ));
        // Away from the zero the reflection delay is perfectly regular.
        assert!(wigner_delay(&starred, p0 * 1.02, CoefficientKind::Reflection).is_ok());
    }

    #[test]
    fn two_bump_condition_reproduces_the_design_height() {
        let p0 = 2.0;
        let b = PiecewiseBarrier::square(1.125, 10.0, 1.0).unwrap();
        let report = two_bump_condition(&b, p0).unwrap();
        assert_eq!(report.n_nearest, 4);
        let target = 4.0 * std::f64::consts::PI / 10.0;
        let expect = (p0 * p0 - target * target) / 2.0;
        assert!((report.v_star - expect).abs() < 1e-12);
        assert!((report.v_star - 1.21043).abs() < 1e-4);

        // At V = V* the condition is exact and R(p0) vanishes.
        let starred = PiecewiseBarrier::square(report.v_star, 10.0, 1.0).unwrap();
        let again = two_bump_condition(&starred, p0).unwrap();
        assert!(again.residual.abs() < 1e-10);
        let r = scattering_coefficients(&starred, p0).unwrap().reflection.norm();
        assert!(r < 1e-12, "|R(p0)| = {r:e}");
    }

    #[test]
    fn two_bump_condition_in_the_free_limit() {
        // V -> 0 reduces the condition to p0 a = n pi.
        let b = PiecewiseBarrier::square(1e-12, 10.0, 1.0).unwrap();
        let report = two_bump_condition(&b, 2.0).unwrap();
        assert_eq!(report.n_nearest, (20.0 / std::f64::consts::PI).round() as u32);
        assert!((report.residual - (20.0 - report.n_nearest as f64 * std::f64::consts::PI)).abs() < 1e-6);
    }

    #[test]
    fn two_bump_condition_requires_quantum_reflection() {
        let b = PiecewiseBarrier::square(4.5, 10.0, 1.0).unwrap();
        assert!(matches!(two_bump_condition(&b, 2.0), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn stationary_momentum_free_cases() {
        let b = PiecewiseBarrier::free(1.0);
        let det = Detector::right_of_barrier(50.0);
        let p = stationary_phase_momentum(50.0, &det, -50.0, &b, CoefficientKind::Transmission)
            .unwrap();
        assert!((p - 2.0).abs() < 1e-12);
        let p = stationary_phase_momentum(40.0, &det, -50.0, &b, CoefficientKind::Transmission)
            .unwrap();
        assert!((p - 2.5).abs() < 1e-12);
    }

    #[test]
    fn approximate_profile_dips_where_the_interior_phase_is_resonant() {
        let p0 = 2.0;
        let b0 = PiecewiseBarrier::square(1.125, 10.0, 1.0).unwrap();
        let v_star = two_bump_condition(&b0, p0).unwrap().v_star;
        let barrier = PiecewiseBarrier::square(v_star, 10.0, 1.0).unwrap();
        let packet = GaussianPacket::new(-50.0, p0, 10.0, 1.0).unwrap();
        let (y, q0) = (-50.0, -50.0);
        // Time at which the stationary momentum equals p0.
        let slope = smooth_phase_slope(&barrier, p0, CoefficientKind::Reflection).unwrap();
        let t_dip = (100.0 + slope) / p0;
        let at_dip = approx_reflection_profile(t_dip, y, q0, &packet, &barrier).unwrap();
        assert!(at_dip < 1e-10, "profile at the dip: {at_dip:e}");
        // Flanking maxima on both sides within the Gaussian window.
        let flank_lo = approx_reflection_profile(t_dip * 0.96, y, q0, &packet, &barrier).unwrap();
        let flank_hi = approx_reflection_profile(t_dip * 1.04, y, q0, &packet, &barrier).unwrap();
        assert!(flank_lo > 0.05 && flank_hi > 0.05, "flanks {flank_lo} {flank_hi}");
    }

    #[test]
    fn profile_errors_in_the_evanescent_window() {
        let barrier = PiecewiseBarrier::square(1.9, 10.0, 1.0).unwrap();
        let packet = GaussianPacket::new(-50.0, 2.0, 10.0, 1.0).unwrap();
        // Very late arrivals map to slow momenta inside the evanescent gap.
        let r = approx_reflection_profile(80.0, -50.0, -50.0, &packet, &barrier);
        assert!(matches!(r, Err(Error::EvanescentWindow { .. })));
    }

    #[test]
    fn prediction_reduces_to_the_free_peak_without_a_barrier() {
        let packet = GaussianPacket::new(-50.0, 2.0, 10.0, 1.0).unwrap();
        let barrier = PiecewiseBarrier::free(1.0);
        let (grid, _) = build_momentum_grid(&packet, 8.0, 2049).unwrap();
        let times = TimeGrid::uniform(12.5, 125.0, 4001).unwrap();
        let report = phase_time_prediction(
            &packet,
            &barrier,
            &Detector::right_of_barrier(50.0),
            &times,
            &grid,
        )
        .unwrap();
        assert_eq!(report.wigner_delay, 0.0);
        assert!((report.predicted_toa - 49.9377).abs() < 5e-3);
        assert_eq!(report.predicted_toa, report.reference_free_toa);
    }
}
