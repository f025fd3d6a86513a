//! Classical equation of time, free arrival times and the phase-space
//! portraits with separatrices.

use crate::error::{Error, Result};
use crate::scattering::{Channel, Direction, PiecewiseBarrier};

/// The well-behaved smooth barrier `V(q) = V / cosh^2(q / d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothBarrier {
    pub height: f64,
    pub width: f64,
    pub mass: f64,
}

impl SmoothBarrier {
    pub fn new(height: f64, width: f64, mass: f64) -> Result<Self> {
        if !(height.is_finite() && height > 0.0) {
            return Err(Error::InvalidInput(format!("height must be positive, got {height}")));
        }
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::InvalidInput(format!("width must be positive, got {width}")));
        }
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::InvalidInput(format!("mass must be positive, got {mass}")));
        }
        Ok(SmoothBarrier { height, width, mass })
    }

    pub fn potential_at(&self, q: f64) -> f64 {
        let c = (q / self.width).cosh();
        self.height / (c * c)
    }

    /// Positive turning point for E < V; `V(+-q*) = E`.
    pub fn turning_point(&self, energy: f64) -> Option<f64> {
        if energy <= 0.0 || energy >= self.height {
            return None;
        }
        Some(self.width * (self.height / energy).sqrt().acosh())
    }
}

/// Either barrier family accepted by the classical equation of time.
#[derive(Debug, Clone, Copy)]
pub enum Potential<'a> {
    Piecewise(&'a PiecewiseBarrier),
    Smooth(&'a SmoothBarrier),
}

/// Free time of arrival `m (x - q) / p`; negative when the detector sits
/// behind the mover.
pub fn free_classical_toa(q: f64, p: f64, x: f64, mass: f64) -> Result<f64> {
    if p == 0.0 {
        return Err(Error::ZeroMomentum);
    }
    Ok(mass * (x - q) / p)
}

/// Classical time of arrival at `x` of a particle at `(q, p)`, by the
/// equation of time along a monotone path. Closed form on
/// piecewise-constant potentials, quadrature on smooth ones.
pub fn classical_toa(potential: Potential<'_>, q: f64, p: f64, x: f64) -> Result<f64> {
    match potential {
        Potential::Piecewise(b) => classical_toa_piecewise(b, q, p, x),
        Potential::Smooth(b) => classical_toa_smooth(b, q, p, x),
    }
}

pub fn classical_toa_piecewise(barrier: &PiecewiseBarrier, q: f64, p: f64, x: f64) -> Result<f64> {
    if p == 0.0 {
        return Err(Error::ZeroMomentum);
    }
    if q == x {
        return Ok(0.0);
    }
    let m = barrier.mass();
    let energy = p * p / (2.0 * m) + barrier.potential_at(q);
    let (lo, hi) = if q < x { (q, x) } else { (x, q) };

    let mut cuts: Vec<f64> = vec![lo];
    for seg in barrier.segments() {
        for edge in [seg.left, seg.right] {
            if edge > lo && edge < hi {
                cuts.push(edge);
            }
        }
    }
    cuts.push(hi);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut duration = 0.0;
    for pair in cuts.windows(2) {
        let v = barrier.potential_at(0.5 * (pair[0] + pair[1]));
        let kinetic = energy - v;
        if kinetic <= 0.0 {
            return Err(Error::ClassicallyForbidden { energy, barrier_top: v });
        }
        let local_p = (2.0 * m * kinetic).sqrt();
        duration += m * (pair[1] - pair[0]) / local_p;
    }
    Ok(p.signum() * (x - q).signum() * duration)
}

pub fn classical_toa_smooth(barrier: &SmoothBarrier, q: f64, p: f64, x: f64) -> Result<f64> {
    if p == 0.0 {
        return Err(Error::ZeroMomentum);
    }
    if q == x {
        return Ok(0.0);
    }
    let m = barrier.mass;
    let energy = p * p / (2.0 * m) + barrier.potential_at(q);
    let (lo, hi) = if q < x { (q, x) } else { (x, q) };
    // V is unimodal with its maximum at q = 0.
    let path_top = if lo <= 0.0 && 0.0 <= hi {
        barrier.height
    } else {
        barrier.potential_at(lo).max(barrier.potential_at(hi))
    };
    if energy <= path_top {
        return Err(Error::ClassicallyForbidden { energy, barrier_top: path_top });
    }
    let integrand = |u: f64| (m / (2.0 * (energy - barrier.potential_at(u)))).sqrt();
    let duration = adaptive_simpson(&integrand, lo, hi, 1e-12);
    Ok(p.signum() * (x - q).signum() * duration)
}

/// Arrival behind a reflecting smooth barrier: one leg in to the turning
/// point, one leg back out to `x`. Both `q` and `x` must lie on the same
/// side, with the particle initially moving toward the barrier.
pub fn classical_toa_with_bounce(
    barrier: &SmoothBarrier,
    q: f64,
    p: f64,
    x: f64,
) -> Result<f64> {
    if p == 0.0 {
        return Err(Error::ZeroMomentum);
    }
    let m = barrier.mass;
    let energy = p * p / (2.0 * m) + barrier.potential_at(q);
    let turning = barrier.turning_point(energy).ok_or(Error::NotApplicable(
        "no turning point: the trajectory crosses the barrier".into(),
    ))?;
    // Moving right from the left side turns at -q*, moving left from the
    // right side at +q*.
    let q_turn = if p > 0.0 { -turning } else { turning };
    let toward = (q_turn - q) * p > 0.0;
    let same_side = (q_turn - q).signum() * (q_turn - x).signum() >= 0.0;
    if !toward || !same_side || q == q_turn {
        return Err(Error::NotApplicable(
            "bounce arrival needs source and detector on the approach side".into(),
        ));
    }
    // Near the turning point the integrand has an integrable 1/sqrt
    // singularity; substitute u^2 = |q* - q'| on each leg.
    let leg = |from: f64| -> f64 {
        let span = (q_turn - from).abs();
        let dir = (q_turn - from).signum();
        let integrand = |u: f64| {
            let qp = q_turn - dir * u * u;
            let kinetic = (energy - barrier.potential_at(qp)).max(0.0);
            if kinetic == 0.0 {
                // Exact turning point: replace by the limiting slope value.
                let dv = slope_magnitude(barrier, q_turn);
                if dv == 0.0 {
                    return 0.0;
                }
                return 2.0 * (m / (2.0 * dv)).sqrt();
            }
            2.0 * u * (m / (2.0 * kinetic)).sqrt()
        };
        adaptive_simpson(&integrand, 0.0, span.sqrt(), 1e-12)
    };
    Ok(leg(q) + leg(x))
}

fn slope_magnitude(barrier: &SmoothBarrier, q: f64) -> f64 {
    let d = barrier.width;
    let c = (q / d).cosh();
    (2.0 * barrier.height * (q / d).tanh() / (d * c * c)).abs()
}

/// Separatrix branch choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeparatrixSign {
    Plus,
    Minus,
}

/// `+-p_V(q)` with `p_V(q) = sign(q) sqrt(2m (V - V(q)))`. The plus branch
/// partitions incoming right/left movers, the minus branch outgoing ones.
pub fn separatrix(barrier: &SmoothBarrier, q: f64, sign: SeparatrixSign) -> f64 {
    let gap = (barrier.height - barrier.potential_at(q)).max(0.0);
    let p = if q == 0.0 { 0.0 } else { q.signum() * (2.0 * barrier.mass * gap).sqrt() };
    match sign {
        SeparatrixSign::Plus => p,
        SeparatrixSign::Minus => -p,
    }
}

/// One sampled trajectory of `H(q, p) = E`, ordered along the motion and
/// labelled by both phase-space partitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub energy: f64,
    /// Mover label from the asymptotic momentum at t -> -inf.
    pub incoming: Direction,
    pub samples: Vec<(f64, f64)>,
    /// Channel relative to the `p_V` partition (always a `+` channel).
    pub channel_plus: Channel,
    /// Channel relative to the `-p_V` partition (always a `-` channel).
    pub channel_minus: Channel,
}

/// Sampled trajectories plus both separatrix branches.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePortrait {
    pub trajectories: Vec<Trajectory>,
    pub separatrix_plus: Vec<(f64, f64)>,
    pub separatrix_minus: Vec<(f64, f64)>,
}

/// Span of the sampled q axis in units of the barrier width; V there is
/// below 1e-9 of the peak.
const PORTRAIT_SPAN_WIDTHS: f64 = 12.0;

/// Samples `p(q) = +-sqrt(2m (E - V(q)))` for each energy and incidence
/// direction, turning points included when E < V.
pub fn phase_portrait(
    barrier: &SmoothBarrier,
    energies: &[f64],
    samples_per_trajectory: usize,
) -> Result<PhasePortrait> {
    if energies.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(Error::InvalidInput("trajectory energies must be positive".into()));
    }
    let n = samples_per_trajectory.max(8);
    let span = PORTRAIT_SPAN_WIDTHS * barrier.width;
    let m = barrier.mass;
    let momentum = |e: f64, q: f64| (2.0 * m * (e - barrier.potential_at(q))).max(0.0).sqrt();

    let mut trajectories = Vec::new();
    for &e in energies {
        match barrier.turning_point(e) {
            None => {
                // Transmitted pair: a right mover and a left mover.
                for incoming in [Direction::Right, Direction::Left] {
                    let sgn = incoming.sign();
                    let mut samples = Vec::with_capacity(n);
                    for i in 0..n {
                        let frac = i as f64 / (n - 1) as f64;
                        let q = sgn * (-span + 2.0 * span * frac);
                        samples.push((q, sgn * momentum(e, q)));
                    }
                    trajectories.push(Trajectory {
                        energy: e,
                        incoming,
                        samples,
                        channel_plus: Channel { direction: incoming, selection: crate::scattering::Selection::Plus },
                        channel_minus: Channel { direction: incoming, selection: crate::scattering::Selection::Minus },
                    });
                }
            }
            Some(turning) => {
                // Reflected pair, each with a turning point included.
                for incoming in [Direction::Right, Direction::Left] {
                    let sgn = incoming.sign();
                    let start = -sgn * span;
                    let turn = -sgn * turning;
                    let half = n / 2;
                    let mut samples = Vec::with_capacity(2 * half + 1);
                    for i in 0..half {
                        let q = start + (turn - start) * i as f64 / half as f64;
                        samples.push((q, sgn * momentum(e, q)));
                    }
                    samples.push((turn, 0.0));
                    for i in (0..half).rev() {
                        let q = start + (turn - start) * i as f64 / half as f64;
                        samples.push((q, -sgn * momentum(e, q)));
                    }
                    let outgoing = match incoming {
                        Direction::Right => Direction::Left,
                        Direction::Left => Direction::Right,
                    };
                    trajectories.push(Trajectory {
                        energy: e,
                        incoming,
                        samples,
                        channel_plus: Channel { direction: incoming, selection: crate::scattering::Selection::Plus },
                        channel_minus: Channel { direction: outgoing, selection: crate::scattering::Selection::Minus },
                    });
                }
            }
        }
    }

    let sep_n = 2 * n + 1;
    let mut separatrix_plus = Vec::with_capacity(sep_n);
    let mut separatrix_minus = Vec::with_capacity(sep_n);
    for i in 0..sep_n {
        let q = -span + 2.0 * span * i as f64 / (sep_n - 1) as f64;
        separatrix_plus.push((q, separatrix(barrier, q, SeparatrixSign::Plus)));
        separatrix_minus.push((q, separatrix(barrier, q, SeparatrixSign::Minus)));
    }
    Ok(PhasePortrait { trajectories, separatrix_plus, separatrix_minus })
}

/// Recursive adaptive Simpson quadrature.
fn adaptive_simpson<F>(f: &F, a: f64, b: f64, eps: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
        let c = 0.5 * (a + b);
        (b - a) / 6.0 * (f(a) + 4.0 * f(c) + f(b))
    }
    fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, eps: f64, whole: f64, depth: u32) -> f64 {
        let c = 0.5 * (a + b);
        let left = simpson(f, a, c);
        let right = simpson(f, c, b);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * eps {
            left + right + (left + right - whole) / 15.0
        } else {
            recurse(f, a, c, eps / 2.0, left, depth - 1)
                + recurse(f, c, b, eps / 2.0, right, depth - 1)
        }
    }
    recurse(f, a, b, eps, simpson(f, a, b), 48)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scattering::Selection;

    #[test]
    fn free_formula() {
        assert_eq!(free_classical_toa(-50.0, 2.0, 50.0, 1.0).unwrap(), 50.0);
        assert_eq!(free_classical_toa(3.0, 5.0, 3.0, 1.0).unwrap(), 0.0);
        assert_eq!(free_classical_toa(-50.0, 2.0, -60.0, 1.0).unwrap(), -5.0);
        assert!(matches!(free_classical_toa(0.0, 0.0, 1.0, 1.0), Err(Error::ZeroMomentum)));
    }

    #[test]
    fn piecewise_closed_form() {
        let b = PiecewiseBarrier::square(0.5, 10.0, 1.0).unwrap();
        let t = classical_toa_piecewise(&b, -50.0, 2.0, 50.0).unwrap();
        let expect = 25.0 + 10.0 / 3.0_f64.sqrt() + 20.0;
        assert!((t - expect).abs() < 1e-12, "t = {t}, expect {expect}");
    }

    #[test]
    fn free_limit_matches_free_formula_exactly() {
        let b = PiecewiseBarrier::free(1.0);
        for &(q, p, x) in &[(-50.0, 2.0, 50.0), (3.0, -1.5, -20.0), (-50.0, 2.0, -60.0)] {
            let via_eq = classical_toa_piecewise(&b, q, p, x).unwrap();
            let direct = free_classical_toa(q, p, x, 1.0).unwrap();
            assert!((via_eq - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn forbidden_path_is_an_error() {
        let b = PiecewiseBarrier::square(4.5, 10.0, 1.0).unwrap();
        match classical_toa_piecewise(&b, -50.0, 2.0, 50.0) {
            Err(Error::ClassicallyForbidden { energy, barrier_top }) => {
                assert!((energy - 2.0).abs() < 1e-12);
                assert!((barrier_top - 4.5).abs() < 1e-12);
            }
            other => panic!("expected forbidden, got {other:?}"),
        }
    }

    #[test]
    fn energy_at_barrier_top_is_forbidden() {
        let b = PiecewiseBarrier::square(2.0, 10.0, 1.0).unwrap();
        assert!(classical_toa_piecewise(&b, -50.0, 2.0, 50.0).is_err());
    }

    #[test]
    fn smooth_toa_additivity() {
        let b = SmoothBarrier::new(0.5, 2.0, 1.0).unwrap();
        let (q, p, x, w) = (-30.0, 2.0, 25.0, -3.0);
        // The momentum at the waypoint is fixed by energy conservation.
        let e = p * p / 2.0 + b.potential_at(q);
        let p_w = (2.0 * (e - b.potential_at(w))).sqrt();
        let whole = classical_toa_smooth(&b, q, p, x).unwrap();
        let first = classical_toa_smooth(&b, q, p, w).unwrap();
        let second = classical_toa_smooth(&b, w, p_w, x).unwrap();
        assert!((whole - (first + second)).abs() < 1e-9, "{} vs {}", whole, first + second);
    }

    #[test]
    fn piecewise_toa_additivity() {
        let b = PiecewiseBarrier::square(0.5, 10.0, 1.0).unwrap();
        let (q, p, x, w) = (-50.0, 2.0, 50.0, 4.0);
        let e = p * p / 2.0 + b.potential_at(q);
        let p_w = (2.0 * (e - b.potential_at(w))).sqrt();
        let whole = classical_toa_piecewise(&b, q, p, x).unwrap();
        let sum = classical_toa_piecewise(&b, q, p, w).unwrap()
            + classical_toa_piecewise(&b, w, p_w, x).unwrap();
        assert!((whole - sum).abs() < 1e-9);
    }

    #[test]
    fn smooth_toa_reduces_to_free_far_from_the_barrier() {
        let b = SmoothBarrier::new(1.0, 1.0, 1.0).unwrap();
        // Both endpoints deep in the asymptotic region on one side.
        let t = classical_toa_smooth(&b, -80.0, 2.0, -40.0).unwrap();
        assert!((t - 20.0).abs() < 1e-6);
    }

    #[test]
    fn bounce_arrival_matches_a_split_leg_oracle() {
        let b = SmoothBarrier::new(2.0, 1.5, 1.0).unwrap();
        let (q, p) = (-20.0, 1.0);
        let t = classical_toa_with_bounce(&b, q, p, q).unwrap();
        // Independent route: integrate the equation of time up to just
        // before the turning point, then add the analytic square-root tail
        // of the remaining sliver.
        let e = p * p / 2.0 + b.potential_at(q);
        let turn = -b.turning_point(e).unwrap();
        let eps = 1e-8;
        let smooth_leg = classical_toa_smooth(&b, q, p, turn - eps).unwrap();
        let tail = (2.0 * b.mass * eps / slope_magnitude(&b, turn)).sqrt();
        let oracle = 2.0 * (smooth_leg + tail);
        assert!(t > 0.0);
        assert!((t - oracle).abs() < 1e-6, "bounce {t} vs split-leg oracle {oracle}");
        // The slowdown near the turning point makes the bounce slower than
        // free flight over the same round trip.
        assert!(t > 2.0 * (turn - q).abs() * b.mass / p.abs());
    }

    #[test]
    fn bounce_requires_a_reflecting_setup() {
        let b = SmoothBarrier::new(2.0, 1.5, 1.0).unwrap();
        // E > V crosses instead of bouncing.
        assert!(classical_toa_with_bounce(&b, -20.0, 3.0, -20.0).is_err());
        // Detector on the far side cannot be reached by the bounce.
        assert!(classical_toa_with_bounce(&b, -20.0, 1.0, 20.0).is_err());
    }

    #[test]
    fn separatrix_values() {
        let b = SmoothBarrier::new(1.0, 1.0, 1.0).unwrap();
        assert_eq!(separatrix(&b, 0.0, SeparatrixSign::Plus), 0.0);
        let asymptote = (2.0 * b.mass * b.height).sqrt();
        assert!((separatrix(&b, 40.0, SeparatrixSign::Plus) - asymptote).abs() < 1e-9);
        // At q = -d acosh(sqrt 2) the potential is V/2.
        let q = -b.width * 2.0_f64.sqrt().acosh();
        let expect = -(b.mass * b.height).sqrt();
        assert!((separatrix(&b, q, SeparatrixSign::Plus) - expect).abs() < 1e-12);
        assert!((separatrix(&b, q, SeparatrixSign::Minus) + expect).abs() < 1e-12);
    }

    #[test]
    fn portrait_energy_conservation_and_labels() {
        let b = SmoothBarrier::new(1.0, 1.0, 1.0).unwrap();
        let portrait = phase_portrait(&b, &[0.5, 1.5], 101).unwrap();
        assert_eq!(portrait.trajectories.len(), 4);
        for tr in &portrait.trajectories {
            for &(q, p) in &tr.samples {
                let h = p * p / 2.0 + b.potential_at(q);
                assert!((h - tr.energy).abs() < 1e-9, "energy drift at ({q}, {p})");
            }
        }
        // E < V incoming right mover turns left of the origin and reverses.
        let turning = portrait
            .trajectories
            .iter()
            .find(|t| t.energy == 0.5 && t.incoming == Direction::Right)
            .unwrap();
        let (q_turn, p_turn) = turning.samples[turning.samples.len() / 2];
        assert!(q_turn < 0.0);
        assert_eq!(p_turn, 0.0);
        assert!(turning.samples.first().unwrap().1 > 0.0);
        assert!(turning.samples.last().unwrap().1 < 0.0);
        assert_eq!(turning.channel_plus.direction, Direction::Right);
        assert_eq!(turning.channel_minus.direction, Direction::Left);
    }

    #[test]
    fn portrait_classification_matches_the_separatrices() {
        let b = SmoothBarrier::new(1.0, 1.0, 1.0).unwrap();
        let portrait = phase_portrait(&b, &[0.25, 0.8, 1.1, 2.0], 64).unwrap();
        for tr in &portrait.trajectories {
            for &(q, p) in &tr.samples {
                if p == 0.0 {
                    continue; // turning point sits on neither side strictly
                }
                let above_plus = p > separatrix(&b, q, SeparatrixSign::Plus);
                let expect_plus = tr.channel_plus.direction == Direction::Right;
                assert_eq!(above_plus, expect_plus, "plus partition at ({q}, {p})");
                let above_minus = p > separatrix(&b, q, SeparatrixSign::Minus);
                let expect_minus = tr.channel_minus.direction == Direction::Right;
                assert_eq!(above_minus, expect_minus, "minus partition at ({q}, {p})");
            }
            assert_eq!(tr.channel_plus.selection, Selection::Plus);
            assert_eq!(tr.channel_minus.selection, Selection::Minus);
        }
    }
}
