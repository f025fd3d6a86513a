//! Stationary scattering states for non-negative piecewise-constant barriers.
//!
//! A barrier is assembled from constant-height segments on a finite support.
//! Plane-wave coefficients on one side of the support are related to the
//! other side by a 2x2 transfer matrix, from which the transmission and
//! reflection amplitudes and the four families of energy eigenstates
//! (incoming/outgoing right/left movers) follow.

use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// One constant-height slab `[left, right)` of the potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub left: f64,
    pub right: f64,
    pub height: f64,
}

impl Segment {
    pub fn new(left: f64, right: f64, height: f64) -> Self {
        Segment { left, right, height }
    }

    pub fn width(&self) -> f64 {
        self.right - self.left
    }
}

/// A non-negative piecewise-constant potential with finite support.
///
/// Segments are normalized on construction: sorted, gap-filled with
/// zero-height slabs, zero-width slabs dropped and vacuum padding at the
/// ends trimmed. Outside the support the potential vanishes.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseBarrier {
    segments: Vec<Segment>,
    mass: f64,
}

impl PiecewiseBarrier {
    pub fn new(segments: Vec<Segment>, mass: f64) -> Result<Self> {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::InvalidInput(format!("mass must be positive, got {mass}")));
        }
        let mut segs: Vec<Segment> = Vec::new();
        for s in segments {
            if !(s.left.is_finite() && s.right.is_finite() && s.height.is_finite()) {
                return Err(Error::InvalidInput("segment edges and height must be finite".into()));
            }
            if s.height < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "segment height must be non-negative, got {}",
                    s.height
                )));
            }
            if s.right < s.left {
                return Err(Error::InvalidInput(format!(
                    "segment right edge {} lies left of left edge {}",
                    s.right, s.left
                )));
            }
            if s.width() > 0.0 {
                segs.push(s);
            }
        }
        segs.sort_by(|a, b| a.left.total_cmp(&b.left));
        for pair in segs.windows(2) {
            if pair[1].left < pair[0].right {
                return Err(Error::InvalidInput(format!(
                    "segments overlap: [{}, {}) and [{}, {})",
                    pair[0].left, pair[0].right, pair[1].left, pair[1].right
                )));
            }
        }
        // Fill interior gaps with vacuum so propagation is contiguous.
        let mut filled: Vec<Segment> = Vec::with_capacity(segs.len());
        for s in segs {
            if let Some(prev) = filled.last() {
                if s.left > prev.right {
                    filled.push(Segment::new(prev.right, s.left, 0.0));
                }
            }
            filled.push(s);
        }
        // Vacuum padding at the ends carries no potential; trim it.
        while filled.first().is_some_and(|s| s.height == 0.0) {
            filled.remove(0);
        }
        while filled.last().is_some_and(|s| s.height == 0.0) {
            filled.pop();
        }
        Ok(PiecewiseBarrier { segments: filled, mass })
    }

    /// Barrier-free vacuum.
    pub fn free(mass: f64) -> Self {
        PiecewiseBarrier::new(Vec::new(), mass).expect("vacuum barrier is always valid")
    }

    /// Single square barrier of height `v` on `(0, width)`.
    pub fn square(v: f64, width: f64, mass: f64) -> Result<Self> {
        Self::square_at(0.0, v, width, mass)
    }

    /// Single square barrier of height `v` on `(offset, offset + width)`.
    pub fn square_at(offset: f64, v: f64, width: f64, mass: f64) -> Result<Self> {
        if !(width.is_finite() && width >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "barrier width must be non-negative, got {width}"
            )));
        }
        PiecewiseBarrier::new(vec![Segment::new(offset, offset + width, v)], mass)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn is_free(&self) -> bool {
        self.segments.is_empty()
    }

    /// Support interval `[left, right]`; `(0, 0)` for the vacuum.
    pub fn support(&self) -> (f64, f64) {
        match (self.segments.first(), self.segments.last()) {
            (Some(a), Some(b)) => (a.left, b.right),
            _ => (0.0, 0.0),
        }
    }

    pub fn max_height(&self) -> f64 {
        self.segments.iter().map(|s| s.height).fold(0.0, f64::max)
    }

    /// V(q), with segments half-open on the right.
    pub fn potential_at(&self, q: f64) -> f64 {
        for s in &self.segments {
            if q >= s.left && q < s.right {
                return s.height;
            }
        }
        0.0
    }

    /// Width and height when the barrier is one square slab.
    pub fn as_single_square(&self) -> Option<(f64, f64)> {
        match self.segments.as_slice() {
            [s] => Some((s.width(), s.height)),
            _ => None,
        }
    }
}

/// Mover label `s`: right movers carry `p > 0`, left movers `p < 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Right,
    Left,
}

impl Direction {
    /// Sign of the detector-position phase: +1 for right movers, -1 for left movers.
    pub fn sign(self) -> f64 {
        match self {
            Direction::Right => 1.0,
            Direction::Left => -1.0,
        }
    }
}

/// Eigenstate family: `Plus` states encode preparation (incoming as
/// t -> -inf), `Minus` states encode post-selection at a detector
/// (outgoing as t -> +inf).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Selection {
    Plus,
    Minus,
}

/// One of the four scattering channels r+, l+, r-, l-.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Channel {
    pub direction: Direction,
    pub selection: Selection,
}

impl Channel {
    pub const R_PLUS: Channel = Channel { direction: Direction::Right, selection: Selection::Plus };
    pub const L_PLUS: Channel = Channel { direction: Direction::Left, selection: Selection::Plus };
    pub const R_MINUS: Channel =
        Channel { direction: Direction::Right, selection: Selection::Minus };
    pub const L_MINUS: Channel =
        Channel { direction: Direction::Left, selection: Selection::Minus };

    pub const ALL: [Channel; 4] =
        [Channel::R_PLUS, Channel::L_PLUS, Channel::R_MINUS, Channel::L_MINUS];

    pub fn parse(s: &str) -> Result<Channel> {
        match s.trim() {
            "r+" => Ok(Channel::R_PLUS),
            "l+" => Ok(Channel::L_PLUS),
            "r-" => Ok(Channel::R_MINUS),
            "l-" => Ok(Channel::L_MINUS),
            other => Err(Error::InvalidInput(format!(
                "unknown channel {other:?}, expected one of r+, l+, r-, l-"
            ))),
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = match self.direction {
            Direction::Right => 'r',
            Direction::Left => 'l',
        };
        let s = match self.selection {
            Selection::Plus => '+',
            Selection::Minus => '-',
        };
        write!(f, "{d}{s}")
    }
}

/// Complex transmission and reflection amplitudes at momentum `p` for a
/// unit-flux wave incident from the left. `|T|^2 + |R|^2 = 1` for the
/// real potentials handled here.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatteringCoefficients {
    pub p: f64,
    pub transmission: Complex64,
    pub reflection: Complex64,
}

/// 2x2 complex matrix taking plane-wave coefficients `(A, B)` of
/// `A e^{ipq} + B e^{-ipq}` on the left of the support to those on the
/// right. Unimodular for real potentials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferMatrix {
    pub m11: Complex64,
    pub m12: Complex64,
    pub m21: Complex64,
    pub m22: Complex64,
}

impl TransferMatrix {
    pub fn identity() -> Self {
        TransferMatrix {
            m11: Complex64::new(1.0, 0.0),
            m12: Complex64::new(0.0, 0.0),
            m21: Complex64::new(0.0, 0.0),
            m22: Complex64::new(1.0, 0.0),
        }
    }

    pub fn det(&self) -> Complex64 {
        self.m11 * self.m22 - self.m12 * self.m21
    }

    /// `self * other`: apply `other` first.
    pub fn compose(&self, other: &TransferMatrix) -> TransferMatrix {
        TransferMatrix {
            m11: self.m11 * other.m11 + self.m12 * other.m21,
            m12: self.m11 * other.m12 + self.m12 * other.m22,
            m21: self.m21 * other.m11 + self.m22 * other.m21,
            m22: self.m21 * other.m12 + self.m22 * other.m22,
        }
    }
}

/// Propagator of `(psi, psi')` across a slab of length `len` with local
/// `k^2 = 2m(E - V)`. Entire in `k^2`: oscillatory above the slab,
/// hyperbolic below it, linear exactly at E = V.
fn slab_step(k2: f64, len: f64) -> [[f64; 2]; 2] {
    let w = k2 * len * len;
    if w.abs() < 1e-6 {
        // cos(kL) and sin(kL)/k by their series in w = (kL)^2, valid on
        // both sides of E = V and exact in the linear limit.
        let c = 1.0 - w / 2.0 + w * w / 24.0 - w * w * w / 720.0;
        let s_over_k = len * (1.0 - w / 6.0 + w * w / 120.0 - w * w * w / 5040.0);
        let minus_k_s = -k2 * len * (1.0 - w / 6.0 + w * w / 120.0);
        [[c, s_over_k], [minus_k_s, c]]
    } else if k2 > 0.0 {
        let k = k2.sqrt();
        let (s, c) = (k * len).sin_cos();
        [[c, s / k], [-k * s, c]]
    } else {
        let kappa = (-k2).sqrt();
        let arg = kappa * len;
        let c = arg.cosh();
        let s = arg.sinh();
        [[c, s / kappa], [kappa * s, c]]
    }
}

fn check_momentum(p: f64) -> Result<()> {
    if !p.is_finite() {
        return Err(Error::InvalidInput(format!("momentum must be finite, got {p}")));
    }
    if p <= 0.0 {
        return Err(Error::InvalidInput(format!("momentum must be positive, got {p}")));
    }
    Ok(())
}

/// (psi, psi') propagator across the whole support, a real matrix with
/// unit determinant.
fn support_step(barrier: &PiecewiseBarrier, energy: f64) -> [[f64; 2]; 2] {
    let m = barrier.mass();
    let mut s = [[1.0, 0.0], [0.0, 1.0]];
    for seg in barrier.segments() {
        let k2 = 2.0 * m * (energy - seg.height);
        let step = slab_step(k2, seg.width());
        s = [
            [
                step[0][0] * s[0][0] + step[0][1] * s[1][0],
                step[0][0] * s[0][1] + step[0][1] * s[1][1],
            ],
            [
                step[1][0] * s[0][0] + step[1][1] * s[1][0],
                step[1][0] * s[0][1] + step[1][1] * s[1][1],
            ],
        ];
    }
    s
}

/// Transfer matrix of the barrier at momentum `p` (left-side plane-wave
/// coefficients to right-side ones).
pub fn transfer_matrix(barrier: &PiecewiseBarrier, p: f64) -> Result<TransferMatrix> {
    check_momentum(p)?;
    if barrier.is_free() {
        return Ok(TransferMatrix::identity());
    }
    let energy = p * p / (2.0 * barrier.mass());
    let s = support_step(barrier, energy);
    let (x_l, x_r) = barrier.support();

    let trace = s[0][0] + s[1][1];
    let skew = p * s[0][1] - s[1][0] / p;
    let diff = s[0][0] - s[1][1];
    let anti = p * s[0][1] + s[1][0] / p;

    let half = Complex64::new(0.5, 0.0);
    let m22 = half * (I * p * (x_r - x_l)).exp() * Complex64::new(trace, -skew);
    let m11 = m22.conj();
    let m12 = half * (-I * p * (x_r + x_l)).exp() * Complex64::new(diff, -anti);
    let m21 = m12.conj();
    Ok(TransferMatrix { m11, m12, m21, m22 })
}

/// T, R for left incidence plus the right-incidence reflection needed by
/// the left-mover eigenstates.
pub(crate) fn coefficients_full(
    barrier: &PiecewiseBarrier,
    p: f64,
) -> Result<(Complex64, Complex64, Complex64)> {
    let m = transfer_matrix(barrier, p)?;
    let t = Complex64::new(1.0, 0.0) / m.m22;
    let r_left = -m.m21 / m.m22;
    let r_right = m.m12 / m.m22;
    Ok((t, r_left, r_right))
}

/// Transmission and reflection amplitudes for a wave incident from the left.
pub fn scattering_coefficients(barrier: &PiecewiseBarrier, p: f64) -> Result<ScatteringCoefficients> {
    let (t, r_left, _) = coefficients_full(barrier, p)?;
    Ok(ScatteringCoefficients { p, transmission: t, reflection: r_left })
}

/// Flux-normalization prefactor sqrt(m / 2 pi p) giving one incoming
/// particle per unit time in the steady flow.
pub fn flux_normalization(mass: f64, p: f64) -> f64 {
    (mass / (2.0 * std::f64::consts::PI * p)).sqrt()
}

fn state_error(e: f64) -> Error {
    Error::InvalidInput(format!("energy must be positive, got {e}"))
}

/// psi and psi' of the channel eigenstate at `q`. `from_right` picks the
/// representation used when `q` sits exactly on a support edge.
fn eigenstate_state(
    barrier: &PiecewiseBarrier,
    energy: f64,
    channel: Channel,
    q: f64,
    from_right: bool,
) -> Result<(Complex64, Complex64)> {
    if !(energy.is_finite() && energy > 0.0) {
        return Err(state_error(energy));
    }
    // Outgoing states are the complex conjugates of the incoming family
    // with the opposite mover label (T, R conjugated).
    if channel.selection == Selection::Minus {
        let twin = Channel {
            direction: match channel.direction {
                Direction::Right => Direction::Left,
                Direction::Left => Direction::Right,
            },
            selection: Selection::Plus,
        };
        let (psi, dpsi) = eigenstate_state(barrier, energy, twin, q, from_right)?;
        return Ok((psi.conj(), dpsi.conj()));
    }

    let mass = barrier.mass();
    let p = (2.0 * mass * energy).sqrt();
    let (t, r_left, r_right) = coefficients_full(barrier, p)?;
    let (x_l, x_r) = barrier.support();
    let ip = I * p;

    let left_form = |q: f64| -> (Complex64, Complex64) {
        match channel.direction {
            Direction::Right => {
                let fwd = (ip * q).exp();
                let bwd = (-ip * q).exp();
                (fwd + r_left * bwd, ip * (fwd - r_left * bwd))
            }
            Direction::Left => {
                let bwd = (-ip * q).exp();
                (t * bwd, -ip * t * bwd)
            }
        }
    };
    let right_form = |q: f64| -> (Complex64, Complex64) {
        match channel.direction {
            Direction::Right => {
                let fwd = (ip * q).exp();
                (t * fwd, ip * t * fwd)
            }
            Direction::Left => {
                let fwd = (ip * q).exp();
                let bwd = (-ip * q).exp();
                (bwd + r_right * fwd, ip * (r_right * fwd - bwd))
            }
        }
    };

    if q < x_l || (q == x_l && !from_right) {
        return Ok(left_form(q));
    }
    if q > x_r || (q == x_r && from_right) {
        return Ok(right_form(q));
    }
    // Interior: carry (psi, psi') from the left support edge.
    let (mut psi, mut dpsi) = left_form(x_l);
    for seg in barrier.segments() {
        if seg.right <= q {
            let s = slab_step(2.0 * mass * (energy - seg.height), seg.width());
            let new_psi = psi * s[0][0] + dpsi * s[0][1];
            let new_dpsi = psi * s[1][0] + dpsi * s[1][1];
            psi = new_psi;
            dpsi = new_dpsi;
        } else if seg.left <= q {
            let s = slab_step(2.0 * mass * (energy - seg.height), q - seg.left);
            let new_psi = psi * s[0][0] + dpsi * s[0][1];
            let new_dpsi = psi * s[1][0] + dpsi * s[1][1];
            psi = new_psi;
            dpsi = new_dpsi;
            break;
        } else {
            break;
        }
    }
    Ok((psi, dpsi))
}

/// Configuration-space amplitude `<q|E s (+/-)>` of the channel eigenstate,
/// flux-normalized by sqrt(m / 2 pi p).
pub fn eigenstate(
    barrier: &PiecewiseBarrier,
    energy: f64,
    channel: Channel,
    q: f64,
) -> Result<Complex64> {
    let (psi, _) = eigenstate_state(barrier, energy, channel, q, false)?;
    let p = (2.0 * barrier.mass() * energy).sqrt();
    Ok(flux_normalization(barrier.mass(), p) * psi)
}

/// Max over support edges of |dpsi| + |dpsi'| evaluated from both sides.
/// Validates that the matching solve produced a genuine solution.
pub fn wavefunction_continuity_check(
    barrier: &PiecewiseBarrier,
    energy: f64,
    channel: Channel,
) -> Result<f64> {
    if !(energy.is_finite() && energy > 0.0) {
        return Err(state_error(energy));
    }
    let p = (2.0 * barrier.mass() * energy).sqrt();
    let norm = flux_normalization(barrier.mass(), p);
    let mut edges: Vec<f64> = Vec::new();
    for seg in barrier.segments() {
        edges.push(seg.left);
        edges.push(seg.right);
    }
    edges.dedup();
    let mut worst: f64 = 0.0;
    for &q in &edges {
        let (psi_l, dpsi_l) = eigenstate_state(barrier, energy, channel, q, false)?;
        let (psi_r, dpsi_r) = eigenstate_state(barrier, energy, channel, q, true)?;
        let mismatch = (psi_l - psi_r).norm() + (dpsi_l - dpsi_r).norm();
        worst = worst.max(norm * mismatch);
    }
    Ok(worst)
}
