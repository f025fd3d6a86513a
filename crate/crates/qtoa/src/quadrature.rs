//! Deterministic composite quadrature for the momentum/energy integrals and
//! time-axis probability sums.
//!
//! Everything here is fixed-grid: resolution is enforced up front by
//! [`oscillation_resolution_check`] rather than by adaptive refinement, so
//! identical inputs always reproduce identical figures.

use num_complex::Complex64;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::wavepacket::GaussianPacket;

/// Simpson nodes and weights on `[p_min, p_max]`, `p_min >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    p_min: f64,
    p_max: f64,
}

impl MomentumGrid {
    /// Composite Simpson rule with `nodes` points (rounded up to odd).
    pub fn simpson(p_min: f64, p_max: f64, nodes: usize) -> Result<Self> {
        if !(p_min.is_finite() && p_max.is_finite()) {
            return Err(Error::InvalidInput("grid bounds must be finite".into()));
        }
        if p_min < 0.0 {
            return Err(Error::InvalidInput(format!(
                "momentum grid must stay on the positive spectrum, got p_min = {p_min}"
            )));
        }
        if p_max <= p_min {
            return Err(Error::InvalidInput(format!(
                "empty momentum window [{p_min}, {p_max}]"
            )));
        }
        if nodes < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 nodes, got {nodes}")));
        }
        let n = if nodes % 2 == 0 { nodes + 1 } else { nodes };
        let h = (p_max - p_min) / (n - 1) as f64;
        let mut points = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for i in 0..n {
            let x = if i == n - 1 { p_max } else { p_min + h * i as f64 };
            points.push(x);
            let w = if i == 0 || i == n - 1 {
                h / 3.0
            } else if i % 2 == 1 {
                4.0 * h / 3.0
            } else {
                2.0 * h / 3.0
            };
            weights.push(w);
        }
        Ok(MomentumGrid { nodes: points, weights, p_min, p_max })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.p_min, self.p_max)
    }

    pub fn spacing(&self) -> f64 {
        (self.p_max - self.p_min) / (self.len() - 1) as f64
    }
}

/// Momentum window of `width_sigmas / delta` around the packet mean,
/// clipped at the spectrum floor p = 0. Also reports the packet mass left
/// outside the window.
pub fn build_momentum_grid(
    packet: &GaussianPacket,
    width_sigmas: f64,
    nodes: usize,
) -> Result<(MomentumGrid, f64)> {
    if !(width_sigmas.is_finite() && width_sigmas > 0.0) {
        return Err(Error::InvalidInput(format!(
            "window width must be positive, got {width_sigmas} sigmas"
        )));
    }
    let half_width = width_sigmas / packet.delta;
    let hi = packet.p0 + half_width;
    if hi <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "momentum window [{}, {hi}] lies entirely below the spectrum floor",
            packet.p0 - half_width
        )));
    }
    let lo = (packet.p0 - half_width).max(0.0);
    let grid = MomentumGrid::simpson(lo, hi, nodes)?;
    // |psi~|^2 mass outside [lo, hi]; each tail is half an erfc.
    let d = packet.delta * std::f64::consts::SQRT_2;
    let truncated = 0.5 * erfc(d * (packet.p0 - lo)) + 0.5 * erfc(d * (hi - packet.p0));
    Ok((grid, truncated))
}

/// Weighted sum of a complex integrand over the grid.
pub fn integrate_complex<F>(f: F, grid: &MomentumGrid) -> Result<Complex64>
where
    F: Fn(f64) -> Complex64,
{
    let mut acc = Complex64::new(0.0, 0.0);
    for (&p, &w) in grid.nodes().iter().zip(grid.weights()) {
        let v = f(p);
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::NonFiniteIntegrand { node: p });
        }
        acc += w * v;
    }
    Ok(acc)
}

/// Outcome of the a-priori phase-resolution check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolution {
    Ok,
    Insufficient { required_nodes: usize },
}

impl Resolution {
    pub fn is_ok(&self) -> bool {
        matches!(self, Resolution::Ok)
    }
}

/// Verifies the grid resolves the integrand phase `p x - p^2 t / 2m`:
/// node spacing must satisfy `dp * max|dphi/dp| <= pi/4` with
/// `max|dphi/dp| = |x_span| + p_max t_max / m`.
pub fn oscillation_resolution_check(
    grid: &MomentumGrid,
    t_max: f64,
    x_span: f64,
    mass: f64,
) -> Resolution {
    let (_, p_max) = grid.bounds();
    let slope = x_span.abs() + p_max * t_max.abs() / mass;
    let budget = std::f64::consts::FRAC_PI_4;
    if grid.spacing() * slope <= budget {
        return Resolution::Ok;
    }
    let span = grid.bounds().1 - grid.bounds().0;
    let panels = (span * slope / budget).ceil() as usize;
    let mut required = panels + 1;
    if required % 2 == 0 {
        required += 1;
    }
    Resolution::Insufficient { required_nodes: required }
}

/// Trapezoid integral of a non-negative density over strictly increasing times.
pub fn integrate_density(values: &[f64], times: &[f64]) -> Result<f64> {
    if values.len() != times.len() {
        return Err(Error::InvalidInput(format!(
            "length mismatch: {} densities vs {} times",
            values.len(),
            times.len()
        )));
    }
    if values.len() < 2 {
        return Err(Error::InvalidInput("need at least two samples".into()));
    }
    for pair in times.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::InvalidInput("times must be strictly increasing".into()));
        }
    }
    if let Some(&bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidInput(format!("density values must be finite and >= 0, got {bad}")));
    }
    Ok(trapezoid(values, times))
}

/// Plain trapezoid sum, no sign constraint (used for first moments).
pub(crate) fn trapezoid(values: &[f64], times: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 1..values.len() {
        acc += 0.5 * (values[i] + values[i - 1]) * (times[i] - times[i - 1]);
    }
    acc
}
