//! TOML experiment descriptions for the command-line front end.
//!
//! All defaults are materialized at parse time so the configuration echoed
//! into the output files is the complete one actually used.

use serde::{Deserialize, Serialize};

use crate::classical::SmoothBarrier;
use crate::error::{Error, Result};
use crate::quadrature::{build_momentum_grid, MomentumGrid};
use crate::scattering::{Channel, PiecewiseBarrier};
use crate::toa::{TimeGrid, ToaParams};
use crate::wavepacket::GaussianPacket;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub packet: PacketConfig,
    #[serde(default)]
    pub barrier: BarrierConfig,
    #[serde(default)]
    pub detector: DetectorConfig,
    #[serde(default)]
    pub grids: GridConfig,
    #[serde(default)]
    pub flags: FlagsConfig,
    /// Incoming channel, `r+` (detector left of the barrier) or `l+`.
    #[serde(default = "default_channel")]
    pub channel: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub portrait: Option<PortraitConfig>,
}

fn default_channel() -> String {
    "r+".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketConfig {
    pub q0: f64,
    pub p0: f64,
    pub delta: f64,
    #[serde(default = "one")]
    pub mass: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierConfig {
    /// `square` (piecewise engine) or `sech2` (portraits and classical runs).
    #[serde(default = "default_barrier_kind")]
    pub kind: String,
    #[serde(default)]
    pub height: f64,
    #[serde(default)]
    pub width: f64,
    #[serde(default)]
    pub offset: f64,
}

fn default_barrier_kind() -> String {
    "square".into()
}

impl Default for BarrierConfig {
    fn default() -> Self {
        BarrierConfig { kind: default_barrier_kind(), height: 0.0, width: 0.0, offset: 0.0 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    /// Detector right of the barrier (transmission, l+ interception).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    /// Detector left of the barrier (reflection, r+ interception).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_time_points")]
    pub time_points: usize,
    #[serde(default = "default_momentum_nodes")]
    pub momentum_nodes: usize,
    #[serde(default = "default_width_sigmas")]
    pub width_sigmas: f64,
    /// Time window; when absent it is derived from the free transit time
    /// and written back into the echoed configuration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
}

fn default_time_points() -> usize {
    4001
}

fn default_momentum_nodes() -> usize {
    2049
}

fn default_width_sigmas() -> f64 {
    8.0
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            time_points: default_time_points(),
            momentum_nodes: default_momentum_nodes(),
            width_sigmas: default_width_sigmas(),
            t_min: None,
            t_max: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlagsConfig {
    /// Keep the interfering second amplitude term (reflection/incoming).
    #[serde(default)]
    pub two_term_amplitudes: bool,
    #[serde(default = "yes")]
    pub emit_phase_time: bool,
    #[serde(default)]
    pub emit_approx_profile: bool,
}

fn yes() -> bool {
    true
}

impl Default for FlagsConfig {
    fn default() -> Self {
        FlagsConfig { two_term_amplitudes: false, emit_phase_time: true, emit_approx_profile: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_heights")]
    pub heights: Vec<f64>,
    /// Explicit width list; otherwise width_min..width_max in width_count steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub widths: Option<Vec<f64>>,
    #[serde(default)]
    pub width_min: f64,
    #[serde(default = "default_width_max")]
    pub width_max: f64,
    #[serde(default = "default_width_count")]
    pub width_count: usize,
}

fn default_heights() -> Vec<f64> {
    vec![0.5, 1.125, 3.125, 4.5]
}

fn default_width_max() -> f64 {
    10.0
}

fn default_width_count() -> usize {
    21
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            heights: default_heights(),
            widths: None,
            width_min: 0.0,
            width_max: default_width_max(),
            width_count: default_width_count(),
        }
    }
}

impl SweepConfig {
    pub fn resolved_widths(&self) -> Result<Vec<f64>> {
        if let Some(widths) = &self.widths {
            if widths.iter().any(|w| !w.is_finite() || *w < 0.0) {
                return Err(Error::InvalidInput("sweep widths must be finite and >= 0".into()));
            }
            return Ok(widths.clone());
        }
        if self.width_count < 2 || !(self.width_max > self.width_min) || self.width_min < 0.0 {
            return Err(Error::InvalidInput("bad sweep width range".into()));
        }
        let n = self.width_count;
        Ok((0..n)
            .map(|i| self.width_min + (self.width_max - self.width_min) * i as f64 / (n - 1) as f64)
            .collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortraitConfig {
    #[serde(default = "default_energies")]
    pub energies: Vec<f64>,
    #[serde(default = "default_portrait_samples")]
    pub samples: usize,
}

fn default_energies() -> Vec<f64> {
    vec![0.25, 0.5, 0.75, 1.25, 1.5, 2.0]
}

fn default_portrait_samples() -> usize {
    201
}

impl Default for PortraitConfig {
    fn default() -> Self {
        PortraitConfig { energies: default_energies(), samples: default_portrait_samples() }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidInput(format!("config parse error: {e}")))
    }

    pub fn build_packet(&self) -> Result<GaussianPacket> {
        GaussianPacket::new(self.packet.q0, self.packet.p0, self.packet.delta, self.packet.mass)
    }

    pub fn build_barrier(&self) -> Result<PiecewiseBarrier> {
        match self.barrier.kind.as_str() {
            "square" => PiecewiseBarrier::square_at(
                self.barrier.offset,
                self.barrier.height,
                self.barrier.width,
                self.packet.mass,
            ),
            "free" => Ok(PiecewiseBarrier::free(self.packet.mass)),
            other => Err(Error::InvalidInput(format!(
                "barrier.kind {other:?} is not a piecewise barrier (use \"square\" or \"free\")"
            ))),
        }
    }

    pub fn build_smooth_barrier(&self) -> Result<SmoothBarrier> {
        if self.barrier.kind != "sech2" {
            return Err(Error::InvalidInput(format!(
                "portraits need barrier.kind = \"sech2\", got {:?}",
                self.barrier.kind
            )));
        }
        SmoothBarrier::new(self.barrier.height, self.barrier.width, self.packet.mass)
    }

    pub fn build_momentum_grid(&self, packet: &GaussianPacket) -> Result<(MomentumGrid, f64)> {
        build_momentum_grid(packet, self.grids.width_sigmas, self.grids.momentum_nodes)
    }

    pub fn toa_params(&self) -> ToaParams {
        ToaParams { two_term_amplitudes: self.flags.two_term_amplitudes, ..Default::default() }
    }

    pub fn channel(&self) -> Result<Channel> {
        Channel::parse(&self.channel)
    }

    pub fn detector_x(&self) -> Result<f64> {
        match (self.detector.x, self.detector.y) {
            (Some(x), None) => Ok(x),
            _ => Err(Error::InvalidInput(
                "this command needs exactly `detector.x` (right of the barrier)".into(),
            )),
        }
    }

    pub fn detector_y(&self) -> Result<f64> {
        match (self.detector.x, self.detector.y) {
            (None, Some(y)) => Ok(y),
            _ => Err(Error::InvalidInput(
                "this command needs exactly `detector.y` (left of the barrier)".into(),
            )),
        }
    }

    /// Time window with defaults: `[0.25, 2.5] * t_free` for comfortably
    /// positive free transit times, otherwise a symmetric window around
    /// the classical arrival wide enough for the packet's spread.
    pub fn resolve_time_window(&mut self, t_free: f64) -> Result<TimeGrid> {
        let (lo, hi) = match (self.grids.t_min, self.grids.t_max) {
            (Some(lo), Some(hi)) => (lo, hi),
            (None, None) => {
                let spread = 7.0 * self.packet.mass * self.packet.delta / self.packet.p0.abs();
                if t_free > spread {
                    (0.25 * t_free, 2.5 * t_free)
                } else {
                    (t_free - spread, t_free + spread)
                }
            }
            _ => {
                return Err(Error::InvalidInput(
                    "set both grids.t_min and grids.t_max, or neither".into(),
                ))
            }
        };
        let grid = TimeGrid::uniform(lo, hi, self.grids.time_points)?;
        self.grids.t_min = Some(lo);
        self.grids.t_max = Some(hi);
        Ok(grid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [packet]
        q0 = -50
        p0 = 2
        delta = 10
    "#;

    #[test]
    fn minimal_config_gets_all_defaults() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.packet.mass, 1.0);
        assert_eq!(cfg.grids.time_points, 4001);
        assert_eq!(cfg.grids.momentum_nodes, 2049);
        assert_eq!(cfg.grids.width_sigmas, 8.0);
        assert!(!cfg.flags.two_term_amplitudes);
        assert!(cfg.flags.emit_phase_time);
        assert_eq!(cfg.channel, "r+");
        let barrier = cfg.build_barrier().unwrap();
        assert!(barrier.is_free());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = format!("{MINIMAL}\n[grids]\ntime_pints = 100\n");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
    }

    #[test]
    fn default_window_scales_with_the_free_transit() {
        let mut cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let grid = cfg.resolve_time_window(50.0).unwrap();
        assert_eq!((grid.t_min, grid.t_max), (12.5, 125.0));
        assert_eq!(cfg.grids.t_min, Some(12.5));
    }

    #[test]
    fn default_window_centres_on_negative_arrivals() {
        let mut cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let grid = cfg.resolve_time_window(-5.0).unwrap();
        assert!(grid.t_min < -5.0 && grid.t_max > -5.0);
        // Wide enough for the packet's own arrival spread m delta / p0.
        assert!(grid.t_max - grid.t_min >= 10.0 * 10.0 / 2.0);
    }

    #[test]
    fn explicit_window_must_be_complete() {
        let text = format!("{MINIMAL}\n[grids]\nt_min = 10.0\n");
        let mut cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        assert!(cfg.resolve_time_window(50.0).is_err());
    }

    #[test]
    fn sweep_width_grid() {
        let sweep = SweepConfig::default();
        let widths = sweep.resolved_widths().unwrap();
        assert_eq!(widths.len(), 21);
        assert_eq!(widths[0], 0.0);
        assert_eq!(*widths.last().unwrap(), 10.0);
        assert!((widths[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn detector_requires_exactly_one_side() {
        let both = format!("{MINIMAL}\n[detector]\nx = 50.0\ny = -50.0\n");
        let cfg = ExperimentConfig::from_toml_str(&both).unwrap();
        assert!(cfg.detector_x().is_err());
        assert!(cfg.detector_y().is_err());
        let x_only = format!("{MINIMAL}\n[detector]\nx = 50.0\n");
        let cfg = ExperimentConfig::from_toml_str(&x_only).unwrap();
        assert_eq!(cfg.detector_x().unwrap(), 50.0);
        assert!(cfg.detector_y().is_err());
    }
}
