//! Deployment scenario configuration.
//!
//! Lengths are in micrometers, times in seconds, diffusion coefficients in
//! square micrometers per second.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Where molecules enter the medium when a symbol is emitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ReleaseMode {
    /// Release at the transmitter surface point nearest the receiver.
    #[default]
    Surface,
    /// Release at the transmitter center (point source at the center
    /// distance), useful for comparison with the closed-form first-passage
    /// law.
    Center,
}

/// Geometry, physics, and timing parameters of one deployment scenario.
///
/// `distance` is the surface-to-surface gap between transmitter and receiver;
/// the center distance is derived as `distance + receiver_radius +
/// transmitter_radius`. After emission the transmitter body is transparent to
/// molecule motion, so a molecule released at the surface point behaves as a
/// point source at `distance + receiver_radius` from the receiver center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    /// Diffusion coefficient D (um^2/s).
    pub diffusion_coefficient: f64,
    /// Receiver sphere radius (um).
    pub receiver_radius: f64,
    /// Transmitter sphere radius (um). May be zero for the point-source limit.
    pub transmitter_radius: f64,
    /// Messenger molecule radius (um).
    pub molecule_radius: f64,
    /// Surface-to-surface gap d (um).
    pub distance: f64,
    /// Symbol slot length t_s (s).
    pub symbol_duration: f64,
    /// Brownian integration step (s).
    pub micro_step: f64,
    /// Molecules emitted for bit 1.
    pub molecules_per_one: u32,
    /// Molecules emitted for bit 0 (zero in the BCSK setup studied here).
    pub molecules_per_zero: u32,
    /// Master seed; all randomness derives from it.
    pub rng_seed: u64,
    #[serde(default)]
    pub release_mode: ReleaseMode,
}

/// Insulin-like messenger molecules between beta-cell-sized devices.
pub const DEFAULT_DIFFUSION: f64 = 79.4;
pub const DEFAULT_RADIUS: f64 = 10.0;
pub const DEFAULT_MOLECULE_RADIUS: f64 = 0.0025;
pub const DEFAULT_MOLECULES_PER_ONE: u32 = 50;
/// Integration steps per symbol slot used by the default configuration.
pub const DEFAULT_STEPS_PER_SLOT: f64 = 4000.0;

/// Symbol duration rule `t_s = 0.1 (d/2)^2`, evaluated as `d^2 / 40` so the
/// result is the correctly rounded value.
pub fn symbol_duration_for(distance: f64) -> f64 {
    distance * distance / 40.0
}

impl SimulationConfig {
    /// Scenario with the standard physical parameters at the given
    /// surface-to-surface gap, with `t_s = 0.1 (d/2)^2` and a micro step of
    /// `t_s / 4000`.
    pub fn for_distance(distance: f64, rng_seed: u64) -> Self {
        let symbol_duration = symbol_duration_for(distance);
        Self {
            diffusion_coefficient: DEFAULT_DIFFUSION,
            receiver_radius: DEFAULT_RADIUS,
            transmitter_radius: DEFAULT_RADIUS,
            molecule_radius: DEFAULT_MOLECULE_RADIUS,
            distance,
            symbol_duration,
            micro_step: symbol_duration / DEFAULT_STEPS_PER_SLOT,
            molecules_per_one: DEFAULT_MOLECULES_PER_ONE,
            molecules_per_zero: 0,
            rng_seed,
            release_mode: ReleaseMode::Surface,
        }
    }

    /// Center-to-center distance between transmitter and receiver.
    pub fn center_distance(&self) -> f64 {
        self.distance + self.receiver_radius + self.transmitter_radius
    }

    /// Distance from the receiver center to the emission point.
    pub fn release_distance(&self) -> f64 {
        match self.release_mode {
            ReleaseMode::Surface => self.distance + self.receiver_radius,
            ReleaseMode::Center => self.center_distance(),
        }
    }

    /// A molecule is absorbed when its center comes within this distance of
    /// the receiver center.
    pub fn absorption_radius(&self) -> f64 {
        self.receiver_radius + self.molecule_radius
    }

    /// Molecules emitted for the given bit.
    pub fn emission_count(&self, bit: u8) -> u32 {
        if bit == 0 {
            self.molecules_per_zero
        } else {
            self.molecules_per_one
        }
    }

    /// Check the scenario invariants.
    ///
    /// `diffusion_coefficient`, `transmitter_radius`, and `molecule_radius`
    /// may be zero so the point-source and frozen-medium limits remain
    /// expressible; everything else must be strictly positive.
    pub fn validate(&self) -> Result<()> {
        let err = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;
        if !finite_nonneg(self.diffusion_coefficient) {
            return err("diffusion_coefficient must be non-negative");
        }
        if !finite_pos(self.receiver_radius) {
            return err("receiver_radius must be positive");
        }
        if !finite_nonneg(self.transmitter_radius) {
            return err("transmitter_radius must be non-negative");
        }
        if !finite_nonneg(self.molecule_radius) {
            return err("molecule_radius must be non-negative");
        }
        if self.molecule_radius >= self.receiver_radius {
            return err("molecule_radius must be smaller than receiver_radius");
        }
        if !finite_pos(self.distance) {
            return err("distance must be positive");
        }
        if !finite_pos(self.symbol_duration) {
            return err("symbol_duration must be positive");
        }
        if !finite_pos(self.micro_step) || self.micro_step >= self.symbol_duration {
            return err("micro_step must be positive and smaller than symbol_duration");
        }
        if self.molecules_per_one == 0 {
            return err("molecules_per_one must be positive");
        }
        if self.release_distance() <= self.absorption_radius() {
            return err("emission point lies inside the absorption radius");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_symbol_durations() {
        assert_eq!(symbol_duration_for(4.0), 0.4);
        assert_eq!(symbol_duration_for(8.0), 1.6);
        assert_eq!(symbol_duration_for(24.0), 14.4);
    }

    #[test]
    fn default_scenario_is_valid() {
        for d in [4.0, 8.0, 12.0, 16.0, 20.0, 24.0] {
            SimulationConfig::for_distance(d, 1).validate().unwrap();
        }
    }

    #[test]
    fn release_geometry() {
        let mut cfg = SimulationConfig::for_distance(4.0, 1);
        assert_eq!(cfg.center_distance(), 24.0);
        assert_eq!(cfg.release_distance(), 14.0);
        cfg.release_mode = ReleaseMode::Center;
        assert_eq!(cfg.release_distance(), 24.0);
    }

    #[test]
    fn rejects_bad_geometry() {
        let mut cfg = SimulationConfig::for_distance(4.0, 1);
        cfg.molecule_radius = 11.0;
        assert!(cfg.validate().is_err());

        let mut cfg = SimulationConfig::for_distance(4.0, 1);
        cfg.micro_step = cfg.symbol_duration;
        assert!(cfg.validate().is_err());

        let mut cfg = SimulationConfig::for_distance(4.0, 1);
        cfg.molecules_per_one = 0;
        assert!(cfg.validate().is_err());
    }
}
