use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Letters reserved by the G-code dialect that cannot name a filament.
const RESERVED_WORDS: &[char] = &['G', 'M', 'N', 'T', 'S', 'P', 'X', 'Y', 'Z', 'E', 'F'];

/// Ratio word letters in filament order. E, F and G are taken by the
/// dialect, so the fourth and fifth filaments use D and H.
pub const DEFAULT_RATIO_LETTERS: [char; 5] = ['A', 'B', 'C', 'D', 'H'];

/// Printer parameters. Lengths in mm, rates per second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MachineConfig {
    pub k: usize,
    pub nozzle_diameter: f64,
    pub filament_diameter: f64,
    pub layer_thickness: f64,
    /// Target extrusion rate in mm³/s, held constant by feedrate modulation.
    pub volumetric_rate: f64,
    pub max_feedrate: f64,
    pub travel_feedrate: f64,
    /// Filament retracted on every deposition interruption.
    pub retraction: f64,
    pub retraction_feedrate: f64,
    /// Purged on the ooze shield before each stratum.
    pub purge_volume: f64,
    pub shield_offset: f64,
    /// Firmware linear advance K-factor; emitted as configuration only.
    pub linear_advance_factor: f64,
    /// Strata thinner than this are not deposited.
    pub min_thickness: f64,
    /// Largest change of a stratum's thickness fraction within one move.
    /// Extrusion is uniform along a move, so longer ramps are split.
    pub flow_step: f64,
    /// Moves produced by that split are at least this long.
    pub min_move_length: f64,
    pub ratio_letters: Vec<char>,
}

impl Default for MachineConfig {
    fn default() -> Self {
        MachineConfig::for_filaments(3)
    }
}

impl MachineConfig {
    /// Defaults for a `k`-filament printer; four or more filaments print
    /// 0.4 mm layers.
    pub fn for_filaments(k: usize) -> Self {
        MachineConfig {
            k,
            nozzle_diameter: 0.4,
            filament_diameter: 1.75,
            layer_thickness: if k >= 4 { 0.4 } else { 0.3 },
            volumetric_rate: 6.0,
            max_feedrate: 150.0,
            travel_feedrate: 150.0,
            retraction: 1.0,
            retraction_feedrate: 40.0,
            purge_volume: 7.0,
            shield_offset: 3.0,
            linear_advance_factor: 0.05,
            min_thickness: 0.02,
            flow_step: 0.01,
            min_move_length: 0.05,
            ratio_letters: DEFAULT_RATIO_LETTERS.iter().copied().take(k).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=5).contains(&self.k) {
            return Err(Error::Validation(format!(
                "filament count {} outside 2..=5",
                self.k
            )));
        }
        let positive = [
            ("nozzle_diameter", self.nozzle_diameter),
            ("filament_diameter", self.filament_diameter),
            ("layer_thickness", self.layer_thickness),
            ("volumetric_rate", self.volumetric_rate),
            ("max_feedrate", self.max_feedrate),
            ("travel_feedrate", self.travel_feedrate),
            ("retraction_feedrate", self.retraction_feedrate),
            ("purge_volume", self.purge_volume),
            ("shield_offset", self.shield_offset),
            ("min_thickness", self.min_thickness),
            ("flow_step", self.flow_step),
            ("min_move_length", self.min_move_length),
        ];
        for (name, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::Validation(format!(
                    "{name} must be positive, got {value}"
                )));
            }
        }
        if self.retraction < 0.0 || self.linear_advance_factor < 0.0 {
            return Err(Error::Validation(
                "retraction and linear advance must be non-negative".into(),
            ));
        }
        if self.layer_thickness > self.nozzle_diameter {
            return Err(Error::Validation(format!(
                "layer thickness {} exceeds nozzle diameter {}",
                self.layer_thickness, self.nozzle_diameter
            )));
        }
        if self.ratio_letters.len() != self.k {
            return Err(Error::Validation(format!(
                "{} ratio letters for {} filaments",
                self.ratio_letters.len(),
                self.k
            )));
        }
        for (i, c) in self.ratio_letters.iter().enumerate() {
            if !c.is_ascii_uppercase() || RESERVED_WORDS.contains(c) {
                return Err(Error::Validation(format!(
                    "ratio letter {c:?} is not usable"
                )));
            }
            if self.ratio_letters[..i].contains(c) {
                return Err(Error::Validation(format!("ratio letter {c:?} repeated")));
            }
        }
        Ok(())
    }

    /// Cross-section of the raw filament, mm².
    pub fn filament_area(&self) -> f64 {
        let r = self.filament_diameter / 2.0;
        std::f64::consts::PI * r * r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_filament_count() {
        let m3 = MachineConfig::for_filaments(3);
        assert_eq!(m3.layer_thickness, 0.3);
        assert_eq!(m3.ratio_letters, vec!['A', 'B', 'C']);
        m3.validate().unwrap();
        let m5 = MachineConfig::for_filaments(5);
        assert_eq!(m5.layer_thickness, 0.4);
        assert_eq!(m5.ratio_letters, vec!['A', 'B', 'C', 'D', 'H']);
        m5.validate().unwrap();
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(MachineConfig::for_filaments(6).validate().is_err());
        let mut m = MachineConfig::default();
        m.layer_thickness = 0.5;
        assert!(m.validate().is_err());
        let mut m = MachineConfig::default();
        m.ratio_letters = vec!['A', 'E', 'C'];
        assert!(m.validate().is_err());
    }
}
