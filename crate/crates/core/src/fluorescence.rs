//! Fluorescence from a trapped ion or cloud under a chopped repumper.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{photon_energy, Wavelength};

fn default_scatter_rate() -> f64 {
    1e7
}

fn default_wavelength() -> Wavelength {
    Wavelength::sr_cooling()
}

/// Point source of `n_ions` ions scattering on the cooling line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IonSource {
    pub n_ions: u32,
    /// Photons/s per ion into 4π.
    #[serde(rename = "scatter_rate_per_ion_s", default = "default_scatter_rate")]
    pub scatter_rate_per_ion: f64,
    #[serde(rename = "wavelength_m", default = "default_wavelength")]
    pub wavelength: Wavelength,
}

impl IonSource {
    pub fn new(n_ions: u32, scatter_rate_per_ion: f64, wavelength: Wavelength) -> Result<Self> {
        let s = IonSource {
            n_ions,
            scatter_rate_per_ion,
            wavelength,
        };
        s.validate()?;
        Ok(s)
    }

    /// `n` ions at 10⁷ photons/s on the 422 nm line.
    pub fn sr_cloud(n_ions: u32) -> Self {
        IonSource {
            n_ions,
            scatter_rate_per_ion: default_scatter_rate(),
            wavelength: default_wavelength(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_ions < 1 {
            return Err(Error::invalid("source.n_ions", "need at least one ion"));
        }
        if !(self.scatter_rate_per_ion >= 0.0) || !self.scatter_rate_per_ion.is_finite() {
            return Err(Error::invalid("source.scatter_rate_per_ion_s", "must be finite and non-negative"));
        }
        Ok(())
    }

    /// Total photon emission rate into 4π while fluorescing, photons/s.
    pub fn photon_rate(&self) -> f64 {
        self.n_ions as f64 * self.scatter_rate_per_ion
    }
}

/// Total fluorescence power into 4π, W.
pub fn total_emitted_power(src: &IonSource) -> f64 {
    src.photon_rate() * photon_energy(src.wavelength)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ModulationShape {
    #[default]
    Square,
}

/// Repumper chopping. `depth` 1 gates fluorescence completely.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulationSpec {
    #[serde(default)]
    pub shape: ModulationShape,
    #[serde(rename = "frequency_hz")]
    pub frequency: f64,
    pub duty: f64,
    pub depth: f64,
}

impl Default for ModulationSpec {
    fn default() -> Self {
        ModulationSpec {
            shape: ModulationShape::Square,
            frequency: 300.0,
            duty: 0.5,
            depth: 1.0,
        }
    }
}

impl ModulationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.frequency > 0.0) || !self.frequency.is_finite() {
            return Err(Error::invalid("modulation.frequency_hz", "must be positive"));
        }
        if !(self.duty > 0.0 && self.duty <= 1.0) {
            return Err(Error::invalid("modulation.duty", "must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.depth) {
            return Err(Error::invalid("modulation.depth", "must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn period(&self) -> f64 {
        1.0 / self.frequency
    }

    /// Repumper gate: 1 during the first `duty` fraction of each period.
    pub fn gate(&self, t: f64) -> f64 {
        let phase = (t * self.frequency).rem_euclid(1.0);
        if phase < self.duty {
            1.0
        } else {
            0.0
        }
    }

    /// Relative fluorescence level 1 − depth·(1 − g(t)).
    pub fn level(&self, t: f64) -> f64 {
        1.0 - self.depth * (1.0 - self.gate(t))
    }

    /// Cycle average of [`ModulationSpec::level`].
    pub fn mean_level(&self) -> f64 {
        self.duty + (1.0 - self.duty) * (1.0 - self.depth)
    }

    /// Peak amplitude of the fundamental Fourier component of the level.
    pub fn fundamental_amplitude(&self) -> f64 {
        self.depth * 2.0 / std::f64::consts::PI * (std::f64::consts::PI * self.duty).sin()
    }

    /// Mean of level(t)·r(t) for a unit ±1 square reference in phase with the
    /// gate (+1 for the first half period).
    pub fn square_reference_overlap(&self) -> f64 {
        self.depth * self.duty.min(1.0 - self.duty)
    }
}

/// Instantaneous photon emission rate at time `t`, photons/s.
pub fn modulated_flux(src: &IonSource, m: &ModulationSpec, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be non-negative, got {t}")));
    }
    Ok(src.photon_rate() * m.level(t))
}

/// Cycle-averaged emission rate, photons/s.
pub fn cycle_average_flux(src: &IonSource, m: &ModulationSpec) -> f64 {
    src.photon_rate() * m.mean_level()
}
