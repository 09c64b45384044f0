//! Physical constants (CODATA 2018, SI) and photon/detector conversions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// CODATA 2018 constant table. All model code reads constants from here.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// J·s
    pub planck_constant: f64,
    /// m/s
    pub speed_of_light: f64,
    /// C
    pub elementary_charge: f64,
    /// kg
    pub atomic_mass_unit: f64,
    /// J/K
    pub boltzmann_constant: f64,
    /// Mass of an 88Sr+ ion, kg.
    pub sr88_mass: f64,
}

/// Relative atomic mass used for 88Sr+.
pub const SR88_MASS_NUMBER: f64 = 87.9056;

pub const CODATA_2018: PhysicalConstants = PhysicalConstants {
    planck_constant: 6.626_070_15e-34,
    speed_of_light: 299_792_458.0,
    elementary_charge: 1.602_176_634e-19,
    atomic_mass_unit: 1.660_539_066_60e-27,
    boltzmann_constant: 1.380_649e-23,
    sr88_mass: SR88_MASS_NUMBER * 1.660_539_066_60e-27,
};

/// Shorthand for [`CODATA_2018`].
pub const C: PhysicalConstants = CODATA_2018;

/// Vacuum wavelength in meters, strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Wavelength(f64);

impl Wavelength {
    pub fn new(meters: f64) -> Result<Self> {
        if meters > 0.0 && meters.is_finite() {
            Ok(Wavelength(meters))
        } else {
            Err(Error::Domain(format!(
                "wavelength must be positive and finite, got {meters}"
            )))
        }
    }

    pub fn from_nm(nm: f64) -> Result<Self> {
        Self::new(nm * 1e-9)
    }

    pub fn meters(self) -> f64 {
        self.0
    }

    /// The 422 nm 5S1/2 - 5P1/2 cooling line of 88Sr+.
    pub fn sr_cooling() -> Self {
        Wavelength(422e-9)
    }
}

impl TryFrom<f64> for Wavelength {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Wavelength::new(v)
    }
}

impl From<Wavelength> for f64 {
    fn from(w: Wavelength) -> f64 {
        w.0
    }
}

/// Photon energy h·c/λ in joules.
pub fn photon_energy(wavelength: Wavelength) -> f64 {
    C.planck_constant * C.speed_of_light / wavelength.meters()
}

/// Photon energy for a raw wavelength in meters, rejecting non-positive input.
pub fn photon_energy_m(wavelength_m: f64) -> Result<f64> {
    Wavelength::new(wavelength_m).map(photon_energy)
}

/// Quantum efficiency implied by a responsivity (A/W) at a wavelength.
pub fn responsivity_to_qe(responsivity: f64, wavelength: Wavelength) -> Result<f64> {
    if !(responsivity >= 0.0) {
        return Err(Error::Domain(format!(
            "responsivity must be non-negative, got {responsivity}"
        )));
    }
    Ok(responsivity * photon_energy(wavelength) / C.elementary_charge)
}

/// Responsivity (A/W) implied by a quantum efficiency at a wavelength.
pub fn qe_to_responsivity(qe: f64, wavelength: Wavelength) -> Result<f64> {
    if !(qe >= 0.0) {
        return Err(Error::Domain(format!(
            "quantum efficiency must be non-negative, got {qe}"
        )));
    }
    Ok(qe * C.elementary_charge / photon_energy(wavelength))
}
