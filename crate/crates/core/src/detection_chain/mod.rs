//! From emitted fluorescence to a lock-in voltage.

pub mod amplifier;
pub mod detector;
pub mod geometry;
pub mod lockin;
pub mod materials;

pub use amplifier::{lockin_output_analytic, noise_budget, AmplifierChain, NoiseBudget};
pub use detector::{photocurrent, DetectorKind, DetectorSpec, ResponsivityPoint};
pub use geometry::{collection_efficiency, power_at_detector, solid_angle_fraction, Aperture, CollectionGeometry};
pub use lockin::{
    background_rms_for_output_std, histogram, lockin_compare, lockin_simulate, predicted_output_std, BackgroundScatter,
    Histogram, LockinComparison, LockinSimConfig, LockinTrace, OpticalSignal,
};
pub use materials::{FilmLayer, FilmStack, PatternedLayer, GOLD_BULK_RESISTIVITY};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fluorescence::{total_emitted_power, IonSource, ModulationSpec};

/// A complete detection setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionScenario {
    pub name: String,
    pub source: IonSource,
    /// Rounded source power used for the budget instead of the photon-level
    /// estimate, when quoting published figures.
    #[serde(rename = "reference_source_power_w", default, skip_serializing_if = "Option::is_none")]
    pub reference_source_power: Option<f64>,
    #[serde(default)]
    pub modulation: ModulationSpec,
    pub geometry: CollectionGeometry,
    pub stack: FilmStack,
    pub detector: DetectorSpec,
    #[serde(rename = "temperature_k")]
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplifier: Option<AmplifierChain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lockin: Option<LockinSimConfig>,
}

/// One row of a detection budget table. Current and lock-in output are
/// absent for counting detectors without an analog chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetRow {
    pub name: String,
    pub detector: DetectorKind,
    pub temperature_k: f64,
    pub emitted_power_w: f64,
    pub source_power_w: f64,
    pub solid_angle_fraction: f64,
    pub stack_transmission: f64,
    pub collection_efficiency: f64,
    pub power_at_detector_w: f64,
    pub quantum_efficiency: f64,
    pub photocurrent_a: Option<f64>,
    pub lockin_output_v: Option<f64>,
}

impl DetectionScenario {
    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        if let Some(p) = self.reference_source_power {
            if !(p >= 0.0) {
                return Err(Error::invalid("reference_source_power_w", "must be non-negative"));
            }
        }
        self.modulation.validate()?;
        self.geometry.validate()?;
        self.stack.validate()?;
        self.detector.validate()?;
        if !(self.temperature >= 0.0) {
            return Err(Error::invalid("temperature_k", "must be non-negative"));
        }
        if let Some(a) = &self.amplifier {
            a.validate()?;
        }
        Ok(())
    }

    pub fn collection_efficiency(&self) -> Result<f64> {
        collection_efficiency(&self.geometry, &self.stack)
    }

    /// Fluorescence at the detector from the photon-level source model.
    pub fn optical_signal(&self) -> Result<OpticalSignal> {
        let p = power_at_detector(total_emitted_power(&self.source), self.collection_efficiency()?)?;
        Ok(OpticalSignal {
            peak_power: p,
            modulation: self.modulation,
            wavelength: self.source.wavelength,
        })
    }

    fn chain(&self) -> Result<&AmplifierChain> {
        self.amplifier
            .as_ref()
            .ok_or_else(|| Error::invalid("amplifier", "scenario has no analog readout chain"))
    }

    /// Simulated lock-in comparison with and without ions.
    pub fn simulate(&self, seed: u64) -> Result<LockinComparison> {
        self.validate()?;
        let cfg = self.lockin.unwrap_or_default();
        lockin_compare(self.chain()?, &self.detector, self.temperature, &self.optical_signal()?, &cfg, seed)
    }

    pub fn simulate_trace(&self, seed: u64) -> Result<LockinTrace> {
        self.validate()?;
        let cfg = self.lockin.unwrap_or_default();
        lockin_simulate(self.chain()?, &self.detector, self.temperature, &self.optical_signal()?, &cfg, seed)
    }
}

/// Static power budget of a scenario.
pub fn budget(s: &DetectionScenario) -> Result<BudgetRow> {
    s.validate()?;
    let emitted = total_emitted_power(&s.source);
    let source = s.reference_source_power.unwrap_or(emitted);
    let fraction = solid_angle_fraction(&s.geometry)?;
    let transmission = s.stack.stack_transmission();
    let eff = fraction * transmission;
    let p_det = power_at_detector(source, eff)?;
    let (current, lockin) = match &s.amplifier {
        Some(a) => {
            let i = photocurrent(&s.detector, p_det, s.temperature, s.source.wavelength)?;
            (Some(i), Some(lockin_output_analytic(a, i, &s.modulation)?))
        }
        None => (None, None),
    };
    Ok(BudgetRow {
        name: s.name.clone(),
        detector: s.detector.kind,
        temperature_k: s.temperature,
        emitted_power_w: emitted,
        source_power_w: source,
        solid_angle_fraction: fraction,
        stack_transmission: transmission,
        collection_efficiency: eff,
        power_at_detector_w: p_det,
        quantum_efficiency: s.detector.quantum_efficiency_at(s.temperature, s.source.wavelength)?,
        photocurrent_a: current,
        lockin_output_v: lockin,
    })
}
