//! Transimpedance amplifier, lock-in gain and the analytic noise budget.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fluorescence::ModulationSpec;
use crate::units::C;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplifierChain {
    #[serde(rename = "transimpedance_v_per_a")]
    pub transimpedance: f64,
    /// Feedback resistor for Johnson noise; `None` means noiseless.
    #[serde(rename = "feedback_resistance_ohm", default, skip_serializing_if = "Option::is_none")]
    pub feedback_resistance: Option<f64>,
    /// Input-referred amplifier current noise density, A/√Hz.
    #[serde(rename = "input_noise_a_per_rthz", default)]
    pub input_noise: f64,
    #[serde(rename = "reference_frequency_hz")]
    pub reference_frequency: f64,
    #[serde(rename = "time_constant_s")]
    pub time_constant: f64,
    pub lockin_gain: f64,
}

impl Default for AmplifierChain {
    fn default() -> Self {
        AmplifierChain {
            transimpedance: 1e9,
            feedback_resistance: Some(1e9),
            input_noise: 10e-15,
            reference_frequency: 300.0,
            time_constant: 1.0,
            lockin_gain: 40.0,
        }
    }
}

impl AmplifierChain {
    pub fn validate(&self) -> Result<()> {
        if !(self.transimpedance > 0.0) {
            return Err(Error::invalid("amplifier.transimpedance_v_per_a", "must be positive"));
        }
        if let Some(r) = self.feedback_resistance {
            if !(r > 0.0) {
                return Err(Error::invalid("amplifier.feedback_resistance_ohm", "must be positive"));
            }
        }
        if !(self.input_noise >= 0.0) {
            return Err(Error::invalid("amplifier.input_noise_a_per_rthz", "must be non-negative"));
        }
        if !(self.reference_frequency > 0.0) {
            return Err(Error::invalid("amplifier.reference_frequency_hz", "must be positive"));
        }
        if !(self.time_constant > 0.0) {
            return Err(Error::invalid("amplifier.time_constant_s", "must be positive"));
        }
        if !(self.lockin_gain > 0.0) {
            return Err(Error::invalid("amplifier.lockin_gain", "must be positive"));
        }
        Ok(())
    }

    /// Equivalent noise bandwidth of the single-pole output filter, Hz.
    pub fn enbw(&self) -> f64 {
        1.0 / (4.0 * self.time_constant)
    }

    /// Volts of lock-in output per ampere of on-state photocurrent.
    pub fn effective_gain(&self, m: &ModulationSpec) -> f64 {
        self.lockin_gain * self.transimpedance * m.square_reference_overlap()
    }

    /// Combined amplifier and Johnson current noise density, A/√Hz.
    pub fn current_noise_density(&self, temperature: f64) -> f64 {
        let johnson = match self.feedback_resistance {
            Some(r) => 4.0 * C.boltzmann_constant * temperature / r,
            None => 0.0,
        };
        (self.input_noise * self.input_noise + johnson).sqrt()
    }

    /// Lock-in output standard deviation from white input current noise of
    /// density `density` (A/√Hz), demodulated by a unit square reference.
    pub fn white_noise_output_std(&self, density: f64) -> f64 {
        self.lockin_gain * self.transimpedance * density * self.enbw().sqrt()
    }
}

/// Input-referred RMS noise currents over a bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseBudget {
    pub shot_a: f64,
    pub johnson_a: f64,
    pub amplifier_a: f64,
    pub total_a: f64,
}

pub fn noise_budget(a: &AmplifierChain, dc_current: f64, bandwidth: f64, temperature: f64) -> Result<NoiseBudget> {
    a.validate()?;
    if !(bandwidth > 0.0) {
        return Err(Error::Domain(format!("bandwidth must be positive, got {bandwidth}")));
    }
    if !(temperature >= 0.0) {
        return Err(Error::Domain(format!("temperature must be non-negative, got {temperature}")));
    }
    if !(dc_current >= 0.0) {
        return Err(Error::Domain(format!("current must be non-negative, got {dc_current}")));
    }
    let shot = (2.0 * C.elementary_charge * dc_current * bandwidth).sqrt();
    let johnson = match a.feedback_resistance {
        Some(r) => (4.0 * C.boltzmann_constant * temperature * bandwidth / r).sqrt(),
        None => 0.0,
    };
    let amp = a.input_noise * bandwidth.sqrt();
    Ok(NoiseBudget {
        shot_a: shot,
        johnson_a: johnson,
        amplifier_a: amp,
        total_a: (shot * shot + johnson * johnson + amp * amp).sqrt(),
    })
}

/// Noiseless lock-in output for an on-state photocurrent `peak_current`, V.
pub fn lockin_output_analytic(a: &AmplifierChain, peak_current: f64, m: &ModulationSpec) -> Result<f64> {
    a.validate()?;
    m.validate()?;
    Ok(a.effective_gain(m) * peak_current)
}
