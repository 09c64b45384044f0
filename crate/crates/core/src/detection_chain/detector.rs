//! Photodetector response models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{qe_to_responsivity, responsivity_to_qe, Wavelength};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Photodiode,
    Pmt,
    Vlpc,
}

/// One point of a measured responsivity curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponsivityPoint {
    #[serde(rename = "temperature_k")]
    pub temperature: f64,
    #[serde(rename = "responsivity_a_per_w")]
    pub responsivity: f64,
}

/// A detector is described either by a temperature-dependent responsivity
/// table or by a fixed quantum efficiency. Exactly one must be given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorSpec {
    pub kind: DetectorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub responsivity_table: Option<Vec<ResponsivityPoint>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantum_efficiency: Option<f64>,
    #[serde(rename = "dark_current_a", default)]
    pub dark_current: f64,
    #[serde(rename = "dark_count_rate_s", default)]
    pub dark_count_rate: f64,
    #[serde(default = "one")]
    pub internal_gain: f64,
}

fn one() -> f64 {
    1.0
}

impl DetectorSpec {
    /// Si photodiode: 0.1 A/W at 77 K and above, 0.01 A/W at 4 K.
    pub fn cryo_photodiode() -> Self {
        DetectorSpec {
            kind: DetectorKind::Photodiode,
            responsivity_table: Some(vec![
                ResponsivityPoint { temperature: 4.0, responsivity: 0.01 },
                ResponsivityPoint { temperature: 77.0, responsivity: 0.1 },
                ResponsivityPoint { temperature: 300.0, responsivity: 0.1 },
            ]),
            quantum_efficiency: None,
            dark_current: 0.0,
            dark_count_rate: 0.0,
            internal_gain: 1.0,
        }
    }

    pub fn with_quantum_efficiency(kind: DetectorKind, qe: f64) -> Self {
        DetectorSpec {
            kind,
            responsivity_table: None,
            quantum_efficiency: Some(qe),
            dark_current: 0.0,
            dark_count_rate: 0.0,
            internal_gain: 1.0,
        }
    }

    pub fn pmt() -> Self {
        Self::with_quantum_efficiency(DetectorKind::Pmt, 0.2)
    }

    pub fn vlpc() -> Self {
        Self::with_quantum_efficiency(DetectorKind::Vlpc, 0.88)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.responsivity_table, self.quantum_efficiency) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(Error::invalid(
                    "detector",
                    "give exactly one of responsivity_table and quantum_efficiency",
                ))
            }
            (Some(table), None) => {
                if table.is_empty() {
                    return Err(Error::invalid("detector.responsivity_table", "empty table"));
                }
                for (i, p) in table.iter().enumerate() {
                    if !(p.temperature > 0.0) || !(p.responsivity >= 0.0) {
                        return Err(Error::invalid(
                            format!("detector.responsivity_table[{i}]"),
                            "temperature must be positive and responsivity non-negative",
                        ));
                    }
                    if i > 0 && !(p.temperature > table[i - 1].temperature) {
                        return Err(Error::invalid(
                            format!("detector.responsivity_table[{i}].temperature_k"),
                            "temperatures must be strictly increasing",
                        ));
                    }
                }
            }
            (None, Some(qe)) => {
                if !(0.0..=1.0).contains(&qe) {
                    return Err(Error::invalid("detector.quantum_efficiency", "must lie in [0, 1]"));
                }
            }
        }
        if !(self.dark_current >= 0.0) {
            return Err(Error::invalid("detector.dark_current_a", "must be non-negative"));
        }
        if !(self.dark_count_rate >= 0.0) {
            return Err(Error::invalid("detector.dark_count_rate_s", "must be non-negative"));
        }
        if !(self.internal_gain > 0.0) {
            return Err(Error::invalid("detector.internal_gain", "must be positive"));
        }
        Ok(())
    }

    /// Responsivity in A/W at temperature `t` (K). Tables are interpolated
    /// log-log between points and held constant beyond their ends.
    pub fn responsivity_at(&self, t: f64, wavelength: Wavelength) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("temperature must be non-negative, got {t}")));
        }
        self.validate()?;
        if let Some(qe) = self.quantum_efficiency {
            return qe_to_responsivity(qe, wavelength);
        }
        let table = self.responsivity_table.as_ref().unwrap();
        let first = table[0];
        let last = table[table.len() - 1];
        if t <= first.temperature {
            return Ok(first.responsivity);
        }
        if t >= last.temperature {
            return Ok(last.responsivity);
        }
        let i = table.partition_point(|p| p.temperature <= t);
        let (a, b) = (table[i - 1], table[i]);
        if a.responsivity == b.responsivity {
            return Ok(a.responsivity);
        }
        if a.responsivity == 0.0 || b.responsivity == 0.0 {
            let w = (t - a.temperature) / (b.temperature - a.temperature);
            return Ok(a.responsivity + w * (b.responsivity - a.responsivity));
        }
        let w = (t.ln() - a.temperature.ln()) / (b.temperature.ln() - a.temperature.ln());
        Ok((a.responsivity.ln() + w * (b.responsivity.ln() - a.responsivity.ln())).exp())
    }

    pub fn quantum_efficiency_at(&self, t: f64, wavelength: Wavelength) -> Result<f64> {
        responsivity_to_qe(self.responsivity_at(t, wavelength)?, wavelength)
    }

    /// Detection efficiency in counting mode.
    pub fn counting_efficiency(&self, t: f64, wavelength: Wavelength) -> Result<f64> {
        self.quantum_efficiency_at(t, wavelength)
    }
}

/// Photocurrent for optical power `power` (W), including internal gain, A.
pub fn photocurrent(d: &DetectorSpec, power: f64, t: f64, wavelength: Wavelength) -> Result<f64> {
    if !(power >= 0.0) {
        return Err(Error::Domain(format!("negative optical power {power}")));
    }
    Ok(power * d.responsivity_at(t, wavelength)? * d.internal_gain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn w() -> Wavelength {
        Wavelength::sr_cooling()
    }

    #[test]
    fn table_examples() {
        let d = DetectorSpec::cryo_photodiode();
        assert_eq!(d.responsivity_at(77.0, w()).unwrap(), 0.1);
        assert_eq!(d.responsivity_at(4.0, w()).unwrap(), 0.01);
        assert_eq!(d.responsivity_at(1.0, w()).unwrap(), 0.01);
        assert_eq!(d.responsivity_at(0.0, w()).unwrap(), 0.01);
        assert_eq!(d.responsivity_at(400.0, w()).unwrap(), 0.1);
        // log-log midpoint
        let mid = (4.0f64 * 77.0).sqrt();
        assert_relative_eq!(d.responsivity_at(mid, w()).unwrap(), (0.01f64 * 0.1).sqrt(), max_relative = 1e-12);
        assert!(d.responsivity_at(-1.0, w()).is_err());
    }

    #[test]
    fn photocurrent_examples() {
        let d = DetectorSpec::cryo_photodiode();
        assert_relative_eq!(photocurrent(&d, 60e-12, 77.0, w()).unwrap(), 6e-12, max_relative = 1e-12);
        assert_relative_eq!(photocurrent(&d, 60e-12, 4.0, w()).unwrap(), 0.6e-12, max_relative = 1e-12);
        assert!(photocurrent(&d, -1.0, 77.0, w()).is_err());
    }

    #[test]
    fn qe_detector_roundtrip() {
        let d = DetectorSpec::vlpc();
        assert_relative_eq!(d.quantum_efficiency_at(6.0, w()).unwrap(), 0.88, max_relative = 1e-12);
        let pd = DetectorSpec::cryo_photodiode();
        assert_relative_eq!(pd.quantum_efficiency_at(77.0, w()).unwrap(), 0.2938, max_relative = 1e-3);
    }

    #[test]
    fn validation() {
        let mut d = DetectorSpec::cryo_photodiode();
        d.quantum_efficiency = Some(0.5);
        assert!(d.validate().is_err());
        d.responsivity_table = None;
        d.validate().unwrap();
        d.quantum_efficiency = Some(1.5);
        assert!(d.validate().is_err());
        let mut d = DetectorSpec::cryo_photodiode();
        d.responsivity_table.as_mut().unwrap().swap(0, 1);
        assert!(d.validate().is_err());
    }

    proptest::proptest! {
        #[test]
        fn interpolation_within_bracket(t in 0.0f64..500.0) {
            let r = DetectorSpec::cryo_photodiode().responsivity_at(t, w()).unwrap();
            proptest::prop_assert!((0.01..=0.1).contains(&r));
        }
    }
}
