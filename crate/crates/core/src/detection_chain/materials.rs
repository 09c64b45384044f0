//! Transparent electrode film stacks: optical transmission and sheet resistance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bulk resistivity of gold, Ω·m.
pub const GOLD_BULK_RESISTIVITY: f64 = 2.44e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilmLayer {
    pub label: String,
    #[serde(rename = "thickness_m")]
    pub thickness: f64,
    /// Transmission at the detection wavelength.
    pub transmission: f64,
    #[serde(rename = "resistivity_ohm_m", default, skip_serializing_if = "Option::is_none")]
    pub resistivity: Option<f64>,
}

impl FilmLayer {
    pub fn new(label: &str, thickness: f64, transmission: f64, resistivity: Option<f64>) -> Self {
        FilmLayer {
            label: label.to_string(),
            thickness,
            transmission,
            resistivity,
        }
    }
}

/// A layer covering only part of the aperture (e.g. thin gold on the RF rails).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternedLayer {
    pub label: String,
    /// Fraction of the aperture covered.
    pub coverage: f64,
    pub transmission: f64,
}

/// Ordered layers on a substrate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilmStack {
    pub layers: Vec<FilmLayer>,
    pub substrate_transmission: f64,
    /// Area-weighted partial layer; off unless configured.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patterned: Option<PatternedLayer>,
}

fn unit_interval(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

impl FilmStack {
    pub fn validate(&self) -> Result<()> {
        for (i, l) in self.layers.iter().enumerate() {
            if !unit_interval(l.transmission) {
                return Err(Error::invalid(format!("stack.layers[{i}].transmission"), "must lie in [0, 1]"));
            }
            if !(l.thickness > 0.0) {
                return Err(Error::invalid(format!("stack.layers[{i}].thickness_m"), "must be positive"));
            }
            if let Some(r) = l.resistivity {
                if !(r > 0.0) {
                    return Err(Error::invalid(format!("stack.layers[{i}].resistivity_ohm_m"), "must be positive"));
                }
            }
        }
        if !unit_interval(self.substrate_transmission) {
            return Err(Error::invalid("stack.substrate_transmission", "must lie in [0, 1]"));
        }
        if let Some(p) = &self.patterned {
            if !unit_interval(p.coverage) || !unit_interval(p.transmission) {
                return Err(Error::invalid("stack.patterned", "coverage and transmission must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    /// 400 nm sputtered ITO whose measured transmission, quartz substrate
    /// included, is 60 % at 422 nm.
    pub fn ito_on_quartz(resistivity: f64) -> Self {
        FilmStack {
            layers: vec![FilmLayer::new("ITO (incl. quartz)", 400e-9, 0.60, Some(resistivity))],
            substrate_transmission: 1.0,
            patterned: None,
        }
    }

    /// Commercial-grade ITO on quartz with 10 % total loss.
    pub fn commercial_ito() -> Self {
        FilmStack {
            layers: vec![FilmLayer::new("commercial ITO", 400e-9, 0.90, None)],
            substrate_transmission: 1.0,
            patterned: None,
        }
    }

    /// No film: free-space optics.
    pub fn empty() -> Self {
        FilmStack {
            layers: vec![],
            substrate_transmission: 1.0,
            patterned: None,
        }
    }

    /// Product of layer transmissions and the substrate, with the patterned
    /// layer (if any) area-weighted.
    pub fn stack_transmission(&self) -> f64 {
        let base: f64 = self.layers.iter().map(|l| l.transmission).product::<f64>() * self.substrate_transmission;
        match &self.patterned {
            Some(p) => base * (1.0 - p.coverage + p.coverage * p.transmission),
            None => base,
        }
    }

    /// Parallel-conductance sheet resistance 1 / Σ(t_i / ρ_i), Ω/□.
    pub fn effective_sheet_resistance(&self) -> Result<f64> {
        if self.layers.is_empty() {
            return Err(Error::Domain("stack has no conducting layers".into()));
        }
        let mut conductance = 0.0;
        for l in &self.layers {
            let rho = l
                .resistivity
                .ok_or_else(|| Error::Domain(format!("layer '{}' has no resistivity", l.label)))?;
            conductance += l.thickness / rho;
        }
        Ok(1.0 / conductance)
    }

    /// Sheet resistance expressed as a resistivity over `reference_thickness`.
    pub fn effective_resistivity(&self, reference_thickness: f64) -> Result<f64> {
        if !(reference_thickness > 0.0) {
            return Err(Error::Domain("reference thickness must be positive".into()));
        }
        Ok(self.effective_sheet_resistance()? * reference_thickness)
    }

    pub fn total_thickness(&self) -> f64 {
        self.layers.iter().map(|l| l.thickness).sum()
    }
}
