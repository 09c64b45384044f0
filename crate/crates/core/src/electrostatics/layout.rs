use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::basis::{unit_gradient_unchecked, unit_jet_unchecked, unit_potential_unchecked, Point, RectElectrode, Role};
use crate::error::{Error, Result};
use crate::units::C;

/// Anything with an energy landscape the trap solvers can work on.
///
/// Energies are in joules, lengths in meters.
pub trait TrapPotential {
    fn energy(&self, p: &Point) -> Result<f64>;
    fn gradient(&self, p: &Point) -> Result<Vector3<f64>>;
    fn mass(&self) -> f64;

    /// Hessian by Richardson-extrapolated central differences of the gradient.
    fn hessian(&self, p: &Point) -> Result<Matrix3<f64>> {
        richardson_hessian(|q| self.gradient(q), p, 1e-3 * p.z.abs().max(1e-9))
    }

    /// A length over which the landscape changes appreciably.
    fn length_scale(&self, p: &Point) -> f64 {
        p.z.abs().max(1e-9)
    }
}

/// Richardson-extrapolated Jacobian of a vector field, symmetrized.
pub fn richardson_hessian<F>(grad: F, p: &Point, step: f64) -> Result<Matrix3<f64>>
where
    F: Fn(&Point) -> Result<Vector3<f64>>,
{
    let central = |h: f64| -> Result<Matrix3<f64>> {
        let mut m = Matrix3::zeros();
        for k in 0..3 {
            let mut d = Vector3::zeros();
            d[k] = h;
            let col = (grad(&(p + d))? - grad(&(p - d))?) / (2.0 * h);
            m.set_column(k, &col);
        }
        Ok(m)
    };
    let coarse = central(step)?;
    let fine = central(0.5 * step)?;
    let r = (fine * 4.0 - coarse) / 3.0;
    Ok((r + r.transpose()) * 0.5)
}

/// A surface-electrode trap: electrode set, RF drive and ion species.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapLayout {
    pub electrodes: Vec<RectElectrode>,
    /// RF amplitude in volts; each RF electrode's `voltage` is a weight on it.
    #[serde(rename = "rf_amplitude_v")]
    pub rf_amplitude: f64,
    #[serde(rename = "rf_angular_frequency_rad_s")]
    pub rf_angular_frequency: f64,
    #[serde(rename = "ion_mass_kg")]
    pub ion_mass: f64,
    #[serde(rename = "ion_charge_c")]
    pub ion_charge: f64,
}

/// 2π × 35 MHz.
pub const DEFAULT_RF_ANGULAR_FREQUENCY: f64 = 2.0 * std::f64::consts::PI * 35e6;

impl TrapLayout {
    /// Layout for a singly charged 88Sr+ ion driven at 2π × 35 MHz.
    pub fn sr88(electrodes: Vec<RectElectrode>, rf_amplitude: f64) -> Result<Self> {
        let layout = TrapLayout {
            electrodes,
            rf_amplitude,
            rf_angular_frequency: DEFAULT_RF_ANGULAR_FREQUENCY,
            ion_mass: C.sr88_mass,
            ion_charge: C.elementary_charge,
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.electrodes.iter().any(|e| e.role == Role::Rf) {
            return Err(Error::invalid("electrodes", "layout needs at least one RF electrode"));
        }
        if !(self.rf_angular_frequency > 0.0) || !self.rf_angular_frequency.is_finite() {
            return Err(Error::invalid("rf_angular_frequency_rad_s", "must be positive"));
        }
        if !(self.ion_mass > 0.0) {
            return Err(Error::invalid("ion_mass_kg", "must be positive"));
        }
        if self.ion_charge == 0.0 || !self.ion_charge.is_finite() {
            return Err(Error::invalid("ion_charge_c", "must be non-zero"));
        }
        if !self.rf_amplitude.is_finite() {
            return Err(Error::invalid("rf_amplitude_v", "must be finite"));
        }
        for (i, e) in self.electrodes.iter().enumerate() {
            e.validate().map_err(|err| Error::invalid(format!("electrodes[{i}]"), err.to_string()))?;
            if e.role == Role::Ground && e.voltage != 0.0 {
                return Err(Error::invalid(format!("electrodes[{i}].voltage"), "ground electrode must be at 0 V"));
            }
        }
        for i in 0..self.electrodes.len() {
            for j in (i + 1)..self.electrodes.len() {
                if self.electrodes[i].overlaps(&self.electrodes[j]) {
                    return Err(Error::invalid(
                        "electrodes",
                        format!("electrodes {i} and {j} overlap"),
                    ));
                }
            }
        }
        Ok(())
    }

    fn rf(&self) -> impl Iterator<Item = &RectElectrode> {
        self.electrodes.iter().filter(|e| e.role == Role::Rf)
    }

    fn statics(&self) -> impl Iterator<Item = &RectElectrode> {
        self.electrodes
            .iter()
            .filter(|e| e.role != Role::Rf && e.voltage != 0.0)
    }

    /// Static (DC) potential in volts.
    pub fn potential(&self, p: &Point) -> Result<f64> {
        check(p)?;
        Ok(self.statics().map(|e| e.voltage * unit_potential_unchecked(e, p)).sum())
    }

    /// Gradient of the static potential, V/m.
    pub fn static_gradient(&self, p: &Point) -> Result<Vector3<f64>> {
        check(p)?;
        Ok(self
            .statics()
            .fold(Vector3::zeros(), |acc, e| acc + unit_gradient_unchecked(e, p) * e.voltage))
    }

    /// RF potential amplitude at `p`, volts.
    pub fn rf_potential(&self, p: &Point) -> Result<f64> {
        check(p)?;
        Ok(self.rf_amplitude * self.rf().map(|e| e.voltage * unit_potential_unchecked(e, p)).sum::<f64>())
    }

    /// Gradient of the RF potential amplitude, V/m.
    pub fn rf_field_gradient(&self, p: &Point) -> Result<Vector3<f64>> {
        check(p)?;
        Ok(self
            .rf()
            .fold(Vector3::zeros(), |acc, e| acc + unit_gradient_unchecked(e, p) * e.voltage)
            * self.rf_amplitude)
    }

    /// Gradient and Hessian of the RF potential amplitude.
    pub fn rf_jet(&self, p: &Point) -> Result<(Vector3<f64>, Matrix3<f64>)> {
        check(p)?;
        let mut g = Vector3::zeros();
        let mut h = Matrix3::zeros();
        for e in self.rf() {
            let jet = unit_jet_unchecked(e, p);
            g += jet.gradient * e.voltage;
            h += jet.hessian * e.voltage;
        }
        Ok((g * self.rf_amplitude, h * self.rf_amplitude))
    }

    fn ponderomotive_prefactor(&self) -> f64 {
        self.ion_charge * self.ion_charge / (4.0 * self.ion_mass * self.rf_angular_frequency.powi(2))
    }

    /// Ponderomotive energy q²|∇V_RF|²/(4mΩ²), joules.
    pub fn ponderomotive_energy(&self, p: &Point) -> Result<f64> {
        Ok(self.ponderomotive_prefactor() * self.rf_field_gradient(p)?.norm_squared())
    }

    /// Total pseudopotential (ponderomotive + q·V_DC) in eV.
    pub fn pseudopotential(&self, p: &Point) -> Result<f64> {
        Ok(self.energy(p)? / C.elementary_charge)
    }

    /// Ponderomotive term alone in eV.
    pub fn rf_pseudopotential(&self, p: &Point) -> Result<f64> {
        Ok(self.ponderomotive_energy(p)? / C.elementary_charge)
    }

    /// Copy with every length multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        TrapLayout {
            electrodes: self.electrodes.iter().map(|e| e.scaled(s)).collect(),
            ..self.clone()
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        TrapLayout {
            electrodes: self.electrodes.iter().map(|e| e.translated(dx, dy)).collect(),
            ..self.clone()
        }
    }

    /// Copy with static voltages set to zero.
    pub fn rf_only(&self) -> Self {
        TrapLayout {
            electrodes: self
                .electrodes
                .iter()
                .map(|e| {
                    let mut e = e.clone();
                    if e.role != Role::Rf {
                        e.voltage = 0.0;
                    }
                    e
                })
                .collect(),
            ..self.clone()
        }
    }

    pub fn with_rf_amplitude(&self, v: f64) -> Self {
        TrapLayout {
            rf_amplitude: v,
            ..self.clone()
        }
    }

    /// Copy with every electrode voltage (static and RF amplitude) scaled by `s`.
    pub fn with_voltages_scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.rf_amplitude *= s;
        for e in out.electrodes.iter_mut().filter(|e| e.role != Role::Rf) {
            e.voltage *= s;
        }
        out
    }

    /// Largest Mathieu stability parameter |q_i| = 2·Q·|λ_i| / (m·Ω²) at `p`,
    /// with λ_i the eigenvalues of the RF potential Hessian.
    pub fn mathieu_q(&self, p: &Point) -> Result<f64> {
        let (_, h) = self.rf_jet(p)?;
        let eig = h.symmetric_eigenvalues();
        let lam = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(2.0 * self.ion_charge.abs() * lam / (self.ion_mass * self.rf_angular_frequency.powi(2)))
    }

    /// Characteristic energy used to scale solver tolerances, joules.
    pub fn energy_scale(&self, length: f64) -> f64 {
        let field = self.rf_amplitude.abs() / length;
        let dc = self
            .electrodes
            .iter()
            .filter(|e| e.role != Role::Rf)
            .fold(0.0f64, |m, e| m.max(e.voltage.abs()));
        self.ponderomotive_prefactor() * field * field + self.ion_charge.abs() * dc
    }
}

fn check(p: &Point) -> Result<()> {
    if p.z > 0.0 && p.z.is_finite() && p.x.is_finite() && p.y.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("field point must lie above the plane, got {p:?}")))
    }
}

impl TrapPotential for TrapLayout {
    fn energy(&self, p: &Point) -> Result<f64> {
        Ok(self.ponderomotive_energy(p)? + self.ion_charge * self.potential(p)?)
    }

    fn gradient(&self, p: &Point) -> Result<Vector3<f64>> {
        let (g, h) = self.rf_jet(p)?;
        Ok(h * g * (2.0 * self.ponderomotive_prefactor()) + self.static_gradient(p)? * self.ion_charge)
    }

    fn mass(&self) -> f64 {
        self.ion_mass
    }

    /// H = 2k·(H_rf² + Σ_k E_k ∂_k H_rf) + q·H_dc. Only the third-derivative
    /// term ∂_k H_rf is differenced; it vanishes at an RF null.
    fn hessian(&self, p: &Point) -> Result<Matrix3<f64>> {
        check(p)?;
        let k2 = 2.0 * self.ponderomotive_prefactor();
        let (g, h) = self.rf_jet(p)?;
        let mut out = h * h;
        let step = 1e-3 * p.z;
        if g.norm() > 0.0 {
            let dh = |dir: usize, s: f64| -> Result<Matrix3<f64>> {
                let mut d = Vector3::zeros();
                d[dir] = s;
                Ok((self.rf_jet(&(p + d))?.1 - self.rf_jet(&(p - d))?.1) / (2.0 * s))
            };
            for k in 0..3 {
                let third = (dh(k, 0.5 * step)? * 4.0 - dh(k, step)?) / 3.0;
                out += third * g[k];
            }
        }
        let mut hdc = Matrix3::zeros();
        for e in self.statics() {
            hdc += unit_jet_unchecked(e, p).hessian * e.voltage;
        }
        let total = out * k2 + hdc * self.ion_charge;
        Ok((total + total.transpose()) * 0.5)
    }
}
