//! Solid-angle collection onto a planar detector beneath the trap.

use serde::{Deserialize, Serialize};

use super::materials::FilmStack;
use crate::electrostatics::{unit_potential, Point, RectElectrode, Role};
use crate::error::{Error, Result};

/// Detector active area in the detector plane, relative to the point
/// directly below the ion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aperture {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Aperture {
    pub fn centered_square(half_side: f64) -> Self {
        Aperture {
            x_min: -half_side,
            x_max: half_side,
            y_min: -half_side,
            y_max: half_side,
        }
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }
}

/// Ion above the electrode plane, substrate below it, detector after a gap.
/// Refraction in the substrate is not modelled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollectionGeometry {
    #[serde(rename = "ion_height_m")]
    pub ion_height: f64,
    #[serde(rename = "substrate_thickness_m")]
    pub substrate_thickness: f64,
    #[serde(rename = "gap_m")]
    pub gap: f64,
    #[serde(rename = "aperture_m")]
    pub aperture: Aperture,
}

impl CollectionGeometry {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("geometry.ion_height_m", self.ion_height),
            ("geometry.substrate_thickness_m", self.substrate_thickness),
            ("geometry.gap_m", self.gap),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, "must be finite and non-negative"));
            }
        }
        let a = &self.aperture;
        if !(a.x_min < a.x_max && a.y_min < a.y_max) {
            return Err(Error::invalid("geometry.aperture_m", "degenerate aperture"));
        }
        Ok(())
    }

    /// Ion-to-detector-plane distance.
    pub fn standoff(&self) -> f64 {
        self.ion_height + self.substrate_thickness + self.gap
    }

    /// Half-side of a centered square aperture that subtends `fraction` of
    /// 4π at this standoff. Only fractions below 1/2 are reachable.
    pub fn square_half_side_for_fraction(standoff: f64, fraction: f64) -> Result<f64> {
        if !(fraction > 0.0 && fraction < 0.5) {
            return Err(Error::Domain(format!("fraction {fraction} outside (0, 1/2)")));
        }
        let f = |s: f64| {
            let g = CollectionGeometry {
                ion_height: standoff,
                substrate_thickness: 0.0,
                gap: 0.0,
                aperture: Aperture::centered_square(s),
            };
            solid_angle_fraction(&g).unwrap() - fraction
        };
        let (mut lo, mut hi) = (1e-9 * standoff, standoff);
        while f(hi) < 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Fraction of 4π subtended by the aperture at the ion.
///
/// The solid angle of a rectangle seen from height d is the same signed
/// corner sum as the gapless-plane electrode potential (which is Ω / 2π).
pub fn solid_angle_fraction(g: &CollectionGeometry) -> Result<f64> {
    g.validate()?;
    let d = g.standoff();
    if !(d > 0.0) {
        return Err(Error::Domain("ion lies in the detector plane".into()));
    }
    let a = &g.aperture;
    let rect = RectElectrode {
        name: None,
        x_min: a.x_min,
        x_max: a.x_max,
        y_min: a.y_min,
        y_max: a.y_max,
        role: Role::Ground,
        voltage: 0.0,
    };
    Ok(0.5 * unit_potential(&rect, &Point::new(0.0, 0.0, d))?)
}

/// Solid-angle fraction times film-stack transmission.
pub fn collection_efficiency(g: &CollectionGeometry, stack: &FilmStack) -> Result<f64> {
    stack.validate()?;
    Ok(solid_angle_fraction(g)? * stack.stack_transmission())
}

/// Optical power reaching the detector, W.
pub fn power_at_detector(emitted_power: f64, efficiency: f64) -> Result<f64> {
    if !(emitted_power >= 0.0) {
        return Err(Error::Domain(format!("negative emitted power {emitted_power}")));
    }
    if !(0.0..=1.0).contains(&efficiency) {
        return Err(Error::Domain(format!("efficiency {efficiency} outside [0, 1]")));
    }
    Ok(emitted_power * efficiency)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn square(d: f64, half: f64) -> CollectionGeometry {
        CollectionGeometry {
            ion_height: d,
            substrate_thickness: 0.0,
            gap: 0.0,
            aperture: Aperture::centered_square(half),
        }
    }

    /// Solid angle of a centered a×b rectangle at distance d:
    /// 4·asin(ab / sqrt((a² + 4d²)(b² + 4d²))).
    fn rectangle_oracle(a: f64, b: f64, d: f64) -> f64 {
        4.0 * (a * b / ((a * a + 4.0 * d * d) * (b * b + 4.0 * d * d)).sqrt()).asin() / (4.0 * std::f64::consts::PI)
    }

    #[test]
    fn matches_closed_form() {
        for (half, d) in [(1.0, 1.0), (10e-3, 0.3e-3), (0.5, 3.0)] {
            assert_relative_eq!(
                solid_angle_fraction(&square(d, half)).unwrap(),
                rectangle_oracle(2.0 * half, 2.0 * half, d),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn limits() {
        // huge aperture approaches a hemisphere
        let f = solid_angle_fraction(&square(1e-6, 1.0)).unwrap();
        assert!((f - 0.5).abs() < 1e-5);
        // tiny aperture approaches area / (4π d²)
        let f = solid_angle_fraction(&square(1.0, 1e-4)).unwrap();
        assert_relative_eq!(f, 4e-8 / (4.0 * std::f64::consts::PI), max_relative = 1e-6);
    }

    #[test]
    fn degenerate_inputs_rejected() {
        let mut g = square(1.0, 1.0);
        g.aperture.x_max = g.aperture.x_min;
        assert!(solid_angle_fraction(&g).is_err());
        assert!(solid_angle_fraction(&square(0.0, 1.0)).is_err());
        assert!(power_at_detector(-1.0, 0.5).is_err());
        assert!(power_at_detector(1.0, 1.5).is_err());
    }

    #[test]
    fn half_side_inverse() {
        let s = CollectionGeometry::square_half_side_for_fraction(30e-3, 0.05).unwrap();
        assert_relative_eq!(solid_angle_fraction(&square(30e-3, s)).unwrap(), 0.05, max_relative = 1e-12);
        assert!(CollectionGeometry::square_half_side_for_fraction(1.0, 0.6).is_err());
    }

    #[test]
    fn efficiency_and_power() {
        let g = square(1.0, 1.0);
        let eff = collection_efficiency(&g, &FilmStack::ito_on_quartz(1e-5)).unwrap();
        assert_relative_eq!(eff, 0.6 * solid_angle_fraction(&g).unwrap(), max_relative = 1e-15);
        assert_relative_eq!(power_at_detector(200e-12, 0.3).unwrap(), 60e-12, max_relative = 1e-15);
    }

    proptest::proptest! {
        #[test]
        fn fraction_in_unit_half(d in 1e-5f64..1.0, half in 1e-5f64..1.0, dx in -1.0f64..1.0) {
            let mut g = square(d, half);
            g.aperture.x_min += dx;
            g.aperture.x_max += dx;
            let f = solid_angle_fraction(&g).unwrap();
            proptest::prop_assert!(f > 0.0 && f <= 0.5);
        }

        #[test]
        fn fraction_monotone_in_aperture(d in 1e-4f64..1e-2, half in 1e-4f64..1e-2, grow in 1.0f64..3.0) {
            let small = solid_angle_fraction(&square(d, half)).unwrap();
            let big = solid_angle_fraction(&square(d, half * grow)).unwrap();
            proptest::prop_assert!(big >= small);
        }
    }
}
