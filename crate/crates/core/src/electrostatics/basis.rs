//! Gapless-plane potential of a single rectangular electrode.
//!
//! With electrode `e` held at 1 V and the rest of the z = 0 plane grounded, the
//! potential above the plane equals the solid angle subtended by the rectangle
//! divided by 2π. The closed form is a signed sum of four corner terms
//! `atan(u·v / (z·r))`, `r = sqrt(u² + v² + z²)`, whose first and second
//! derivatives are rational in `(u, v, z, r)`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = Vector3<f64>;

/// Electrical role of an electrode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Rf,
    Dc,
    Ground,
}

/// Axis-aligned rectangular electrode in the z = 0 plane.
///
/// `voltage` is a static potential for DC/ground electrodes and a relative
/// amplitude weight for RF electrodes (multiplied by the layout's RF amplitude).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectElectrode {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub role: Role,
    pub voltage: f64,
}

impl RectElectrode {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64, role: Role, voltage: f64) -> Result<Self> {
        let e = RectElectrode {
            name: None,
            x_min,
            x_max,
            y_min,
            y_max,
            role,
            voltage,
        };
        e.validate()?;
        Ok(e)
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.x_max, self.y_min, self.y_max, self.voltage]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("electrode", "non-finite coordinate or voltage"));
        }
        if !(self.x_min < self.x_max) || !(self.y_min < self.y_max) {
            return Err(Error::invalid(
                "electrode",
                format!(
                    "degenerate rectangle x=[{}, {}] y=[{}, {}]",
                    self.x_min, self.x_max, self.y_min, self.y_max
                ),
            ));
        }
        Ok(())
    }

    /// True when the interiors of the two rectangles intersect.
    pub fn overlaps(&self, other: &RectElectrode) -> bool {
        self.x_min < other.x_max
            && other.x_min < self.x_max
            && self.y_min < other.y_max
            && other.y_min < self.y_max
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        RectElectrode {
            x_min: self.x_min + dx,
            x_max: self.x_max + dx,
            y_min: self.y_min + dy,
            y_max: self.y_max + dy,
            ..self.clone()
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        RectElectrode {
            x_min: self.x_min * s,
            x_max: self.x_max * s,
            y_min: self.y_min * s,
            y_max: self.y_max * s,
            ..self.clone()
        }
    }

    fn corners(&self) -> [(f64, f64, f64); 4] {
        // (x_i, y_j, (-1)^(i+j))
        [
            (self.x_min, self.y_min, 1.0),
            (self.x_min, self.y_max, -1.0),
            (self.x_max, self.y_min, -1.0),
            (self.x_max, self.y_max, 1.0),
        ]
    }
}

/// Value, gradient and Hessian of a unit basis function at one point.
#[derive(Debug, Clone, Copy)]
pub struct BasisJet {
    pub value: f64,
    pub gradient: Vector3<f64>,
    pub hessian: Matrix3<f64>,
}

fn check_height(p: &Point) -> Result<()> {
    if p.z > 0.0 && p.z.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "field point must lie above the electrode plane (z = {})",
            p.z
        )))
    }
}

const INV_2PI: f64 = 0.5 * std::f64::consts::FRAC_1_PI;

/// Potential at `p` when `e` is at 1 V and the remaining plane is grounded.
pub fn unit_potential(e: &RectElectrode, p: &Point) -> Result<f64> {
    check_height(p)?;
    Ok(unit_potential_unchecked(e, p))
}

pub(crate) fn unit_potential_unchecked(e: &RectElectrode, p: &Point) -> f64 {
    let z = p.z;
    let mut s = 0.0;
    for (xi, yj, sign) in e.corners() {
        let u = p.x - xi;
        let v = p.y - yj;
        let r = (u * u + v * v + z * z).sqrt();
        s += sign * (u * v).atan2(z * r);
    }
    s * INV_2PI
}

/// Gradient of [`unit_potential`] with respect to the field point, 1/m.
pub fn unit_gradient(e: &RectElectrode, p: &Point) -> Result<Vector3<f64>> {
    check_height(p)?;
    Ok(unit_gradient_unchecked(e, p))
}

pub(crate) fn unit_gradient_unchecked(e: &RectElectrode, p: &Point) -> Vector3<f64> {
    let z = p.z;
    let z2 = z * z;
    let mut g = Vector3::zeros();
    for (xi, yj, sign) in e.corners() {
        let u = p.x - xi;
        let v = p.y - yj;
        let r2 = u * u + v * v + z2;
        let r = r2.sqrt();
        let a = u * u + z2;
        let b = v * v + z2;
        g.x += sign * v * z / (r * a);
        g.y += sign * u * z / (r * b);
        g.z -= sign * u * v * (r2 + z2) / (r * a * b);
    }
    g * INV_2PI
}

/// Value, gradient and Hessian together.
pub fn unit_jet(e: &RectElectrode, p: &Point) -> Result<BasisJet> {
    check_height(p)?;
    Ok(unit_jet_unchecked(e, p))
}

pub(crate) fn unit_jet_unchecked(e: &RectElectrode, p: &Point) -> BasisJet {
    let z = p.z;
    let z2 = z * z;
    let mut value = 0.0;
    let mut g = Vector3::zeros();
    let (mut hxx, mut hyy, mut hxy, mut hxz, mut hyz) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (xi, yj, sign) in e.corners() {
        let u = p.x - xi;
        let v = p.y - yj;
        let r2 = u * u + v * v + z2;
        let r = r2.sqrt();
        let r3 = r2 * r;
        let a = u * u + z2;
        let b = v * v + z2;
        let uv = u * v;
        let rho2 = u * u + v * v;

        value += sign * uv.atan2(z * r);
        g.x += sign * v * z / (r * a);
        g.y += sign * u * z / (r * b);
        g.z -= sign * uv * (r2 + z2) / (r * a * b);

        hxx -= sign * uv * z * (a + 2.0 * r2) / (r3 * a * a);
        hyy -= sign * uv * z * (b + 2.0 * r2) / (r3 * b * b);
        hxy += sign * z / r3;
        hxz += sign * v * (rho2 * a - 2.0 * z2 * r2) / (r3 * a * a);
        hyz += sign * u * (rho2 * b - 2.0 * z2 * r2) / (r3 * b * b);
    }
    // Laplace's equation fixes the zz entry.
    let hzz = -(hxx + hyy);
    let hessian = Matrix3::new(hxx, hxy, hxz, hxy, hyy, hyz, hxz, hyz, hzz);
    BasisJet {
        value: value * INV_2PI,
        gradient: g * INV_2PI,
        hessian: hessian * INV_2PI,
    }
}
