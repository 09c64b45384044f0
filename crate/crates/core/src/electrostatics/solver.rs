//! Trap minimum, secular frequencies and escape-saddle depth.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::basis::Point;
use super::layout::{TrapLayout, TrapPotential};
use crate::error::{Error, Result};
use crate::units::C;

/// Gradient tolerance relative to `energy_scale / length_scale`.
pub const GRADIENT_TOLERANCE: f64 = 1e-9;
pub const MAX_ITERATIONS: usize = 500;
/// Escape-path search extends to this multiple of the ion height.
pub const DEPTH_SEARCH_FACTOR: f64 = 10.0;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Result of a full trap solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapSolution {
    /// (x, y, z) in meters.
    pub minimum_position: [f64; 3],
    /// Ascending secular frequencies, Hz.
    pub secular_frequencies: [f64; 3],
    /// Unit eigenvectors matching `secular_frequencies`.
    pub principal_axes: [[f64; 3]; 3],
    /// Total depth (ponderomotive + DC), eV.
    pub trap_depth: f64,
    /// Depth of the ponderomotive well alone (static voltages zeroed), eV.
    pub rf_only_depth: f64,
    pub escape_position: [f64; 3],
    /// Largest Mathieu q at the minimum.
    pub mathieu_q: f64,
    /// Residual gradient norm at the minimum, J/m.
    pub gradient_norm: f64,
}

/// Minimum search report.
#[derive(Debug, Clone, Copy)]
pub struct Minimum {
    pub position: Point,
    pub iterations: usize,
    pub gradient_norm: f64,
}

fn energy_scale<P: TrapPotential + ?Sized>(pot: &P, p: &Point, len: f64) -> Result<f64> {
    let h = pot.hessian(p)?;
    let s = h.norm() * len * len;
    Ok(if s > 0.0 && s.is_finite() { s } else { 1.0 })
}

/// Local minimum of the total energy by BFGS with backtracking line search.
///
/// Works in coordinates scaled by the initial height so the problem is O(1).
pub fn find_minimum<P: TrapPotential + ?Sized>(pot: &P, initial_guess: &Point) -> Result<Minimum> {
    if !(initial_guess.z > 0.0) {
        return Err(Error::Domain(format!(
            "initial guess must lie above the plane (z = {})",
            initial_guess.z
        )));
    }
    let len = pot.length_scale(initial_guess);
    let e_scale = energy_scale(pot, initial_guess, len)?;
    let g_scale = e_scale / len;
    let tol = GRADIENT_TOLERANCE;

    let f = |x: &Vector3<f64>| -> Result<f64> { Ok(pot.energy(&(x * len))? / e_scale) };
    let grad = |x: &Vector3<f64>| -> Result<Vector3<f64>> { Ok(pot.gradient(&(x * len))? / g_scale) };

    let mut x = initial_guess / len;
    let mut fx = f(&x)?;
    let mut g = grad(&x)?;

    // Seed the inverse Hessian from the true curvature when it is positive definite.
    let h0 = pot.hessian(initial_guess)? * (len * len / e_scale);
    let mut inv = match h0.cholesky() {
        Some(ch) => ch.inverse(),
        None => Matrix3::identity(),
    };

    for it in 0..MAX_ITERATIONS {
        let gn = g.norm();
        if gn < tol {
            return finish(pot, x * len, it, gn * g_scale);
        }
        let mut dir = -(inv * g);
        if dir.dot(&g) >= 0.0 {
            inv = Matrix3::identity();
            dir = -g;
        }
        let slope = dir.dot(&g);
        let mut step = 1.0;
        // keep the trial point above the plane
        while x.z + step * dir.z <= 0.0 {
            step *= 0.5;
        }
        let mut accepted = None;
        for _ in 0..60 {
            let xn = x + dir * step;
            let fn_ = f(&xn)?;
            let noise = 1e-13 * fx.abs().max(1.0);
            if fn_ <= fx + 1e-4 * step * slope || (fn_ <= fx + noise && grad(&xn)?.norm() < gn) {
                accepted = Some((xn, fn_));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fn_)) = accepted else {
            return Err(Error::NoConvergence {
                iterations: it,
                gradient_norm: gn * g_scale,
                best: (x * len).into(),
            });
        };
        let gn_new = grad(&xn)?;
        let s = xn - x;
        let y = gn_new - g;
        let sy = s.dot(&y);
        if sy > 1e-300 {
            let rho = 1.0 / sy;
            let i = Matrix3::identity();
            inv = (i - s * y.transpose() * rho) * inv * (i - y * s.transpose() * rho) + s * s.transpose() * rho;
        }
        x = xn;
        fx = fn_;
        g = gn_new;
    }
    let gn = g.norm();
    if gn < tol {
        return finish(pot, x * len, MAX_ITERATIONS, gn * g_scale);
    }
    Err(Error::NoConvergence {
        iterations: MAX_ITERATIONS,
        gradient_norm: gn * g_scale,
        best: (x * len).into(),
    })
}

fn finish<P: TrapPotential + ?Sized>(_pot: &P, p: Point, iterations: usize, gradient_norm: f64) -> Result<Minimum> {
    if !(p.z > 0.0) {
        return Err(Error::InvalidLayout { z: p.z });
    }
    Ok(Minimum {
        position: p,
        iterations,
        gradient_norm,
    })
}

/// Secular modes at a minimum.
#[derive(Debug, Clone, Copy)]
pub struct SecularModes {
    /// Ascending, Hz.
    pub frequencies: [f64; 3],
    pub axes: [Vector3<f64>; 3],
    /// Hessian eigenvalues, J/m².
    pub curvatures: [f64; 3],
}

fn dominant_axis(v: &Vector3<f64>) -> usize {
    let mut best = 0;
    for k in 1..3 {
        if v[k].abs() > v[best].abs() {
            best = k;
        }
    }
    best
}

/// f_i = sqrt(λ_i / m) / 2π from the Hessian eigenvalues λ_i.
pub fn secular_frequencies<P: TrapPotential + ?Sized>(pot: &P, minimum: &Point) -> Result<SecularModes> {
    let h = pot.hessian(minimum)?;
    modes_from_hessian(&h, pot.mass())
}

pub fn modes_from_hessian(h: &Matrix3<f64>, mass: f64) -> Result<SecularModes> {
    let eig = h.symmetric_eigen();
    let mut pairs: Vec<(f64, Vector3<f64>)> = (0..3)
        .map(|i| {
            let mut v: Vector3<f64> = eig.eigenvectors.column(i).into();
            // fix the sign so the dominant component is positive
            if v[dominant_axis(&v)] < 0.0 {
                v = -v;
            }
            (eig.eigenvalues[i], v)
        })
        .collect();
    // ascending curvature; degenerate pairs fall back to lexicographic axis order
    let scale = h.trace().abs().max(f64::MIN_POSITIVE);
    pairs.sort_by(|a, b| {
        if (a.0 - b.0).abs() <= 1e-12 * scale {
            dominant_axis(&a.1).cmp(&dominant_axis(&b.1))
        } else {
            a.0.partial_cmp(&b.0).unwrap()
        }
    });
    for (lam, v) in &pairs {
        if !(*lam > 0.0) {
            return Err(Error::UnstableTrap {
                axis: dominant_axis(v),
                eigenvalue: *lam,
            });
        }
    }
    Ok(SecularModes {
        frequencies: [0, 1, 2].map(|i| (pairs[i].0 / mass).sqrt() / TWO_PI),
        axes: [0, 1, 2].map(|i| pairs[i].1),
        curvatures: [0, 1, 2].map(|i| pairs[i].0),
    })
}

/// Escape barrier along the vertical path above a minimum.
#[derive(Debug, Clone, Copy)]
pub struct Depth {
    /// Joules.
    pub depth: f64,
    pub escape_position: Point,
}

impl Depth {
    pub fn depth_ev(&self) -> f64 {
        self.depth / C.elementary_charge
    }
}

/// Minimize the energy over (x, y) at fixed height, starting from `start`.
fn transverse_minimum<P: TrapPotential + ?Sized>(pot: &P, start: &Point, len: f64) -> Result<Point> {
    let mut p = *start;
    for _ in 0..30 {
        let g = pot.gradient(&p)?;
        let h = pot.hessian(&p)?;
        let g2 = Vector2::new(g.x, g.y);
        let h2 = Matrix2::new(h[(0, 0)], h[(0, 1)], h[(1, 0)], h[(1, 1)]);
        let scale = h2.norm().max(f64::MIN_POSITIVE);
        if g2.norm() <= 1e-12 * scale * len {
            break;
        }
        let step = match h2.cholesky() {
            Some(ch) => -ch.solve(&g2),
            // not convex transversally here; stay on the current column
            None => break,
        };
        let limited = if step.norm() > 0.2 * len { step * (0.2 * len / step.norm()) } else { step };
        let e0 = pot.energy(&p)?;
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..20 {
            let q = Point::new(p.x + t * limited.x, p.y + t * limited.y, p.z);
            if pot.energy(&q)? <= e0 {
                p = q;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    Ok(p)
}

/// Depth as the first barrier along the vertical escape path above `minimum`,
/// with the path relaxed transversally at each height.
pub fn trap_depth<P: TrapPotential + ?Sized>(pot: &P, minimum: &Point) -> Result<Depth> {
    let z0 = minimum.z;
    if !(z0 > 0.0) {
        return Err(Error::Domain("minimum must lie above the plane".into()));
    }
    let len = z0;
    let e_min = pot.energy(minimum)?;
    let bound = DEPTH_SEARCH_FACTOR * z0;
    let n = 300;
    let dz = (bound - z0) / n as f64;

    let profile = |z: f64, seed: &Point| -> Result<(f64, Point)> {
        let start = Point::new(seed.x, seed.y, z);
        let p = transverse_minimum(pot, &start, len)?;
        Ok((pot.energy(&p)?, p))
    };

    let mut pts = Vec::with_capacity(n + 1);
    let mut seed = *minimum;
    pts.push((e_min, *minimum));
    for i in 1..=n {
        let z = z0 + dz * i as f64;
        let (e, p) = profile(z, &seed)?;
        seed = p;
        pts.push((e, p));
        // first local maximum along the path
        if i >= 2 && pts[i - 1].0 > pts[i - 2].0 && pts[i - 1].0 >= e {
            let (mut a, mut b) = (pts[i - 2].1, pts[i].1);
            let phi = 0.5 * (5f64.sqrt() - 1.0);
            let mut c = b.z - phi * (b.z - a.z);
            let mut d = a.z + phi * (b.z - a.z);
            let mut fc = profile(c, &pts[i - 1].1)?;
            let mut fd = profile(d, &pts[i - 1].1)?;
            while (b.z - a.z) > 1e-10 * z0 {
                if fc.0 > fd.0 {
                    b = fd.1;
                    d = c;
                    fd = fc;
                    c = b.z - phi * (b.z - a.z);
                    fc = profile(c, &fd.1)?;
                } else {
                    a = fc.1;
                    c = d;
                    fc = fd;
                    d = a.z + phi * (b.z - a.z);
                    fd = profile(d, &fc.1)?;
                }
            }
            let best = if fc.0 > fd.0 { fc } else { fd };
            let best = if pts[i - 1].0 > best.0 { pts[i - 1] } else { best };
            return Ok(Depth {
                depth: (best.0 - e_min).max(0.0),
                escape_position: best.1,
            });
        }
    }
    Err(Error::UnboundedSearch { bound })
}

/// Solve a layout from a starting guess: minimum, modes, depths and Mathieu q.
pub fn solve(layout: &TrapLayout, initial_guess: &Point) -> Result<TrapSolution> {
    layout.validate()?;
    let min = find_minimum(layout, initial_guess)?;
    let modes = secular_frequencies(layout, &min.position)?;
    let depth = trap_depth(layout, &min.position)?;

    let rf = layout.rf_only();
    let rf_depth = find_minimum(&rf, &min.position)
        .and_then(|m| trap_depth(&rf, &m.position))
        .map(|d| d.depth_ev())
        .unwrap_or(f64::NAN);

    Ok(TrapSolution {
        minimum_position: min.position.into(),
        secular_frequencies: modes.frequencies,
        principal_axes: modes.axes.map(|v| v.into()),
        trap_depth: depth.depth_ev(),
        rf_only_depth: rf_depth,
        escape_position: depth.escape_position.into(),
        mathieu_q: layout.mathieu_q(&min.position)?,
        gradient_norm: min.gradient_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// U = ½ Σ k_i (x_i - c_i)² with k_i = m (2π f_i)².
    struct Harmonic {
        center: Point,
        k: Vector3<f64>,
        mass: f64,
    }

    impl TrapPotential for Harmonic {
        fn energy(&self, p: &Point) -> Result<f64> {
            let d = p - self.center;
            Ok(0.5 * (self.k.component_mul(&d)).dot(&d))
        }
        fn gradient(&self, p: &Point) -> Result<Vector3<f64>> {
            Ok(self.k.component_mul(&(p - self.center)))
        }
        fn mass(&self) -> f64 {
            self.mass
        }
    }

    fn harmonic(f: [f64; 3]) -> Harmonic {
        let mass = C.sr88_mass;
        Harmonic {
            center: Point::new(3e-6, -2e-6, 100e-6),
            k: Vector3::from(f.map(|fi| mass * (TWO_PI * fi).powi(2))),
            mass,
        }
    }

    #[test]
    fn quadrupole_frequencies_exact() {
        let f = [0.9e6, 1.1e6, 1.25e6];
        let pot = harmonic(f);
        let min = find_minimum(&pot, &Point::new(0.0, 0.0, 80e-6)).unwrap();
        assert!((min.position - pot.center).norm() < 1e-12);
        let modes = secular_frequencies(&pot, &min.position).unwrap();
        for i in 0..3 {
            assert!((modes.frequencies[i] / f[i] - 1.0).abs() < 1e-8, "{:?}", modes.frequencies);
        }
    }

    #[test]
    fn unstable_axis_reported() {
        let mut pot = harmonic([1e6, 1e6, 1e6]);
        pot.k.y = -pot.k.y;
        let err = secular_frequencies(&pot, &pot.center).unwrap_err();
        assert!(matches!(err, Error::UnstableTrap { axis: 1, .. }), "{err:?}");
    }

    #[test]
    fn degenerate_modes_sorted_by_axis() {
        let pot = harmonic([1e6, 1e6, 2e6]);
        let modes = secular_frequencies(&pot, &pot.center).unwrap();
        assert_eq!(dominant_axis(&modes.axes[0]), 0);
        assert_eq!(dominant_axis(&modes.axes[1]), 1);
        assert_eq!(dominant_axis(&modes.axes[2]), 2);
    }

    #[test]
    fn harmonic_well_has_no_saddle() {
        let pot = harmonic([1e6, 1e6, 1e6]);
        assert!(matches!(trap_depth(&pot, &pot.center), Err(Error::UnboundedSearch { .. })));
    }

    #[test]
    fn guess_below_plane_rejected() {
        let pot = harmonic([1e6, 1e6, 1e6]);
        assert!(find_minimum(&pot, &Point::new(0.0, 0.0, -1.0)).is_err());
    }
}
