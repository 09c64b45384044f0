use iontrap_core::electrostatics::*;
use iontrap_core::scenario::{preset, Model};
use iontrap_core::units::C;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ito_4k() -> (TrapLayout, Point) {
    match preset("ito-4k").unwrap().model {
        Model::Trap(t) => {
            let g = t.initial_guess.unwrap();
            (t.layout.unwrap(), Point::new(g[0], g[1], g[2]))
        }
        _ => unreachable!(),
    }
}

fn pt(a: [f64; 3]) -> Point {
    Point::new(a[0], a[1], a[2])
}

fn random_point(rng: &mut ChaCha8Rng, span: f64) -> Point {
    Point::new(
        rng.random_range(-span..span),
        rng.random_range(-span..span),
        rng.random_range(0.2 * span..2.0 * span),
    )
}

#[test]
fn potentials_are_harmonic() {
    let (layout, _) = ito_4k();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let p = random_point(&mut rng, 300e-6);
        for e in &layout.electrodes {
            let j = unit_jet(e, &p).unwrap();
            let scale = j.hessian.abs().max();
            assert!(j.hessian.trace().abs() <= 1e-6 * scale.max(1e-300), "{}", j.hessian.trace() / scale);
        }
    }
}

#[test]
fn basis_completeness() {
    let h = 100e-6;
    let p = Point::new(0.0, 0.0, h);
    // a 20×20 tiling of a square with half-size 1000 h
    let half = 1000.0 * h;
    let n = 20;
    let w = 2.0 * half / n as f64;
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            let x0 = -half + i as f64 * w;
            let y0 = -half + j as f64 * w;
            let e = RectElectrode::new(x0, x0 + w, y0, y0 + w, Role::Dc, 1.0).unwrap();
            sum += unit_potential(&e, &p).unwrap();
        }
    }
    let whole = RectElectrode::new(-half, half, -half, half, Role::Dc, 1.0).unwrap();
    assert!((sum - unit_potential(&whole, &p).unwrap()).abs() < 1e-12);
    assert!((1.0 - sum).abs() < 1e-3, "deficit {}", 1.0 - sum);
    // at 100 h the finite plane still misses about h/L of the solid angle
    let near = RectElectrode::new(-100.0 * h, 100.0 * h, -100.0 * h, 100.0 * h, Role::Dc, 1.0).unwrap();
    let deficit = 1.0 - unit_potential(&near, &p).unwrap();
    assert!(deficit > 5e-3 && deficit < 1e-2, "{deficit}");
}

fn richardson(f: impl Fn(&Point) -> f64, p: &Point, axis: usize, h: f64) -> f64 {
    let d = |h: f64| {
        let mut a = *p;
        let mut b = *p;
        a[axis] += h;
        b[axis] -= h;
        (f(&a) - f(&b)) / (2.0 * h)
    };
    (4.0 * d(h) - d(2.0 * h)) / 3.0
}

#[test]
fn gradients_match_finite_differences() {
    let (layout, _) = ito_4k();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // step chosen for f64 cancellation at 100 µm scales
    let step = 1e-7;
    for _ in 0..100 {
        let p = random_point(&mut rng, 200e-6);
        let g = layout.gradient(&p).unwrap();
        let fd = Vector3::from_fn(|i, _| richardson(|q| layout.energy(q).unwrap(), &p, i, step));
        assert!((g - fd).norm() <= 1e-6 * g.norm(), "{p:?}: {}", (g - fd).norm() / g.norm());
        let gs = layout.static_gradient(&p).unwrap();
        let fds = Vector3::from_fn(|i, _| richardson(|q| layout.potential(q).unwrap(), &p, i, step));
        assert!((gs - fds).norm() <= 1e-6 * gs.norm().max(1.0), "{p:?}");
    }
}

#[test]
fn translation_and_scale_covariance() {
    let (layout, guess) = ito_4k();
    let base = solve(&layout, &guess).unwrap();

    let (dx, dy) = (37e-6, -12e-6);
    let moved = solve(&layout.translated(dx, dy), &(guess + Vector3::new(dx, dy, 0.0))).unwrap();
    let shift = pt(moved.minimum_position) - pt(base.minimum_position);
    assert!((shift - Vector3::new(dx, dy, 0.0)).norm() < 1e-9 * 100e-6 + 1e-12);
    for i in 0..3 {
        assert!((moved.secular_frequencies[i] / base.secular_frequencies[i] - 1.0).abs() < 1e-6);
    }
    assert!((moved.trap_depth / base.trap_depth - 1.0).abs() < 1e-6);

    // lengths × s with DC voltages × 1/s² scales every energy by 1/s²
    let s = 2.0;
    let mut big = layout.scaled(s);
    for e in big.electrodes.iter_mut().filter(|e| e.role != Role::Rf) {
        e.voltage /= s * s;
    }
    let scaled = solve(&big, &(guess * s)).unwrap();
    assert!((pt(scaled.minimum_position) - pt(base.minimum_position) * s).norm() < 1e-6 * 100e-6);
    for i in 0..3 {
        assert!((scaled.secular_frequencies[i] * s * s / base.secular_frequencies[i] - 1.0).abs() < 1e-6);
    }
    assert!((scaled.trap_depth * s * s / base.trap_depth - 1.0).abs() < 1e-6);
}

#[test]
fn rf_only_scaling_with_voltage() {
    let (layout, guess) = ito_4k();
    let rf = layout.rf_only();
    let a = solve(&rf, &guess).unwrap();
    let b = solve(&rf.with_rf_amplitude(2.0 * rf.rf_amplitude), &guess).unwrap();
    // the two radial modes are the stiffest
    for i in 1..3 {
        let r = b.secular_frequencies[i] / a.secular_frequencies[i];
        assert!((r / 2.0 - 1.0).abs() < 0.01, "mode {i}: {r}");
    }
    let d = b.trap_depth / a.trap_depth;
    assert!((d / 4.0 - 1.0).abs() < 0.01, "{d}");
}

#[test]
fn depth_matches_dense_scan() {
    let (layout, guess) = ito_4k();
    let sol = solve(&layout, &guess).unwrap();
    let m = pt(sol.minimum_position);
    // escape is straight up by symmetry, so a dense vertical scan bounds it
    let top = 10.0 * m.z;
    let n = 10_000;
    let mut barrier = f64::NEG_INFINITY;
    let mut rising = true;
    let mut last = layout.energy(&m).unwrap();
    for i in 1..=n {
        let z = m.z + (top - m.z) * i as f64 / n as f64;
        let e = layout.energy(&Point::new(m.x, m.y, z)).unwrap();
        if rising && e < last {
            barrier = last;
            rising = false;
        }
        last = e;
    }
    let scan_depth = (barrier - layout.energy(&m).unwrap()) / C.elementary_charge;
    assert!((sol.trap_depth / scan_depth - 1.0).abs() < 0.005, "{} vs {}", sol.trap_depth, scan_depth);
}

#[test]
fn calibration_is_a_fixed_point() {
    let (layout, guess) = ito_4k();
    let sol = solve(&layout, &guess).unwrap();
    let targets = CalibrationTargets::standard();
    assert!(targets.satisfied_by(&sol));
    // recover the template that produced the frozen layout
    let mut t = FiveWireTemplate::default_seed();
    let rf = layout.electrodes.iter().find(|e| e.role == Role::Rf && e.y_min > 0.0).unwrap();
    t.center_half_width = rf.y_min;
    t.rf_outer_edge = rf.y_max;
    t.rf_amplitude = layout.rf_amplitude;
    let v = |name: &str| layout.electrodes.iter().find(|e| e.name.as_deref() == Some(name)).unwrap().voltage;
    t.center_voltage = v("center");
    t.middle_dc_voltage = v("dc_mid_upper");
    t.endcap_voltage = v("endcap_left_upper");
    assert_eq!(t.build().unwrap(), layout);
    let (again, report) = calibrate(&t, &targets).unwrap();
    assert_eq!(again, layout);
    assert_eq!(report.template, t);
}
