//! Python bindings. Results convert to plain dicts with `to_dict()`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use iontrap_core::detection_chain::{self, BudgetRow, DetectionScenario, LockinComparison};
use iontrap_core::electrostatics::{self, Point, TrapSolution};
use iontrap_core::entanglement_link::{self, EmitterNode, EntanglementLink, Protocol, RateReport};
use iontrap_core::scenario::{self, Model, Scenario as CoreScenario};
use iontrap_core::state_detection::{self, CountModel};
use iontrap_core::units::{self, Wavelength};
use iontrap_core::Error;

fn err(e: Error) -> PyErr {
    match e {
        Error::Parse { .. } | Error::Invalid { .. } | Error::Config(_) | Error::Domain(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_dict<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A parsed scenario file.
#[pyclass(module = "iontrap", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct Scenario {
    inner: CoreScenario,
}

#[pymethods]
impl Scenario {
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        Ok(Scenario {
            inner: scenario::preset(name).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Scenario {
            inner: CoreScenario::parse(text).map_err(err)?,
        })
    }

    #[staticmethod]
    fn presets() -> Vec<&'static str> {
        scenario::PRESETS.iter().map(|(n, _)| *n).collect()
    }

    #[getter]
    fn schema(&self) -> &'static str {
        self.inner.schema().tag()
    }

    #[getter]
    fn name(&self) -> Option<String> {
        self.inner.name.clone()
    }

    #[getter]
    fn seed(&self) -> Option<u64> {
        self.inner.seed
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    /// Copy with the dot path set to a JSON-encoded value.
    fn with_parameter(&self, path: &str, value_json: &str) -> PyResult<Self> {
        let v: serde_json::Value = serde_json::from_str(value_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Scenario {
            inner: self.inner.with_parameter(path, v).map_err(err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!("Scenario(schema={:?}, name={:?})", self.schema(), self.inner.name)
    }
}

impl Scenario {
    fn detection(&self) -> PyResult<&DetectionScenario> {
        match &self.inner.model {
            Model::Detection(d) => Ok(d),
            _ => Err(PyValueError::new_err(format!("expected a detection scenario, got {}", self.schema()))),
        }
    }
}

#[pyclass(module = "iontrap", frozen, name = "TrapSolution")]
pub struct PyTrapSolution {
    inner: TrapSolution,
}

#[pymethods]
impl PyTrapSolution {
    /// Minimum (x, y, z), m.
    #[getter]
    fn position(&self) -> [f64; 3] {
        self.inner.minimum_position
    }
    /// Secular frequencies, Hz, ascending.
    #[getter]
    fn frequencies(&self) -> [f64; 3] {
        self.inner.secular_frequencies
    }
    /// Trap depth, eV.
    #[getter]
    fn depth(&self) -> f64 {
        self.inner.trap_depth
    }
    #[getter]
    fn rf_only_depth(&self) -> f64 {
        self.inner.rf_only_depth
    }
    #[getter]
    fn mathieu_q(&self) -> f64 {
        self.inner.mathieu_q
    }
    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_dict(py, &self.inner)
    }
    fn __repr__(&self) -> String {
        format!(
            "TrapSolution(z={:.4e} m, depth={:.4} eV, f=[{:.0}, {:.0}, {:.0}] Hz)",
            self.inner.minimum_position[2],
            self.inner.trap_depth,
            self.inner.secular_frequencies[0],
            self.inner.secular_frequencies[1],
            self.inner.secular_frequencies[2]
        )
    }
}

/// Solve a trap-layout scenario for its minimum, frequencies and depth.
#[pyfunction]
#[pyo3(signature = (scenario, initial_guess=None))]
fn solve_trap(py: Python<'_>, scenario: &Scenario, initial_guess: Option<[f64; 3]>) -> PyResult<PyTrapSolution> {
    let Model::Trap(t) = &scenario.inner.model else {
        return Err(PyValueError::new_err("expected a trap-layout scenario"));
    };
    let layout = match (&t.layout, &t.template) {
        (Some(l), _) => l.clone(),
        (None, Some(tpl)) => tpl.build().map_err(err)?,
        _ => return Err(PyValueError::new_err("scenario has neither layout nor template")),
    };
    let g = initial_guess
        .or(t.initial_guess)
        .or_else(|| t.template.as_ref().map(|tpl| [0.0, 0.0, tpl.analytic_height()]))
        .ok_or_else(|| PyValueError::new_err("no initial guess"))?;
    let sol = py
        .detach(|| electrostatics::solve(&layout, &Point::new(g[0], g[1], g[2])))
        .map_err(err)?;
    Ok(PyTrapSolution { inner: sol })
}

/// Calibrate the scenario's template. Returns (calibrated scenario, solution).
#[pyfunction]
fn calibrate_trap(py: Python<'_>, scenario: &Scenario) -> PyResult<(Scenario, PyTrapSolution)> {
    let Model::Trap(t) = &scenario.inner.model else {
        return Err(PyValueError::new_err("expected a trap-layout scenario"));
    };
    let template = t.template.clone().ok_or_else(|| PyValueError::new_err("scenario has no template"))?;
    let targets = t.targets.clone().unwrap_or_else(electrostatics::CalibrationTargets::standard);
    let (layout, report) = py.detach(|| electrostatics::calibrate(&template, &targets)).map_err(err)?;
    let mut out = scenario.inner.clone();
    out.overrides.clear();
    out.model = Model::Trap(scenario::TrapModel {
        layout: Some(layout),
        template: Some(report.template.clone()),
        targets: Some(targets),
        initial_guess: Some(report.solution.minimum_position),
    });
    Ok((Scenario { inner: out }, PyTrapSolution { inner: report.solution }))
}

#[pyclass(module = "iontrap", frozen, name = "BudgetRow")]
pub struct PyBudgetRow {
    inner: BudgetRow,
}

#[pymethods]
impl PyBudgetRow {
    #[getter]
    fn collection_efficiency(&self) -> f64 {
        self.inner.collection_efficiency
    }
    #[getter]
    fn power_at_detector(&self) -> f64 {
        self.inner.power_at_detector_w
    }
    #[getter]
    fn quantum_efficiency(&self) -> f64 {
        self.inner.quantum_efficiency
    }
    #[getter]
    fn photocurrent(&self) -> Option<f64> {
        self.inner.photocurrent_a
    }
    #[getter]
    fn lockin_output(&self) -> Option<f64> {
        self.inner.lockin_output_v
    }
    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_dict(py, &self.inner)
    }
}

/// Static detection budget of a detection scenario.
#[pyfunction]
fn detection_budget(scenario: &Scenario) -> PyResult<PyBudgetRow> {
    Ok(PyBudgetRow {
        inner: detection_chain::budget(scenario.detection()?).map_err(err)?,
    })
}

#[pyclass(module = "iontrap", frozen, name = "LockinComparison")]
pub struct PyLockinComparison {
    inner: LockinComparison,
}

#[pymethods]
impl PyLockinComparison {
    /// Background-subtracted mean, V.
    #[getter]
    fn signal(&self) -> f64 {
        self.inner.signal_v
    }
    #[getter]
    fn separation(&self) -> f64 {
        self.inner.separation
    }
    /// Settled lock-in samples with ions, V.
    #[getter]
    fn with_ions(&self) -> Vec<f64> {
        self.inner.with_ions.settled().to_vec()
    }
    #[getter]
    fn without_ions(&self) -> Vec<f64> {
        self.inner.without_ions.settled().to_vec()
    }
    #[getter]
    fn time(&self) -> Vec<f64> {
        self.inner.with_ions.time_s.clone()
    }
}

/// Lock-in runs with and without ions. `seed` overrides the scenario's.
#[pyfunction]
#[pyo3(signature = (scenario, seed=None))]
fn simulate_lockin(py: Python<'_>, scenario: &Scenario, seed: Option<u64>) -> PyResult<PyLockinComparison> {
    let d = scenario.detection()?.clone();
    let seed = scenario.inner.require_seed(seed).map_err(err)?;
    let inner = py.detach(move || d.simulate(seed)).map_err(err)?;
    Ok(PyLockinComparison { inner })
}

/// (threshold, fidelity, p_miss, p_false) for Poisson counts.
#[pyfunction]
fn optimal_threshold(bright_rate: f64, dark_rate: f64, integration_time: f64) -> PyResult<(u64, f64, f64, f64)> {
    let r = state_detection::optimal_threshold(&CountModel {
        bright_rate,
        dark_rate,
        integration_time,
    })
    .map_err(err)?;
    Ok((r.threshold, r.fidelity, r.p_miss, r.p_false))
}

#[pyfunction]
fn fidelity_at_time(bright_rate: f64, dark_rate: f64, integration_time: f64) -> PyResult<f64> {
    state_detection::fidelity_at_time(bright_rate, dark_rate, integration_time).map_err(err)
}

/// Shortest integration time reaching `target` fidelity, s.
#[pyfunction]
fn min_integration_time(bright_rate: f64, dark_rate: f64, target: f64) -> PyResult<f64> {
    state_detection::min_integration_time(bright_rate, dark_rate, target).map_err(err)
}

#[pyclass(module = "iontrap", frozen, name = "RateReport")]
pub struct PyRateReport {
    inner: RateReport,
}

#[pymethods]
impl PyRateReport {
    #[getter]
    fn rate(&self) -> f64 {
        self.inner.rate_s
    }
    #[getter]
    fn per_attempt_probability(&self) -> f64 {
        self.inner.per_attempt_probability
    }
    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_dict(py, &self.inner)
    }
}

/// Rate of a symmetric link: protocol is "linear_herald" or "two_photon_coincidence".
#[pyfunction]
#[pyo3(signature = (branching_ratio, coupling_efficiency, detector_qe, attempt_rate, protocol="linear_herald"))]
fn link_rate(
    branching_ratio: f64,
    coupling_efficiency: f64,
    detector_qe: f64,
    attempt_rate: f64,
    protocol: &str,
) -> PyResult<PyRateReport> {
    let protocol = match protocol {
        "linear_herald" => Protocol::LinearHerald,
        "two_photon_coincidence" => Protocol::TwoPhotonCoincidence,
        p => return Err(PyValueError::new_err(format!("unknown protocol '{p}'"))),
    };
    let node = EmitterNode::new(branching_ratio, coupling_efficiency, detector_qe).map_err(err)?;
    let link = EntanglementLink::symmetric(node, attempt_rate, protocol);
    Ok(PyRateReport {
        inner: entanglement_link::entanglement_rate(&link).map_err(err)?,
    })
}

/// Rate report of an entanglement-link scenario.
#[pyfunction]
fn entanglement_rate(scenario: &Scenario) -> PyResult<PyRateReport> {
    let Model::Entanglement(m) = &scenario.inner.model else {
        return Err(PyValueError::new_err("expected an entanglement-link scenario"));
    };
    Ok(PyRateReport {
        inner: entanglement_link::entanglement_rate(&m.link).map_err(err)?,
    })
}

#[pyfunction]
fn coupling_from_geometry(solid_angle_fraction: f64, stack_loss: f64) -> PyResult<f64> {
    entanglement_link::coupling_from_geometry(solid_angle_fraction, stack_loss).map_err(err)
}

/// Photon energy at a wavelength in meters, J.
#[pyfunction]
fn photon_energy(wavelength_m: f64) -> PyResult<f64> {
    units::photon_energy_m(wavelength_m).map_err(err)
}

#[pyfunction]
fn responsivity_to_qe(responsivity: f64, wavelength_m: f64) -> PyResult<f64> {
    units::responsivity_to_qe(responsivity, Wavelength::new(wavelength_m).map_err(err)?).map_err(err)
}

#[pymodule]
fn iontrap(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", scenario::TOOLKIT_VERSION)?;
    m.add_class::<Scenario>()?;
    m.add_class::<PyTrapSolution>()?;
    m.add_class::<PyBudgetRow>()?;
    m.add_class::<PyLockinComparison>()?;
    m.add_class::<PyRateReport>()?;
    m.add_function(wrap_pyfunction!(solve_trap, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_trap, m)?)?;
    m.add_function(wrap_pyfunction!(detection_budget, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_lockin, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(fidelity_at_time, m)?)?;
    m.add_function(wrap_pyfunction!(min_integration_time, m)?)?;
    m.add_function(wrap_pyfunction!(link_rate, m)?)?;
    m.add_function(wrap_pyfunction!(entanglement_rate, m)?)?;
    m.add_function(wrap_pyfunction!(coupling_from_geometry, m)?)?;
    m.add_function(wrap_pyfunction!(photon_energy, m)?)?;
    m.add_function(wrap_pyfunction!(responsivity_to_qe, m)?)?;
    Ok(())
}
