//! Python bindings. Fields cross the boundary as flat lists in `(x, y, z)`
//! row-major order.

use std::path::PathBuf;

use num_complex::Complex64;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use spectral_ns::convergence::{observed_order as order_fit, FitModel};
use spectral_ns::diagnostics::{self, DiagnosticsRecord};
use spectral_ns::integrate::{advance, StepControl};
use spectral_ns::regularity::{self, SpectrumProfile, StripFit};
use spectral_ns::{
    config, run, snapshot, DealiasRule, EnergyLedger, Error, GridSpec, InitialConditionSpec, InitialKind,
    NavierStokes, PhysicsParams, RealField, SimulationState, SpectralField,
};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } | Error::NoLedger(_) => PyIOError::new_err(e.to_string()),
        Error::Diverged | Error::NonFinite(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_dealias(s: &str) -> PyResult<DealiasRule> {
    match s {
        "two_thirds" => Ok(DealiasRule::TwoThirds),
        "none" => Ok(DealiasRule::None),
        _ => Err(PyValueError::new_err(format!("unknown dealias rule `{s}`"))),
    }
}

#[pyclass(name = "Grid", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyGrid(GridSpec);

#[pymethods]
impl PyGrid {
    #[new]
    #[pyo3(signature = (n_points, dealias = "two_thirds"))]
    fn new(n_points: usize, dealias: &str) -> PyResult<Self> {
        GridSpec::new(n_points, parse_dealias(dealias)?).map(Self).map_err(to_py)
    }

    #[getter]
    fn n_points(&self) -> usize {
        self.0.n_points()
    }

    #[getter]
    fn k_max(&self) -> usize {
        self.0.k_max()
    }

    #[getter]
    fn dx(&self) -> f64 {
        self.0.dx()
    }

    #[getter]
    fn dealias(&self) -> &'static str {
        self.0.dealias_rule().as_str()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("Grid(n_points={}, dealias='{}')", self.0.n_points(), self.0.dealias_rule().as_str())
    }
}

/// Divergence-free velocity field in spectral form.
#[pyclass(name = "Field", from_py_object)]
#[derive(Clone)]
struct PyField(SpectralField);

fn fit_dict<'py>(py: Python<'py>, fit: &StripFit) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("c_star", fit.c_star)?;
    d.set_item("delta", fit.delta)?;
    d.set_item("r2", fit.r2)?;
    d.set_item("window", fit.window)?;
    Ok(d)
}

#[pymethods]
impl PyField {
    /// `kind` is one of `taylor_green`, `concentrated_vortex`, `random_analytic`.
    #[staticmethod]
    #[pyo3(signature = (grid, kind, amplitude = 1.0, concentration = 1.0, seed = 0))]
    fn initial(grid: PyGrid, kind: &str, amplitude: f64, concentration: f64, seed: u64) -> PyResult<Self> {
        let kind = match kind {
            "taylor_green" => InitialKind::TaylorGreen,
            "concentrated_vortex" => InitialKind::ConcentratedVortex,
            "random_analytic" => InitialKind::RandomAnalytic,
            _ => return Err(PyValueError::new_err(format!("unknown initial condition `{kind}`"))),
        };
        let spec = InitialConditionSpec { kind, amplitude, concentration, seed };
        spectral_ns::make_initial_condition(&spec, grid.0).map(Self).map_err(to_py)
    }

    /// Forward transform of three flat velocity components (no projection).
    #[staticmethod]
    fn from_physical(grid: PyGrid, ux: Vec<f64>, uy: Vec<f64>, uz: Vec<f64>) -> PyResult<Self> {
        let real = RealField::from_components(grid.0, [ux, uy, uz]).map_err(to_py)?;
        spectral_ns::forward_transform(&real).map(Self).map_err(to_py)
    }

    #[staticmethod]
    #[pyo3(signature = (path, dealias = "two_thirds"))]
    fn load(path: PathBuf, dealias: &str) -> PyResult<(Self, f64)> {
        let (u, t) = snapshot::load(&path, parse_dealias(dealias)?).map_err(to_py)?;
        Ok((Self(u), t))
    }

    fn save(&self, path: PathBuf, t: f64) -> PyResult<()> {
        snapshot::save(&path, &self.0, t).map_err(to_py)
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid(self.0.grid())
    }

    fn to_physical(&self) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let [a, b, c] = spectral_ns::inverse_transform(&self.0).map_err(to_py)?.into_components();
        Ok((a, b, c))
    }

    /// Coefficients `(û_x, û_y, û_z)` at integer wavevector `k`.
    fn mode(&self, kx: i64, ky: i64, kz: i64) -> PyResult<(Complex64, Complex64, Complex64)> {
        let m = self.0.mode([kx, ky, kz]).ok_or_else(|| PyValueError::new_err("wavevector outside the grid"))?;
        Ok((m[0], m[1], m[2]))
    }

    fn energy(&self) -> f64 {
        diagnostics::kinetic_energy(&self.0)
    }

    fn dissipation(&self, nu: f64) -> f64 {
        diagnostics::dissipation(&self.0, nu)
    }

    fn max_velocity(&self) -> f64 {
        diagnostics::max_velocity(&self.0)
    }

    fn max_vorticity(&self) -> f64 {
        diagnostics::max_vorticity(&self.0)
    }

    fn max_divergence(&self) -> f64 {
        self.0.max_divergence()
    }

    fn l2_norm_sq(&self) -> f64 {
        spectral_ns::l2_norm_sq(&self.0)
    }

    fn sobolev_norm(&self, order: f64) -> PyResult<f64> {
        spectral_ns::sobolev_norm(&self.0, order).map_err(to_py)
    }

    fn leray_project(&self) -> Self {
        Self(spectral_ns::leray_project(&self.0))
    }

    fn dealias(&self) -> Self {
        Self(spectral_ns::dealias(&self.0))
    }

    fn curl(&self) -> Self {
        Self(spectral_ns::curl(&self.0))
    }

    fn resample(&self, grid: PyGrid) -> Self {
        Self(self.0.resample(grid.0))
    }

    /// Per-shell maximum amplitudes as `(shell, amplitude, radius)`.
    fn spectrum(&self) -> Vec<(usize, f64, f64)> {
        regularity::shell_spectrum(&self.0).shells.iter().map(|s| (s.index, s.amplitude, s.radius)).collect()
    }

    #[pyo3(signature = (window = None))]
    fn fit_strip<'py>(&self, py: Python<'py>, window: Option<(usize, usize)>) -> PyResult<Bound<'py, PyDict>> {
        let p = regularity::fit_strip(&regularity::shell_spectrum(&self.0), window).map_err(to_py)?;
        fit_dict(py, &p.fit.expect("fitted"))
    }

    fn __repr__(&self) -> String {
        format!("Field(n_points={}, energy={:.6e})", self.0.grid().n_points(), self.energy())
    }
}

fn record_dict<'py>(py: Python<'py>, r: &DiagnosticsRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("step", r.step)?;
    for (name, v) in diagnostics::LEDGER_HEADER.split(',').skip(1).zip(r.values()) {
        d.set_item(name, v)?;
    }
    Ok(d)
}

/// Integrate `field` to `t_end`. Returns `(final_field, stop_reason, ledger)`
/// with one dict per ledger row.
#[pyfunction]
#[pyo3(signature = (field, nu, t_end, dt = None, cfl_number = 0.5, dt_max = 1e-2, nonlinear = true, max_steps = 1_000_000))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    field: &PyField,
    nu: f64,
    t_end: f64,
    dt: Option<f64>,
    cfl_number: f64,
    dt_max: f64,
    nonlinear: bool,
    max_steps: u64,
) -> PyResult<(PyField, &'static str, Vec<Bound<'py, PyDict>>)> {
    let mut params = PhysicsParams::new(nu, Default::default()).map_err(to_py)?;
    params.nonlinear = nonlinear;
    let model = NavierStokes::new(field.0.grid(), params).map_err(to_py)?;
    let control = StepControl { cfl_number, dt_max, t_end, max_steps, fixed_dt: dt, ..Default::default() };
    let mut ledger = EnergyLedger::new();
    let out = py
        .detach(|| advance(SimulationState::new(field.0.clone()), &control, &model, &mut [&mut ledger]))
        .map_err(to_py)?;
    let rows = ledger.records().iter().map(|r| record_dict(py, r)).collect::<PyResult<_>>()?;
    Ok((PyField(out.state.field), out.stop.as_str(), rows))
}

/// Smallest `K` meeting `C(1+K)²e^{−δK} ≤ ε/2`, and whether `c2·Δt^p ≤ ε/2`.
#[pyfunction]
#[pyo3(signature = (c_star, delta, epsilon, dt = 0.0, order = 4, c2 = 0.0))]
fn resolution_check<'py>(
    py: Python<'py>,
    c_star: f64,
    delta: f64,
    epsilon: f64,
    dt: f64,
    order: i32,
    c2: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let profile = SpectrumProfile {
        k_max: 0,
        shells: vec![],
        fit: Some(StripFit { c_star, delta, window: (0, 0), r2: 1.0 }),
    };
    let r = regularity::resolution_check(&profile, epsilon, dt, order, c2).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("k_required", r.k_required)?;
    d.set_item("dt_ok", r.dt_ok)?;
    d.set_item("spatial_bound_at_k", r.spatial_bound_at_k)?;
    d.set_item("temporal_bound", r.temporal_bound)?;
    Ok(d)
}

/// Least-squares rate: slope of `ln e` against `ln p` (`algebraic`) or `p`
/// (`exponential`). Returns `(rate, r2)`.
#[pyfunction]
#[pyo3(signature = (errors, parameters, model = "algebraic"))]
fn observed_order(errors: Vec<f64>, parameters: Vec<f64>, model: &str) -> PyResult<(f64, f64)> {
    let model = match model {
        "algebraic" => FitModel::Algebraic,
        "exponential" => FitModel::Exponential,
        _ => return Err(PyValueError::new_err(format!("unknown model `{model}`"))),
    };
    order_fit(&errors, &parameters, model).map_err(to_py)
}

/// Run a TOML configuration. Returns the `summary.txt` fields and exit code.
#[pyfunction]
#[pyo3(signature = (config_path, output = None))]
fn run_config<'py>(py: Python<'py>, config_path: PathBuf, output: Option<PathBuf>) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = config::load_config(&config_path).map_err(to_py)?;
    if let Some(dir) = output {
        cfg.output.directory = dir;
    }
    let summary = py.detach(|| run::run_command(&cfg)).map_err(to_py)?;
    let d = PyDict::new(py);
    for line in summary.to_text().lines() {
        if let Some((k, v)) = line.split_once(": ") {
            d.set_item(k, v)?;
        }
    }
    d.set_item("exit_code", summary.exit.code())?;
    Ok(d)
}

/// Breakdown analysis of a stored run directory as `key: value` text.
#[pyfunction]
fn analyze(run_dir: PathBuf) -> PyResult<String> {
    run::analyze(&run_dir).map(|a| a.to_text()).map_err(to_py)
}

#[pymodule]
#[pyo3(name = "spectral_ns")]
fn spectral_ns_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyField>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(resolution_check, m)?)?;
    m.add_function(wrap_pyfunction!(observed_order, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
