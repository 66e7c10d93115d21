//! Python bindings: media, symbols, rays, single-slice one-way marching and
//! the scenario runner.

use std::sync::Arc;

use num_complex::Complex64;
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use onewave_core::harness::{self, jobs, Report};
use onewave_core::medium::{Density, Domain, Medium, Slowness};
use onewave_core::oneway::{self, OneWayConfig, Stepper};
use onewave_core::psdo::{FreqField, LateralGrid};
use onewave_core::rays::{self, RayOptions};
use onewave_core::symbols::{self, ConeConfig, DampingConfig, Normalization, PhasePoint, Sign};
use onewave_core::Error;

fn err(e: Error) -> PyErr {
    match e {
        Error::Numeric(_) => PyArithmeticError::new_err(e.to_string()),
        Error::Io(_) => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn domain(z_min: f64, z_max: f64, x_min: f64, x_max: f64) -> PyResult<Domain> {
    Domain::new(z_min, z_max, x_min, x_max).map_err(err)
}

/// Acoustic medium: slowness and density on a rectangular domain.
#[pyclass(name = "Medium", frozen, from_py_object)]
#[derive(Clone)]
struct PyMedium {
    inner: Arc<Medium>,
}

fn wrap(m: onewave_core::Result<Medium>) -> PyResult<PyMedium> {
    Ok(PyMedium { inner: Arc::new(m.map_err(err)?) })
}

#[pymethods]
impl PyMedium {
    #[staticmethod]
    #[pyo3(signature = (nu, rho, z_min, z_max, x_min, x_max))]
    fn homogeneous(nu: f64, rho: f64, z_min: f64, z_max: f64, x_min: f64, x_max: f64) -> PyResult<Self> {
        wrap(Medium::homogeneous(nu, rho, domain(z_min, z_max, x_min, x_max)?))
    }

    /// Velocity `v0 + g·z`.
    #[staticmethod]
    fn linear_velocity(v0: f64, g: f64, z_min: f64, z_max: f64, x_min: f64, x_max: f64) -> PyResult<Self> {
        wrap(Medium::linear_velocity(v0, g, domain(z_min, z_max, x_min, x_max)?))
    }

    /// Gaussian velocity lens with unit density.
    #[staticmethod]
    #[allow(clippy::too_many_arguments)]
    fn gaussian_lens(
        v0: f64,
        amplitude: f64,
        z_c: f64,
        x_c: f64,
        width: f64,
        z_min: f64,
        z_max: f64,
        x_min: f64,
        x_max: f64,
    ) -> PyResult<Self> {
        wrap(Medium::analytic(
            Slowness::GaussianLens { v0, amplitude, z_c, x_c, width },
            Density::Constant { rho: 1.0 },
            domain(z_min, z_max, x_min, x_max)?,
        ))
    }

    /// Gridded medium from a grid file.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        wrap(Medium::load(path))
    }

    /// `(ν, ρ)` at `(z, x)`.
    fn eval(&self, z: f64, x: f64) -> PyResult<(f64, f64)> {
        self.inner.eval(z, x).map_err(err)
    }

    /// `(ν_min, ν_max, ρ_min, ρ_max)`.
    fn bounds(&self) -> (f64, f64, f64, f64) {
        let b = self.inner.bounds();
        (b.nu_min, b.nu_max, b.rho_min, b.rho_max)
    }
}

/// Cone angles in degrees and the bound on `|ζ/τ|`.
#[pyclass(name = "Cone", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyCone {
    inner: ConeConfig,
}

#[pymethods]
impl PyCone {
    #[new]
    fn new(theta1: f64, theta2: f64, c_zeta: f64) -> PyResult<Self> {
        Ok(Self { inner: ConeConfig::from_degrees(theta1, theta2, c_zeta).map_err(err)? })
    }

    #[getter]
    fn theta1(&self) -> f64 {
        self.inner.theta1.to_degrees()
    }

    #[getter]
    fn theta2(&self) -> f64 {
        self.inner.theta2.to_degrees()
    }
}

fn sign(s: &str) -> PyResult<Sign> {
    match s {
        "+" | "plus" => Ok(Sign::Plus),
        "-" | "minus" => Ok(Sign::Minus),
        _ => Err(PyValueError::new_err("sign must be '+' or '-'")),
    }
}

fn normalization(s: &str) -> PyResult<Normalization> {
    match s {
        "unitary" => Ok(Normalization::Unitary),
        "sum" => Ok(Normalization::Sum),
        _ => Err(PyValueError::new_err("normalization must be 'unitary' or 'sum'")),
    }
}

#[pyfunction]
fn eval_a(m: &PyMedium, z: f64, x: f64, xi: f64, tau: f64) -> PyResult<f64> {
    symbols::eval_a(&m.inner, &PhasePoint::new(z, x, xi, tau)).map_err(err)
}

#[pyfunction]
fn eval_b(m: &PyMedium, z: f64, x: f64, xi: f64, tau: f64) -> PyResult<f64> {
    symbols::eval_b(&m.inner, &PhasePoint::new(z, x, xi, tau)).map_err(err)
}

/// Two-term one-way symbol `B±`.
#[pyfunction]
#[pyo3(signature = (m, z, x, xi, tau, sign = "+", normalization = "unitary", cone = None))]
#[allow(clippy::too_many_arguments)]
fn eval_big_b(
    m: &PyMedium,
    z: f64,
    x: f64,
    xi: f64,
    tau: f64,
    sign: &str,
    normalization: &str,
    cone: Option<PyCone>,
) -> PyResult<Complex64> {
    let p = PhasePoint::new(z, x, xi, tau);
    let c = cone.map(|c| c.inner);
    symbols::eval_big_b(&m.inner, &p, self::sign(sign)?, self::normalization(normalization)?, c.as_ref()).map_err(err)
}

/// Damping symbol `c` with weight `η‖(ξ, τ)‖`.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
fn eval_damping(m: &PyMedium, z: f64, x: f64, xi: f64, tau: f64, eta: f64, cone: PyCone) -> PyResult<f64> {
    let d = DampingConfig::new(eta, cone.inner, 3).map_err(err)?;
    symbols::eval_damping(&m.inner, &PhasePoint::new(z, x, xi, tau), &d).map_err(err)
}

/// Trace a downgoing ray from `(z, x)` with wavenumbers `(ξ, τ)`. Returns a
/// dict of sample columns plus `termination` and `drift`.
#[pyfunction]
#[pyo3(signature = (m, z, x, xi, tau, t_end, dt_out, stop_at_turning = false))]
#[allow(clippy::too_many_arguments)]
fn trace_ray<'py>(
    py: Python<'py>,
    m: &PyMedium,
    z: f64,
    x: f64,
    xi: f64,
    tau: f64,
    t_end: f64,
    dt_out: f64,
    stop_at_turning: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let start = rays::on_branch(&m.inner, z, x, xi, tau, Sign::Plus).map_err(err)?;
    let mut opts = RayOptions::new(t_end, dt_out);
    opts.stop_at_turning = stop_at_turning;
    let ray = rays::trace_ray(&m.inner, &start, &opts).map_err(err)?;
    let d = PyDict::new(py);
    let col = |f: fn(&rays::RaySample) -> f64| ray.samples.iter().map(f).collect::<Vec<f64>>();
    d.set_item("t", col(|s| s.t))?;
    d.set_item("z", col(|s| s.z))?;
    d.set_item("x", col(|s| s.x))?;
    d.set_item("zeta", col(|s| s.zeta))?;
    d.set_item("xi", col(|s| s.xi))?;
    d.set_item("termination", format!("{:?}", ray.termination).to_lowercase())?;
    d.set_item("drift", ray.max_hamiltonian_drift(&m.inner).map_err(err)?)?;
    Ok(d)
}

/// March one frequency slice `u(x; τ)` from `z0` to `z1` on the periodic
/// grid `x_j = x0 + j·dx`.
#[pyfunction]
#[pyo3(signature = (m, values, dx, x0, tau, z0, z1, dz, cone, stepper = "matrix-exponential", eta = None))]
#[allow(clippy::too_many_arguments)]
fn march(
    m: &PyMedium,
    values: Vec<Complex64>,
    dx: f64,
    x0: f64,
    tau: f64,
    z0: f64,
    z1: f64,
    dz: f64,
    cone: PyCone,
    stepper: &str,
    eta: Option<f64>,
) -> PyResult<Vec<Complex64>> {
    let grid = LateralGrid::new(values.len(), dx, x0).map_err(err)?;
    let mut cfg = OneWayConfig::new(grid, vec![tau], z0, z1, dz, cone.inner);
    cfg.stepper = match stepper {
        "crank-nicolson" => Stepper::CrankNicolson,
        "crank-nicolson-midpoint" => Stepper::CrankNicolsonMidpoint,
        "matrix-exponential" => Stepper::MatrixExponential,
        _ => return Err(PyValueError::new_err(format!("unknown stepper {stepper:?}"))),
    };
    cfg.damping = eta.map(|e| DampingConfig::new(e, cone.inner, 3)).transpose().map_err(err)?;
    let u0 = FreqField::new(grid, tau, z0, values).map_err(err)?;
    let fin = oneway::march(&u0, &cfg, &m.inner, |_, _, _| Ok(())).map_err(err)?;
    Ok(fin.values)
}

fn report_dict<'py>(py: Python<'py>, r: &Report) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("passed", r.passed())?;
    d.set_item("metrics", r.metrics.clone())?;
    let checks = PyDict::new(py);
    for (k, c) in &r.checks {
        let e = PyDict::new(py);
        e.set_item("value", c.value)?;
        e.set_item("limit", c.limit)?;
        e.set_item("relation", c.relation)?;
        e.set_item("passed", c.passed)?;
        checks.set_item(k, e)?;
    }
    d.set_item("checks", checks)?;
    d.set_item("warnings", r.warnings.clone())?;
    Ok(d)
}

/// Run a scenario config. Outputs go to `out_dir`, or to the directory the
/// config names.
#[pyfunction]
#[pyo3(signature = (path, out_dir = None))]
fn run_scenario<'py>(py: Python<'py>, path: &str, out_dir: Option<&str>) -> PyResult<Bound<'py, PyDict>> {
    let run = harness::run_scenario_to(path, out_dir.map(std::path::Path::new)).map_err(err)?;
    let d = report_dict(py, &run.report)?;
    d.set_item("dir", run.dir.to_string_lossy().into_owned())?;
    d.set_item("files", run.files)?;
    Ok(d)
}

/// Compare two grid files (plane traces or field cubes) inside the window
/// described by a config file.
#[pyfunction]
fn compare<'py>(py: Python<'py>, a: &str, b: &str, window: &str) -> PyResult<Bound<'py, PyDict>> {
    report_dict(py, &jobs::compare(a, b, window).map_err(err)?)
}

#[pymodule]
fn onewave(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMedium>()?;
    m.add_class::<PyCone>()?;
    m.add_function(wrap_pyfunction!(eval_a, m)?)?;
    m.add_function(wrap_pyfunction!(eval_b, m)?)?;
    m.add_function(wrap_pyfunction!(eval_big_b, m)?)?;
    m.add_function(wrap_pyfunction!(eval_damping, m)?)?;
    m.add_function(wrap_pyfunction!(trace_ray, m)?)?;
    m.add_function(wrap_pyfunction!(march, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    Ok(())
}
