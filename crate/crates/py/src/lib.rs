//! Python bindings: grids, fields, states, the linear propagator, the
//! nonlinear solver and the acceptance suite.

use std::path::PathBuf;
use std::sync::Arc;

use nsk_core::acceptance::{self, Level};
use nsk_core::besov::{self, NormSpec};
use nsk_core::linear::{self, LinearParams};
use nsk_core::physics::PressureModel;
use nsk_core::snapshot::Snapshot;
use nsk_core::solver::{self, InitialDataSpec, Scheme, SnapshotPlan, Stepper, StepperConfig};
use nsk_core::{NskError, SpectralField};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

fn err(e: NskError) -> PyErr {
    match e {
        NskError::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Converts a JSON value into plain Python objects.
fn to_py<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    use serde_json::Value;
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(a) => {
            let list = PyList::empty(py);
            for x in a {
                list.append(to_py(py, x)?)?;
            }
            list.into_any()
        }
        Value::Object(o) => {
            let dict = PyDict::new(py);
            for (k, x) in o {
                dict.set_item(k, to_py(py, x)?)?;
            }
            dict.into_any()
        }
    })
}

fn serialized<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let value = serde_json::to_value(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    to_py(py, &value)
}

/// Periodic box with `n[k]` points along side `lengths[k]`.
#[pyclass(name = "Grid", frozen, from_py_object)]
#[derive(Clone)]
struct PyGrid(Arc<nsk_core::Grid>);

#[pymethods]
impl PyGrid {
    #[new]
    fn new(n: Vec<usize>, lengths: Vec<f64>) -> PyResult<Self> {
        nsk_core::Grid::new(&n, &lengths).map(PyGrid).map_err(err)
    }

    #[staticmethod]
    fn cube(d: usize, n: usize, length: f64) -> PyResult<Self> {
        nsk_core::Grid::cube(d, n, length).map(PyGrid).map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn n(&self) -> Vec<usize> {
        self.0.n().to_vec()
    }

    #[getter]
    fn lengths(&self) -> Vec<f64> {
        self.0.lengths().to_vec()
    }

    #[getter]
    fn mode_count(&self) -> usize {
        self.0.mode_count()
    }

    #[getter]
    fn xi_min(&self) -> f64 {
        self.0.xi_min()
    }

    #[getter]
    fn xi_max(&self) -> f64 {
        self.0.xi_max()
    }

    /// Physical coordinates of every point, row-major with the last axis fastest.
    fn positions(&self) -> Vec<Vec<f64>> {
        (0..self.0.mode_count()).map(|i| self.0.position(i)).collect()
    }

    fn __repr__(&self) -> String {
        format!("Grid(n={:?}, lengths={:?})", self.0.n(), self.0.lengths())
    }
}

/// Real scalar field stored by its Fourier coefficients.
#[pyclass(name = "Field", frozen, from_py_object)]
#[derive(Clone)]
struct PyField(SpectralField);

#[pymethods]
impl PyField {
    /// Builds a field from physical samples (row-major).
    #[staticmethod]
    fn from_samples(grid: &PyGrid, samples: Vec<f64>) -> PyResult<Self> {
        SpectralField::from_physical(&grid.0, &samples).map(PyField).map_err(err)
    }

    /// Builds a field from a Python callable of the position.
    #[staticmethod]
    fn from_function(grid: &PyGrid, f: &Bound<'_, PyAny>) -> PyResult<Self> {
        let g = &grid.0;
        let samples = (0..g.mode_count())
            .map(|i| f.call1((g.position(i),))?.extract::<f64>())
            .collect::<PyResult<Vec<f64>>>()?;
        Self::from_samples(grid, samples)
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid(self.0.grid().clone())
    }

    fn samples(&self) -> Vec<f64> {
        self.0.to_physical()
    }

    /// Fourier coefficients as complex numbers.
    fn coefficients(&self) -> Vec<num_complex_shim::C> {
        self.0.coeffs().iter().map(|c| num_complex_shim::C(c.re, c.im)).collect()
    }

    /// Integral over the box.
    fn integral(&self) -> f64 {
        nsk_core::ops::moment(&self.0)
    }

    #[pyo3(signature = (s, p, sigma=1.0))]
    fn besov_norm(&self, s: f64, p: f64, sigma: f64) -> PyResult<f64> {
        besov::besov_norm(&self.0, &NormSpec::new(s, p, sigma)).map_err(err)
    }

    fn fourier_lebesgue_norm(&self, p: f64) -> f64 {
        besov::fourier_lebesgue_norm(&self.0, p)
    }

    /// Littlewood-Paley block `j`.
    fn dyadic_block(&self, j: i32) -> PyField {
        PyField(besov::dyadic_block(&self.0, j))
    }

    fn partial(&self, axis: usize) -> PyResult<PyField> {
        if axis >= self.0.grid().dim() {
            return Err(PyValueError::new_err(format!("axis {axis} out of range")));
        }
        Ok(PyField(nsk_core::ops::partial(&self.0, axis)))
    }

    fn laplacian(&self) -> PyField {
        PyField(nsk_core::ops::laplacian(&self.0))
    }

    /// Dealiased pointwise product.
    fn product(&self, other: &PyField) -> PyResult<PyField> {
        nsk_core::ops::product(&self.0, &other.0).map(PyField).map_err(err)
    }

    fn __add__(&self, other: &PyField) -> PyResult<PyField> {
        self.0.add(&other.0).map(PyField).map_err(err)
    }

    fn __sub__(&self, other: &PyField) -> PyResult<PyField> {
        self.0.sub(&other.0).map(PyField).map_err(err)
    }

    fn __mul__(&self, c: f64) -> PyField {
        PyField(self.0.scaled(c))
    }

    fn __rmul__(&self, c: f64) -> PyField {
        self.__mul__(c)
    }
}

mod num_complex_shim {
    use pyo3::prelude::*;
    use pyo3::types::PyComplex;

    pub struct C(pub f64, pub f64);

    impl<'py> IntoPyObject<'py> for C {
        type Target = PyComplex;
        type Output = Bound<'py, PyComplex>;
        type Error = std::convert::Infallible;

        fn into_pyobject(self, py: Python<'py>) -> Result<Self::Output, Self::Error> {
            Ok(PyComplex::from_doubles(py, self.0, self.1))
        }
    }
}

/// Density perturbation `a` and momentum `m` at time `t`.
#[pyclass(name = "State", frozen, from_py_object)]
#[derive(Clone)]
struct PyState(nsk_core::State);

#[pymethods]
impl PyState {
    #[new]
    fn new(a: &PyField, m: Vec<PyField>, t: f64) -> PyResult<Self> {
        nsk_core::State::new(a.0.clone(), m.into_iter().map(|f| f.0).collect(), t)
            .map(PyState)
            .map_err(err)
    }

    #[getter]
    fn t(&self) -> f64 {
        self.0.t
    }

    #[getter]
    fn density(&self) -> PyField {
        PyField(self.0.a.clone())
    }

    #[getter]
    fn momentum(&self) -> Vec<PyField> {
        self.0.m.iter().cloned().map(PyField).collect()
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid(self.0.grid().clone())
    }

    fn relative_difference(&self, other: &PyState) -> f64 {
        self.0.relative_difference(&other.0)
    }

    /// Writes a snapshot file.
    fn save(&self, path: PathBuf) -> PyResult<()> {
        Snapshot::from_state(&self.0).save(&path).map_err(err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<PyState> {
        Snapshot::load(&path).and_then(|s| s.to_state()).map(PyState).map_err(err)
    }
}

/// Viscosity `mu`, bulk viscosity `lambda` and capillarity `kappa`.
#[pyclass(name = "LinearParams", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyLinearParams(LinearParams);

#[pymethods]
impl PyLinearParams {
    #[new]
    #[pyo3(signature = (mu, kappa, lambda_visc=0.0))]
    fn new(mu: f64, kappa: f64, lambda_visc: f64) -> PyResult<Self> {
        LinearParams::new(mu, lambda_visc, kappa).map(PyLinearParams).map_err(err)
    }

    #[getter]
    fn regime(&self) -> &'static str {
        self.0.regime().name()
    }

    #[getter]
    fn nu(&self) -> f64 {
        self.0.nu()
    }

    /// The Green matrix at time `t` and wavevector `xi`, as nested lists.
    fn green_matrix(&self, t: f64, xi: Vec<f64>) -> PyResult<Vec<Vec<num_complex_shim::C>>> {
        let g = linear::green_matrix(t, &xi, &self.0).map_err(err)?;
        Ok((0..g.size())
            .map(|i| {
                (0..g.size())
                    .map(|j| {
                        let c = g.get(i, j);
                        num_complex_shim::C(c.re, c.im)
                    })
                    .collect()
            })
            .collect())
    }

    /// Fitted `(c0, C)` in the pointwise bound of the Green matrix.
    fn pointwise_bound(&self, dim: usize) -> PyResult<(f64, f64)> {
        let (ts, xis) = linear::default_fit_grids();
        linear::pointwise_bound_fit(&self.0, &ts, &xis, dim).map_err(err)
    }

    #[pyo3(signature = (dim, samples=100, seed=0))]
    fn verify<'py>(&self, py: Python<'py>, dim: usize, samples: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
        let report = linear::linear_verify(&self.0, dim, samples, seed).map_err(err)?;
        serialized(py, &report)
    }

    /// Applies the exact linear flow for time `t`.
    fn propagate(&self, state: &PyState, t: f64) -> PyResult<PyState> {
        linear::apply_semigroup(&state.0, t, &self.0).map(PyState).map_err(err)
    }
}

/// Gaussian initial data of amplitude `epsilon` centred in the box.
#[pyfunction]
#[pyo3(signature = (grid, epsilon, width=1.5, seed=0))]
fn gaussian_data(grid: &PyGrid, epsilon: f64, width: f64, seed: u64) -> PyResult<PyState> {
    solver::build_initial_data(&grid.0, &InitialDataSpec::gaussian(epsilon, width), seed)
        .map(|d| PyState(d.state))
        .map_err(err)
}

/// Result of a nonlinear run.
#[pyclass(name = "Trajectory", frozen)]
struct PyTrajectory {
    #[pyo3(get)]
    times: Vec<f64>,
    #[pyo3(get)]
    mass: Vec<f64>,
    #[pyo3(get)]
    wrap_max: f64,
    #[pyo3(get)]
    abort: Option<(f64, String)>,
    snapshots: Vec<nsk_core::State>,
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn snapshots(&self) -> Vec<PyState> {
        self.snapshots.iter().cloned().map(PyState).collect()
    }

    #[getter]
    fn mass_drift(&self) -> f64 {
        let m0 = self.mass.first().copied().unwrap_or(0.0);
        self.mass.iter().map(|m| (m - m0).abs()).fold(0.0, f64::max)
    }
}

/// Integrates the nonlinear system from `state` up to `t_final`.
#[pyfunction]
#[pyo3(signature = (state, params, dt, t_final, scheme="ETD-RK2", snapshots=30, linear_only=false))]
fn simulate(
    py: Python<'_>,
    state: &PyState,
    params: &PyLinearParams,
    dt: f64,
    t_final: f64,
    scheme: &str,
    snapshots: usize,
    linear_only: bool,
) -> PyResult<PyTrajectory> {
    let scheme = match scheme {
        "ETD1" => Scheme::Etd1,
        "ETD-RK2" => Scheme::EtdRk2,
        other => return Err(PyValueError::new_err(format!("unknown scheme {other:?}"))),
    };
    let mut cfg = StepperConfig::new(dt, scheme, t_final);
    cfg.snapshots = SnapshotPlan::Geometric { count: snapshots };
    cfg.linear_only = linear_only;
    let pressure = PressureModel::default();
    let initial = state.0.clone();
    let p = params.0;
    let traj = py
        .detach(move || {
            let stepper = Stepper::new(initial.grid(), &p, &pressure, &cfg)?;
            solver::simulate(&initial, &stepper, &cfg, &mut [])
        })
        .map_err(err)?;
    Ok(PyTrajectory {
        times: traj.times,
        mass: traj.mass,
        wrap_max: traj.wrap_max,
        abort: traj.abort.map(|a| (a.t, a.reason)),
        snapshots: traj.snapshots,
    })
}

/// Runs the acceptance criteria and returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (level="fast", seed=0))]
fn acceptance_suite<'py>(py: Python<'py>, level: &str, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let level: Level = level.parse().map_err(err)?;
    let report = py.detach(move || acceptance::acceptance_suite(level, seed, &mut |_| {}));
    serialized(py, &report)
}

#[pymodule]
fn nsk(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyField>()?;
    m.add_class::<PyState>()?;
    m.add_class::<PyLinearParams>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(gaussian_data, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(acceptance_suite, m)?)?;
    Ok(())
}
