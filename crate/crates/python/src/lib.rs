use std::path::PathBuf;

use nalgebra::DMatrix;
use num_complex::Complex64;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;

use engine::density::{self, DensityGrid as CoreGrid, PropagateOptions};
use engine::dynamics::{Lgvi as CoreLgvi, RigidBodyState};
use engine::estimation::Measurement;
use engine::harmonic;
use engine::marginals::{
    attitude_marginal, attitude_series, sphere_marginal, sphere_marginal_series, MarginalMethod, SphereGrid,
};
use engine::parallel::Workers;
use engine::pipeline::{self, RunConfig};
use engine::so3::{Axis, Rotation, Vec3};
use engine::Error;

fn py_err(e: Error) -> PyErr {
    let msg = format!("{}: {e}", e.kind());
    match e {
        Error::Io(_) => PyOSError::new_err(msg),
        Error::Config { .. }
        | Error::InvalidParameter { .. }
        | Error::NotRotation { .. }
        | Error::NotSkew { .. }
        | Error::NotUnit { .. }
        | Error::InvalidAxis(_)
        | Error::BandlimitTooHighForGrid { .. }
        | Error::Format(_)
        | Error::ShapeMismatch(_) => PyValueError::new_err(msg),
        _ => PyRuntimeError::new_err(msg),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for engine::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

/// Serializes through JSON so summaries arrive as plain dicts.
fn to_py<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn rotation(m: [f64; 9]) -> PyResult<Rotation> {
    Rotation::from_row_slice(&m).py()
}

fn vec3(v: [f64; 3]) -> Vec3 {
    Vec3::new(v[0], v[1], v[2])
}

fn arr3(v: &Vec3) -> [f64; 3] {
    [v[0], v[1], v[2]]
}

/// Run configuration parsed from `key = value` text.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct Config {
    inner: RunConfig,
}

#[pymethods]
impl Config {
    #[new]
    #[pyo3(signature = (text = ""))]
    fn new(text: &str) -> PyResult<Self> {
        Ok(Config {
            inner: RunConfig::from_text(text).py()?,
        })
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        let text =
            std::fs::read_to_string(&path).map_err(|e| PyOSError::new_err(format!("{}: {e}", path.display())))?;
        Self::new(&text)
    }

    fn hash(&self) -> String {
        self.inner.hash()
    }

    fn canonical(&self) -> String {
        self.inner.canonical()
    }

    #[getter]
    fn out_dir(&self) -> PathBuf {
        self.inner.out_dir.clone()
    }

    #[setter]
    fn set_out_dir(&mut self, dir: PathBuf) {
        self.inner.out_dir = dir;
    }

    #[getter]
    fn workers(&self) -> usize {
        self.inner.workers.get()
    }

    #[setter]
    fn set_workers(&mut self, n: usize) -> PyResult<()> {
        if n == 0 {
            return Err(PyValueError::new_err("workers must be at least 1"));
        }
        self.inner.workers = Workers::new(n);
        Ok(())
    }

    #[getter]
    fn snapshot_times(&self) -> Vec<f64> {
        self.inner.snapshot_times.clone()
    }

    #[setter]
    fn set_snapshot_times(&mut self, times: Vec<f64>) -> PyResult<()> {
        let mut c = self.inner.clone();
        c.snapshot_times = times;
        c.validate().py()?;
        self.inner = c;
        Ok(())
    }

    fn __repr__(&self) -> String {
        format!("Config(sha256={})", self.inner.hash())
    }
}

/// A density sampled on an Euler-angle by velocity grid.
#[pyclass(name = "DensityGrid", from_py_object)]
#[derive(Clone)]
struct DensityGrid {
    inner: CoreGrid,
}

#[pymethods]
impl DensityGrid {
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(DensityGrid {
            inner: pipeline::read_density_file(&path).py()?,
        })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        let mut f = std::fs::File::create(path)?;
        density::write_density(&mut f, &self.inner).py()
    }

    #[getter]
    fn step(&self) -> u64 {
        self.inner.step()
    }

    /// `(attitude node count, velocity node count)`.
    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.quadrature().len(), self.inner.velocity().len())
    }

    #[getter]
    fn velocity_box(&self) -> ([f64; 3], [f64; 3]) {
        (arr3(self.inner.velocity().lo()), arr3(self.inner.velocity().hi()))
    }

    /// Values in attitude-major order.
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    fn mass(&self) -> f64 {
        self.inner.mass(Workers::available())
    }

    /// Interpolated density at a rotation (9 values, row-major) and angular
    /// velocity.
    fn evaluate(&self, r: [f64; 9], omega: [f64; 3]) -> PyResult<f64> {
        self.inner.evaluate(&rotation(r)?, &vec3(omega)).py()
    }

    /// Sphere marginal of body axis 1, 2 or 3 as rows of
    /// `(colatitude, longitude, density)`. `method` is `"series"` (Fourier
    /// series up to `bandlimit`, by default the largest the grid allows, at
    /// most 10) or `"trilinear"` (with `circle_nodes` per circle).
    #[pyo3(signature = (axis, n_colat = 65, n_lon = 129, method = "series", bandlimit = None, circle_nodes = 64))]
    fn sphere_marginal(
        &self,
        axis: usize,
        n_colat: usize,
        n_lon: usize,
        method: &str,
        bandlimit: Option<usize>,
        circle_nodes: usize,
    ) -> PyResult<Vec<(f64, f64, f64)>> {
        let axis = Axis::from_index(axis).py()?;
        let grid = SphereGrid::new(n_colat, n_lon).py()?;
        let method = MarginalMethod::from_name(method)
            .ok_or_else(|| PyValueError::new_err(format!("method must be series or trilinear, got `{method}`")))?;
        let min_nodes = self.inner.quadrature().counts().into_iter().min().unwrap_or(1);
        let bandlimit = bandlimit.unwrap_or(10.min((min_nodes.max(1) - 1) / 2));
        let a = attitude_marginal(&self.inner, Workers::available());
        let s = match method {
            MarginalMethod::Series => {
                sphere_marginal_series(&attitude_series(&a, bandlimit).py()?, axis, grid, Workers::available()).py()?
            }
            MarginalMethod::Trilinear => sphere_marginal(&a, axis, grid, circle_nodes, Workers::available()).py()?,
        };
        Ok((0..grid.len())
            .map(|i| {
                let (j, k) = grid.split(i);
                (grid.colatitude(j), grid.longitude(k), s.values()[i])
            })
            .collect())
    }

    /// Coefficient matrices `P^l` of the attitude marginal up to degree `bandlimit`.
    fn attitude_spectrum(&self, bandlimit: usize) -> PyResult<Vec<Vec<Vec<Complex64>>>> {
        let s = density::attitude_spectrum(&self.inner, bandlimit, Workers::available()).py()?;
        Ok(s.attitude_marginal().coeffs().iter().map(rows).collect())
    }

    fn __repr__(&self) -> String {
        let (a, v) = self.shape();
        format!("DensityGrid(step={}, attitude={a}, velocity={v})", self.inner.step())
    }
}

fn rows<T: nalgebra::Scalar>(m: &DMatrix<T>) -> Vec<Vec<T>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].clone()).collect())
        .collect()
}

/// Discrete flow of the configured pendulum.
#[pyclass(name = "Lgvi", from_py_object)]
#[derive(Clone)]
struct Lgvi {
    inner: CoreLgvi,
}

fn state(r: [f64; 9], omega: [f64; 3]) -> PyResult<RigidBodyState> {
    Ok(RigidBodyState::new(rotation(r)?, vec3(omega)))
}

fn unpack(s: RigidBodyState) -> ([f64; 9], [f64; 3]) {
    (s.attitude.to_row_array(), arr3(&s.omega))
}

#[pymethods]
impl Lgvi {
    #[new]
    #[pyo3(signature = (config = None))]
    fn new(config: Option<&Config>) -> PyResult<Self> {
        let c = config.map_or_else(RunConfig::default, |c| c.inner.clone());
        Ok(Lgvi {
            inner: CoreLgvi::new(c.pendulum, c.step).py()?,
        })
    }

    #[pyo3(signature = (r, omega, k = 1))]
    fn flow(&self, r: [f64; 9], omega: [f64; 3], k: usize) -> PyResult<([f64; 9], [f64; 3])> {
        Ok(unpack(self.inner.flow(&state(r, omega)?, k).py()?))
    }

    #[pyo3(signature = (r, omega, k = 1))]
    fn backward_flow(&self, r: [f64; 9], omega: [f64; 3], k: usize) -> PyResult<([f64; 9], [f64; 3])> {
        Ok(unpack(self.inner.backward_flow(&state(r, omega)?, k).py()?))
    }

    fn energy(&self, r: [f64; 9], omega: [f64; 3]) -> PyResult<f64> {
        Ok(self.inner.energy(&state(r, omega)?))
    }
}

/// Wigner small-d matrices `d^l(β)` for `l = 0..=bandlimit`.
#[pyfunction]
fn wigner_d(bandlimit: usize, beta: f64) -> Vec<Vec<Vec<f64>>> {
    let t = harmonic::wigner_d(bandlimit, beta);
    (0..=bandlimit).map(|l| rows(t.matrix(l))).collect()
}

/// Irreducible representation `U^l(R)`.
#[pyfunction]
fn irrep(l: usize, r: [f64; 9]) -> PyResult<Vec<Vec<Complex64>>> {
    Ok(rows(&harmonic::irrep(l, &rotation(r)?).u))
}

/// The initial density on the configured grid.
#[pyfunction]
fn initial_density(config: &Config) -> PyResult<DensityGrid> {
    Ok(DensityGrid {
        inner: pipeline::initial_density(&config.inner).py()?.0,
    })
}

/// Advances a grid by `k` steps; returns the grid and `(mass, escaped_mass)`.
#[pyfunction]
fn propagate_grid(grid: &DensityGrid, config: &Config, k: usize) -> PyResult<(DensityGrid, f64, f64)> {
    let c = &config.inner;
    let lgvi = CoreLgvi::new(c.pendulum.clone(), c.step).py()?;
    let opts = PropagateOptions {
        workers: c.workers,
        velocity_box: c.velocity_box,
        renormalize: c.renormalize,
    };
    let (d, r) = density::propagate(&grid.inner, &lgvi, k, &opts).py()?;
    Ok((DensityGrid { inner: d }, r.mass, r.escaped_mass))
}

fn progress_printer(verbose: bool) -> impl FnMut(&str) {
    move |line: &str| {
        if verbose {
            eprintln!("{line}");
        }
    }
}

/// Snapshot run; writes files to `config.out_dir` and returns the summary.
#[pyfunction]
#[pyo3(signature = (config, verbose = false))]
fn propagate<'py>(py: Python<'py>, config: &Config, verbose: bool) -> PyResult<Bound<'py, PyAny>> {
    let c = config.inner.clone();
    let s = py
        .detach(move || pipeline::cmd_propagate(&c, &mut progress_printer(verbose)))
        .py()?;
    to_py(py, &s)
}

/// Estimation run over `(k, [z1..z6])` measurements.
#[pyfunction]
#[pyo3(signature = (config, measurements, exact = true, verbose = false))]
fn estimate<'py>(
    py: Python<'py>,
    config: &Config,
    measurements: Vec<(u64, [f64; 6])>,
    exact: bool,
    verbose: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let ms = measurements
        .into_iter()
        .map(|(k, z)| Measurement::new(k, z))
        .collect::<engine::Result<Vec<_>>>()
        .py()?;
    let c = config.inner.clone();
    let s = py
        .detach(move || pipeline::cmd_estimate(&c, &ms, exact, &mut progress_printer(verbose)))
        .py()?;
    to_py(py, &s)
}

/// Noisy measurements of the configured trajectory as `(k, [z1..z6])`.
#[pyfunction]
fn simulate(config: &Config, every: u64, count: usize, seed: u64) -> PyResult<Vec<(u64, [f64; 6])>> {
    let (ms, _) = pipeline::simulate_measurements(&config.inner, every, count, seed).py()?;
    Ok(ms.iter().map(|m| (m.step, std::array::from_fn(|i| m.z[i]))).collect())
}

#[pyfunction]
fn trajectory<'py>(py: Python<'py>, config: &Config) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &pipeline::cmd_trajectory(&config.inner).py()?)
}

#[pymodule]
#[pyo3(name = "so3_density")]
fn so3_density_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", pipeline::TOOL_VERSION)?;
    m.add_class::<Config>()?;
    m.add_class::<DensityGrid>()?;
    m.add_class::<Lgvi>()?;
    m.add_function(wrap_pyfunction!(wigner_d, m)?)?;
    m.add_function(wrap_pyfunction!(irrep, m)?)?;
    m.add_function(wrap_pyfunction!(initial_density, m)?)?;
    m.add_function(wrap_pyfunction!(propagate_grid, m)?)?;
    m.add_function(wrap_pyfunction!(propagate, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(trajectory, m)?)?;
    Ok(())
}
