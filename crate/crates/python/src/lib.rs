//! Python module `kinchem`: grids and fields, phase-space states, run
//! orchestration and the verification checks.
//!
//! Structured inputs (kernels, velocity sets, checks, run configs) are passed
//! as JSON text in the same format the command-line configs use; structured
//! outputs come back as Python dicts and lists.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use kinchem::analysis::{self, MixedNormSpec, NormOrder};
use kinchem::config::{CheckSpec, InitialCondition, RunConfig};
use kinchem::fields::{self, PeriodicGrid, ScalarField};
use kinchem::kernels::KernelSpec;
use kinchem::kinetic::{run_kinetic, KineticDensity, KineticOptions, ScatterMode, VelocitySpec};
use kinchem::run;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn to_py(py: Python<'_>, value: &impl serde::Serialize) -> PyResult<PyObject> {
    let text = serde_json::to_string(value).map_err(runtime_err)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn parse<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> PyResult<T> {
    serde_json::from_str(text).map_err(|e| PyValueError::new_err(format!("{what}: {e}")))
}

/// Periodic grid with `n` nodes per axis on a torus of side `length`.
#[pyclass(name = "Grid", frozen)]
#[derive(Clone)]
struct PyGrid {
    inner: PeriodicGrid,
}

#[pymethods]
impl PyGrid {
    #[new]
    fn new(dim: usize, n: usize, length: f64) -> PyResult<Self> {
        Ok(Self {
            inner: PeriodicGrid::new(dim, n, length).map_err(value_err)?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn length(&self) -> f64 {
        self.inner.length()
    }

    #[getter]
    fn spacing(&self) -> f64 {
        self.inner.spacing()
    }

    #[getter]
    fn cells(&self) -> usize {
        self.inner.len()
    }

    /// Node coordinates, one `[x, y, z]` per cell in storage order.
    fn positions(&self) -> Vec<[f64; 3]> {
        (0..self.inner.len()).map(|i| self.inner.node_position(i)).collect()
    }

    /// Solves `−ΔS + S = ρ` on the torus; `rho` in storage order.
    fn solve_screened_poisson(&self, rho: Vec<f64>) -> PyResult<Vec<f64>> {
        let rho = ScalarField::new(self.inner, rho).map_err(value_err)?;
        Ok(fields::solve_screened_poisson(&rho).map_err(value_err)?.into_values())
    }

    /// `‖ρ‖_p` with the cell-volume quadrature.
    fn lp_norm(&self, values: Vec<f64>, p: f64) -> PyResult<f64> {
        Ok(ScalarField::new(self.inner, values).map_err(value_err)?.lp_norm(p))
    }

    fn __repr__(&self) -> String {
        format!("Grid(dim={}, n={}, length={})", self.inner.dim(), self.inner.n(), self.inner.length())
    }
}

/// Phase-space density `f(x, v)` on a grid times a discrete velocity set.
#[pyclass(name = "KineticState")]
#[derive(Clone)]
struct PyKinetic {
    inner: KineticDensity,
}

#[pymethods]
impl PyKinetic {
    /// Builds the initial state from a grid, a velocity-set JSON
    /// (`{"kind": "sphere", "n_v": 16}`) and an initial-condition JSON
    /// (`{"preset": "gaussian-bump", "M": 1.0}`).
    #[staticmethod]
    fn from_preset(grid: &PyGrid, velocity: &str, initial: &str) -> PyResult<Self> {
        let vel: VelocitySpec = parse(velocity, "velocity")?;
        let ic: InitialCondition = parse(initial, "initial")?;
        Ok(Self {
            inner: ic.kinetic(&grid.inner, &vel).map_err(value_err)?,
        })
    }

    #[getter]
    fn time(&self) -> f64 {
        self.inner.time
    }

    #[getter]
    fn n_velocities(&self) -> usize {
        self.inner.velocities().len()
    }

    fn mass(&self) -> f64 {
        self.inner.mass()
    }

    /// `ρ = ∫f dv` in storage order.
    fn density(&self) -> Vec<f64> {
        self.inner.density().into_values()
    }

    /// Raw values, velocity-major: index `j * cells + c`.
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    /// Mixed norm with outer exponent `p` and inner exponent `q`; the
    /// velocity integral is inner unless `space_inner` is set.
    #[pyo3(signature = (p, q, space_inner = false))]
    fn norm(&self, p: f64, q: f64, space_inner: bool) -> f64 {
        let order = if space_inner { NormOrder::SpaceInner } else { NormOrder::VelocityInner };
        analysis::mixed_norm(&self.inner, &MixedNormSpec::new(p, q, order))
    }

    /// Runs the coupled solver to `t_end` under the kernel JSON and returns
    /// the final state with the diagnostics as `{column: [values]}`.
    #[pyo3(signature = (kernel, dt, t_end, scatter = "explicit", norms = Vec::new()))]
    fn run(&self, py: Python<'_>, kernel: &str, dt: f64, t_end: f64, scatter: &str, norms: Vec<(f64, f64)>) -> PyResult<(Self, PyObject)> {
        let spec: KernelSpec = parse(kernel, "kernel")?;
        let mut opts = KineticOptions::new(dt, t_end);
        opts.scatter = match scatter {
            "explicit" => ScatterMode::Explicit,
            "exponential" => ScatterMode::Exponential,
            other => return Err(PyValueError::new_err(format!("unknown scatter mode {other}"))),
        };
        opts.norms = norms.into_iter().map(|(p, q)| MixedNormSpec::new(p, q, NormOrder::VelocityInner)).collect();
        let out = py.allow_threads(|| run_kinetic(&self.inner, &spec, &opts)).map_err(runtime_err)?;
        let columns: serde_json::Map<String, serde_json::Value> = out
            .diagnostics
            .columns
            .iter()
            .enumerate()
            .map(|(i, c)| (c.name.clone(), out.diagnostics.rows.iter().map(|r| r[i]).collect::<Vec<f64>>().into()))
            .collect();
        Ok((Self { inner: out.state }, to_py(py, &columns)?))
    }
}

/// Bessel potential of `−Δ + 1` in dimension 2 or 3 at radius `r`.
#[pyfunction]
fn green_function(dim: usize, r: f64) -> PyResult<f64> {
    fields::green_function(dim, r).map_err(value_err)
}

/// Survival function of the Kolmogorov distribution.
#[pyfunction]
fn kolmogorov_sf(x: f64) -> f64 {
    analysis::kolmogorov_sf(x)
}

/// Runs one verification check given as JSON (`{"check": "strichartz"}`)
/// and returns its report.
#[pyfunction]
#[pyo3(signature = (check, seed = 0))]
fn run_check(py: Python<'_>, check: &str, seed: u64) -> PyResult<PyObject> {
    let spec: CheckSpec = parse(check, "check")?;
    let report = py.allow_threads(|| run::run_check(&spec, seed)).map_err(runtime_err)?;
    to_py(py, &report)
}

/// Names of every available check.
#[pyfunction]
fn check_names() -> Vec<&'static str> {
    CheckSpec::all().iter().map(|c| c.name()).collect()
}

/// Validates and executes a run config (JSON text). Returns
/// `(exit_code, manifest)`; configuration errors raise `ValueError`.
#[pyfunction]
#[pyo3(signature = (config, out = None))]
fn run_config(py: Python<'_>, config: &str, out: Option<PathBuf>) -> PyResult<(i32, PyObject)> {
    let cfg = RunConfig::from_json(config).map_err(value_err)?;
    let outcome = py.allow_threads(|| run::run_config(&cfg, out.as_deref())).map_err(|e| match e {
        run::RunError::Config(c) => value_err(c),
        e => runtime_err(e),
    })?;
    Ok((outcome.exit_code, to_py(py, &outcome.manifest)?))
}

/// Re-hashes a run directory and renders its summary. Returns
/// `(exit_code, summary)`.
#[pyfunction]
fn emit_report(py: Python<'_>, dir: PathBuf) -> PyResult<(i32, PyObject)> {
    let summary = run::emit_report(&dir).map_err(runtime_err)?;
    Ok((summary.exit_code(), to_py(py, &summary)?))
}

#[pymodule]
#[pyo3(name = "kinchem")]
fn kinchem_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyKinetic>()?;
    m.add_function(wrap_pyfunction!(green_function, m)?)?;
    m.add_function(wrap_pyfunction!(kolmogorov_sf, m)?)?;
    m.add_function(wrap_pyfunction!(run_check, m)?)?;
    m.add_function(wrap_pyfunction!(check_names, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(emit_report, m)?)?;
    m.add("EXIT_OK", run::EXIT_OK)?;
    m.add("EXIT_CONFIG", run::EXIT_CONFIG)?;
    m.add("EXIT_NUMERICAL", run::EXIT_NUMERICAL)?;
    m.add("EXIT_VERIFICATION", run::EXIT_VERIFICATION)?;
    Ok(())
}
