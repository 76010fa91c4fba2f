//! Python bindings: meshes, run configurations, runs in every mode,
//! snapshot comparison and the level-schedule helpers.

use std::sync::Arc;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use ltsflow::adaptive::{cost_ratio_from_shares, cost_shares as core_cost_shares, subiteration_level as core_level};
use ltsflow::cli::{self, CliError, RunConfig, RunOutcome};
use ltsflow::mesh::{generate_mesh, read_mesh, write_mesh, BoundaryKind, MeshError, MeshSpec};

fn cli_err(e: CliError) -> PyErr {
    match e {
        CliError::Usage(m) => PyValueError::new_err(m),
        CliError::Io(m) => PyIOError::new_err(m),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

fn mesh_err(e: MeshError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn boundary(s: &str) -> PyResult<BoundaryKind> {
    match s {
        "periodic" => Ok(BoundaryKind::Periodic),
        "transmissive" => Ok(BoundaryKind::Transmissive),
        _ => Err(PyValueError::new_err(format!("unknown boundary {s:?}"))),
    }
}

#[pyclass(name = "Mesh", frozen)]
struct PyMesh(Arc<ltsflow::mesh::Mesh>);

#[pymethods]
impl PyMesh {
    /// Uniform line of `n` cells on [0, 1].
    #[staticmethod]
    #[pyo3(signature = (n, boundary="periodic"))]
    fn line(n: usize, boundary: &str) -> PyResult<Self> {
        let spec = MeshSpec::line(n, self::boundary(boundary)?);
        Ok(Self(Arc::new(generate_mesh(&spec).map_err(mesh_err)?)))
    }

    /// n×n square with optional refined rectangles `(x0, y0, x1, y1, scale)`.
    #[staticmethod]
    #[pyo3(signature = (n, boundary="periodic", refine=Vec::new()))]
    fn square(n: usize, boundary: &str, refine: Vec<(f64, f64, f64, f64, u32)>) -> PyResult<Self> {
        let mut spec = MeshSpec::square(n, self::boundary(boundary)?);
        for (x0, y0, x1, y1, s) in refine {
            spec = spec.refine([x0, y0], [x1, y1], s);
        }
        Ok(Self(Arc::new(generate_mesh(&spec).map_err(mesh_err)?)))
    }

    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        let f = std::fs::File::open(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        Ok(Self(Arc::new(read_mesh(std::io::BufReader::new(f)).map_err(mesh_err)?)))
    }

    fn write(&self, path: &str) -> PyResult<()> {
        let f = std::fs::File::create(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        write_mesh(&self.0, std::io::BufWriter::new(f)).map_err(mesh_err)
    }

    #[getter]
    fn n_cells(&self) -> usize {
        self.0.n_cells()
    }

    #[getter]
    fn n_faces(&self) -> usize {
        self.0.n_faces()
    }

    #[getter]
    fn fingerprint(&self) -> u64 {
        self.0.fingerprint()
    }

    fn volumes(&self) -> Vec<f64> {
        self.0.cells.iter().map(|c| c.volume).collect()
    }

    fn centroids(&self) -> Vec<(f64, f64)> {
        self.0.cells.iter().map(|c| (c.centroid[0], c.centroid[1])).collect()
    }

    fn __repr__(&self) -> String {
        format!("Mesh(cells={}, faces={})", self.0.n_cells(), self.0.n_faces())
    }
}

/// Run configuration; keys are the `ltsflow run` flag names.
#[pyclass(name = "Config", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig(RunConfig);

#[pymethods]
impl PyConfig {
    /// Defaults, then `text` in config file format, then `settings`.
    #[new]
    #[pyo3(signature = (text=None, **settings))]
    fn new(text: Option<&str>, settings: Option<std::collections::HashMap<String, Bound<'_, PyAny>>>) -> PyResult<Self> {
        let mut cfg = RunConfig::default();
        if let Some(t) = text {
            cfg.apply_file_str(t).map_err(cli_err)?;
        }
        for (k, v) in settings.unwrap_or_default() {
            let key = k.replace('_', "-");
            let value = match v.extract::<bool>() {
                Ok(b) => b.to_string(),
                Err(_) => v.str()?.to_string(),
            };
            cfg.set(&key, &value).map_err(cli_err)?;
        }
        Ok(Self(cfg))
    }

    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        RunConfig::from_file_str(&text).map(Self).map_err(cli_err)
    }

    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        self.0.set(key, value).map_err(cli_err)
    }

    fn get(&self, key: &str) -> PyResult<String> {
        self.0.get(key).ok_or_else(|| PyValueError::new_err(format!("unknown key {key:?}")))
    }

    fn validate(&self) -> PyResult<()> {
        self.0.validate().map_err(cli_err)
    }

    fn mesh(&self) -> PyResult<PyMesh> {
        Ok(PyMesh(Arc::new(self.0.build_mesh().map_err(cli_err)?)))
    }

    fn to_file_string(&self) -> String {
        self.0.to_file_string()
    }

    fn __repr__(&self) -> String {
        format!("Config(mode={}, iterations={})", self.0.get("mode").unwrap_or_default(), self.0.iterations)
    }
}

/// Iteration statistics of one rank.
#[pyclass(name = "IterationStats", frozen, get_all)]
struct PyIterationStats {
    iteration: u64,
    rank: u32,
    theta: u8,
    level_counts: Vec<u64>,
    elementary_tasks: u64,
    inserted_tasks: u64,
    elapsed_s: f64,
    executing_s: f64,
    sleeping_s: f64,
    overhead_s: f64,
    identity_error_max: f64,
}

#[pyclass(name = "Outcome", frozen)]
struct PyOutcome(RunOutcome);

#[pymethods]
impl PyOutcome {
    #[getter]
    fn extensive(&self) -> Option<Vec<f64>> {
        self.0.snapshot.as_ref().map(|s| s.extensive.clone())
    }

    #[getter]
    fn intensive(&self) -> Option<Vec<f64>> {
        self.0.snapshot.as_ref().map(|s| s.intensive.clone())
    }

    #[getter]
    fn mass_drift(&self) -> Option<f64> {
        self.0.mass_drift()
    }

    #[getter]
    fn elapsed_s(&self) -> f64 {
        self.0.elapsed.as_secs_f64()
    }

    /// θ of every iteration (reference mode) or of every iteration of rank 0.
    fn thetas(&self) -> Vec<u32> {
        if !self.0.level_maps.is_empty() {
            return self.0.level_maps.iter().map(|m| m.theta as u32).collect();
        }
        self.0.ranks.first().map(|r| r.iterations.iter().map(|i| i.stats.theta as u32).collect()).unwrap_or_default()
    }

    fn iterations(&self) -> Vec<PyIterationStats> {
        let secs = |d: std::time::Duration| d.as_secs_f64();
        let mut out = Vec::new();
        for r in &self.0.ranks {
            for it in &r.iterations {
                let s = &it.stats;
                out.push(PyIterationStats {
                    iteration: s.iteration,
                    rank: r.rank,
                    theta: s.theta,
                    level_counts: s.level_counts.clone(),
                    elementary_tasks: s.elementary_tasks,
                    inserted_tasks: s.inserted_tasks,
                    elapsed_s: secs(s.elapsed),
                    executing_s: it.profiles.iter().map(|p| secs(p.executing)).sum(),
                    sleeping_s: it.profiles.iter().map(|p| secs(p.sleeping)).sum(),
                    overhead_s: it.profiles.iter().map(|p| secs(p.overhead)).sum(),
                    identity_error_max: it.profiles.iter().map(|p| p.identity_error()).fold(0.0, f64::max),
                });
            }
        }
        out
    }

    fn summary_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        cli::write_summary(&mut buf, &self.0).map_err(|e| PyIOError::new_err(e.to_string()))?;
        Ok(String::from_utf8_lossy(&buf).into_owned())
    }

    /// Writes the artifacts named in `config` (snapshot, trace, CSVs).
    fn write_artifacts(&self, config: &PyConfig) -> PyResult<()> {
        cli::write_artifacts(&config.0, &self.0).map_err(cli_err)
    }
}

/// Runs the configuration in its mode. The GIL is released meanwhile.
#[pyfunction]
fn run(py: Python<'_>, config: &PyConfig) -> PyResult<PyOutcome> {
    let cfg = config.0.clone();
    py.detach(move || cli::run(&cfg)).map(PyOutcome).map_err(cli_err)
}

/// Largest per-cell relative difference: `(max_rel_diff, cell, passed)`.
#[pyfunction]
#[pyo3(signature = (a, b, tolerance=1e-12))]
fn compare(a: Vec<f64>, b: Vec<f64>, tolerance: f64) -> PyResult<(f64, usize, bool)> {
    if a.len() != b.len() {
        return Err(PyValueError::new_err(format!("lengths differ: {} vs {}", a.len(), b.len())));
    }
    let snap = |v: Vec<f64>| cli::Snapshot { fingerprint: 0, iteration: 0, intensive: v.clone(), extensive: v };
    let c = cli::compare(&snap(a), &snap(b), tolerance).map_err(cli_err)?;
    Ok((c.max_rel_diff, c.cell, c.pass))
}

/// Level τ whose step starts at 1-based subiteration `s` of `2^θ`.
#[pyfunction]
fn subiteration_level(s: u32, theta: u8) -> PyResult<u8> {
    core_level(s, theta).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Per-level cost shares, in the unit of the cell shares.
#[pyfunction]
fn cost_shares(cell_shares: Vec<f64>, theta: u8) -> PyResult<Vec<f64>> {
    if cell_shares.len() != theta as usize + 1 {
        return Err(PyValueError::new_err(format!("expected {} shares for theta {theta}", theta as usize + 1)));
    }
    Ok(core_cost_shares(&cell_shares, theta))
}

#[pyfunction]
fn cost_ratio(cell_shares: Vec<f64>, theta: u8) -> PyResult<f64> {
    if cell_shares.len() != theta as usize + 1 {
        return Err(PyValueError::new_err(format!("expected {} shares for theta {theta}", theta as usize + 1)));
    }
    Ok(cost_ratio_from_shares(&cell_shares, theta))
}

#[pymodule]
fn ltsflow_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMesh>()?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyOutcome>()?;
    m.add_class::<PyIterationStats>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(subiteration_level, m)?)?;
    m.add_function(wrap_pyfunction!(cost_shares, m)?)?;
    m.add_function(wrap_pyfunction!(cost_ratio, m)?)?;
    Ok(())
}
