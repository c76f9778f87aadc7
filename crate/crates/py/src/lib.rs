//! Python bindings for the impactforge core.

use std::path::PathBuf;

use impactforge::explorer::{self, SweepGrid};
use impactforge::fesolver::{run_simulation_with, Lateral, Loading, MaterialModel, SolverConfig};
use impactforge::geometry::{
    build_design, mesh_design, DesignFile, DesignParams, RasterMesh, DEFAULT_EDGE,
};
use impactforge::pipeline::{self, PipelineConfig};
use impactforge::surrogate::{checkpoint, predict, SurrogateModel};
use impactforge::{dataset::ScalerParams, Error};
use pyo3::exceptions::{PyFileNotFoundError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidArgument(_) | Error::Config(_) | Error::UndefinedCorrelation => {
            PyValueError::new_err(e.to_string())
        }
        Error::MissingArtifact { .. } => PyFileNotFoundError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn json_to_py<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Tubule layout: polygon sides, grid counts, rotation in degrees and
/// tubule area fraction of its cell.
#[pyclass(name = "Design", frozen, from_py_object)]
#[derive(Clone)]
struct PyDesign {
    inner: DesignParams,
}

#[pymethods]
impl PyDesign {
    #[new]
    #[pyo3(signature = (sides, nx, ny, angle_deg, vf))]
    fn new(sides: usize, nx: usize, ny: usize, angle_deg: f64, vf: f64) -> PyResult<Self> {
        let file = DesignFile {
            sides,
            nx,
            ny,
            angle_deg: angle_deg.rem_euclid(360.0),
            vf,
        };
        Ok(PyDesign {
            inner: DesignParams::try_from(file).map_err(to_py)?,
        })
    }

    #[getter]
    fn sides(&self) -> usize {
        self.inner.sides
    }

    #[getter]
    fn nx(&self) -> usize {
        self.inner.nx
    }

    #[getter]
    fn ny(&self) -> usize {
        self.inner.ny
    }

    #[getter]
    fn angle_deg(&self) -> f64 {
        self.inner.angle_deg()
    }

    #[getter]
    fn vf(&self) -> f64 {
        self.inner.vf
    }

    /// Solid cross-section area, mm².
    fn solid_area(&self) -> f64 {
        self.inner.solid_area()
    }

    /// None for a valid design, otherwise the reason it is rejected.
    fn rejection(&self) -> PyResult<Option<String>> {
        Ok(build_design(&self.inner)
            .map_err(to_py)?
            .err()
            .map(|r| r.to_string()))
    }

    fn is_valid(&self) -> PyResult<bool> {
        Ok(self.rejection()?.is_none())
    }

    /// Element mask rows from top to bottom, '1' for solid.
    #[pyo3(signature = (edge = DEFAULT_EDGE))]
    fn mask(&self, edge: f64) -> PyResult<Vec<String>> {
        let mesh = mesh_design(&self.inner, edge)
            .map_err(to_py)?
            .map_err(|r| PyValueError::new_err(r.to_string()))?;
        Ok(mesh.to_ascii().lines().map(str::to_owned).collect())
    }

    fn __repr__(&self) -> String {
        format!("Design({})", self.inner)
    }
}

/// FE compression run. `design=None` simulates the dense specimen. Returns a
/// dict of time histories (SI units, energies per unit thickness).
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (design, rate, final_strain = 0.25, record_points = 101, edge = DEFAULT_EDGE, max_steps = Some(6000), confined = false))]
fn simulate<'py>(
    py: Python<'py>,
    design: Option<PyDesign>,
    rate: f64,
    final_strain: f64,
    record_points: usize,
    edge: f64,
    max_steps: Option<usize>,
    confined: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let mesh = match &design {
        Some(d) => mesh_design(&d.inner, edge)
            .map_err(to_py)?
            .map_err(|r| PyValueError::new_err(r.to_string()))?,
        None => RasterMesh::solid(edge).map_err(to_py)?,
    };
    let cfg = SolverConfig {
        max_steps,
        lateral: if confined {
            Lateral::Confined
        } else {
            Lateral::Free
        },
        ..Default::default()
    };
    let loading = Loading {
        strain_rate: rate,
        final_strain,
        record_points,
    };
    let rec = py
        .detach(|| run_simulation_with(&mesh, &MaterialModel::default(), &loading, &cfg))
        .map_err(to_py)?;
    json_to_py(py, &rec)
}

/// Specific energy absorption, J/kg, of a nominal stress–strain curve.
#[pyfunction]
#[pyo3(signature = (strain, stress, design, rho = 1070.0))]
fn sea(strain: Vec<f64>, stress: Vec<f64>, design: PyDesign, rho: f64) -> PyResult<f64> {
    explorer::sea(&strain, &stress, &design.inner, rho).map_err(to_py)
}

#[pyfunction]
fn pearson(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    explorer::pearson(&x, &y).map_err(to_py)
}

/// Index of a design on the default sweep grid.
#[pyfunction]
fn design_index(design: PyDesign) -> PyResult<usize> {
    SweepGrid::default()
        .design_index(&design.inner)
        .map_err(to_py)
}

/// Design at an index of the default sweep grid.
#[pyfunction]
fn design_at(index: usize) -> PyResult<PyDesign> {
    Ok(PyDesign {
        inner: SweepGrid::default().params_at(index).map_err(to_py)?,
    })
}

/// Trained GRU surrogate loaded from a checkpoint.
#[pyclass(name = "Surrogate", frozen)]
struct PySurrogate {
    model: SurrogateModel,
    scaler: ScalerParams,
}

#[pymethods]
impl PySurrogate {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (model, scaler) = checkpoint::load(&path).map_err(to_py)?;
        let scaler = scaler.ok_or_else(|| PyValueError::new_err("checkpoint carries no scaler"))?;
        Ok(PySurrogate { model, scaler })
    }

    #[getter]
    fn n_params(&self) -> usize {
        self.model.n_params()
    }

    /// Predicted curves: strain, stress_Pa, e_plastic, e_elastic, e_absorbed
    /// plus an extrapolation flag.
    #[pyo3(signature = (design, rate, final_strain = 0.25))]
    fn predict<'py>(
        &self,
        py: Python<'py>,
        design: PyDesign,
        rate: f64,
        final_strain: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let p =
            predict(&self.model, &self.scaler, &design.inner, rate, final_strain).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("strain", &p.strain)?;
        for (c, name) in ["stress_Pa", "e_plastic", "e_elastic", "e_absorbed"]
            .iter()
            .enumerate()
        {
            d.set_item(*name, p.outputs.iter().map(|r| r[c]).collect::<Vec<f64>>())?;
        }
        d.set_item("extrapolated", p.extrapolated)?;
        Ok(d)
    }
}

/// Runs one pipeline stage (campaign, train, sweep, analyze, validate) and
/// returns its summary.
#[pyfunction]
#[pyo3(signature = (stage, config = None, workdir = None))]
fn run_stage<'py>(
    py: Python<'py>,
    stage: &str,
    config: Option<PathBuf>,
    workdir: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = match config {
        Some(p) => PipelineConfig::load(&p).map_err(to_py)?,
        None => PipelineConfig::default(),
    };
    if let Some(w) = workdir {
        cfg.workdir = w;
    }
    pipeline::init_workers(cfg.workers);
    let stage = stage.to_owned();
    let value = py
        .detach(move || -> impactforge::Result<serde_json::Value> {
            let v = match stage.as_str() {
                "campaign" => serde_json::to_value(pipeline::run_campaign(&cfg)?)?,
                "train" => serde_json::to_value(pipeline::train_stage(&cfg, |_| {})?)?,
                "sweep" => serde_json::to_value(pipeline::sweep_stage(&cfg)?.0)?,
                "analyze" => serde_json::to_value(pipeline::analyze(&cfg)?)?,
                "validate" => serde_json::to_value(pipeline::validate_stage(&cfg)?)?,
                other => return Err(Error::InvalidArgument(format!("unknown stage {other:?}"))),
            };
            Ok(v)
        })
        .map_err(to_py)?;
    json_to_py(py, &value)
}

#[pymodule]
fn impactforge_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDesign>()?;
    m.add_class::<PySurrogate>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(sea, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(design_index, m)?)?;
    m.add_function(wrap_pyfunction!(design_at, m)?)?;
    m.add_function(wrap_pyfunction!(run_stage, m)?)?;
    Ok(())
}
