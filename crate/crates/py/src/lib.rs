//! Python bindings: scenario simulation, streaming tracking, camera
//! geometry and trajectory metrics.

use mvglmb_core::geometry::{self, BoundingBox, CameraModel, Ellipsoid};
use mvglmb_core::io;
use mvglmb_core::metrics::{BaseDistance, EvalConfig};
use mvglmb_core::occlusion::OcclusionModel;
use mvglmb_core::sensing::Measurement;
use mvglmb_core::tracker::{self, TrackFlags};
use mvglmb_core::{MvGlmbFilter, RunConfig};
use nalgebra::{DVector, Vector3};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use std::path::{Path, PathBuf};

fn io_err(e: io::IoError) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn load_config(path: Option<&str>) -> PyResult<RunConfig> {
    match path {
        Some(p) => io::read_run_config(Path::new(p)).map_err(io_err),
        None => Ok(RunConfig::default()),
    }
}

/// One calibrated camera; supports projection and ground back-projection.
#[pyclass(name = "Camera")]
struct PyCamera {
    inner: CameraModel,
}

#[pymethods]
impl PyCamera {
    /// Projects an axis-aligned ellipsoid to `(cx, cy, w, h)` pixels.
    fn project(
        &self,
        center: [f64; 3],
        half_lengths: [f64; 3],
    ) -> PyResult<(f64, f64, f64, f64)> {
        let e = Ellipsoid::new(
            Vector3::new(center[0], center[1], center[2]),
            Vector3::new(half_lengths[0], half_lengths[1], half_lengths[2]),
        );
        let b = geometry::project_ellipsoid(&self.inner, &e)
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok((b.center.x, b.center.y, b.width(), b.height()))
    }

    /// Maps a box bottom-center to ground-plane `(x, y)` meters.
    fn ground_point(&self, cx: f64, cy: f64, w: f64, h: f64) -> PyResult<(f64, f64)> {
        let b = BoundingBox::from_center_size(cx, cy, w, h);
        let g = geometry::ground_point(&self.inner, &b)
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok((g.x, g.y))
    }

    fn is_active(&self, frame: u32) -> bool {
        self.inner.is_active(frame)
    }

    #[getter]
    fn id(&self) -> usize {
        self.inner.id
    }
}

#[pyfunction]
fn load_cameras(path: &str) -> PyResult<Vec<PyCamera>> {
    Ok(io::read_cameras(Path::new(path))
        .map_err(io_err)?
        .into_iter()
        .map(|inner| PyCamera { inner })
        .collect())
}

/// Streaming multi-view GLMB tracker over per-frame detections.
#[pyclass(name = "Tracker")]
struct PyTracker {
    filter: MvGlmbFilter,
}

#[pymethods]
impl PyTracker {
    #[new]
    #[pyo3(signature = (cameras_path, config_path=None, single_hypothesis=false, no_reid=false, seed=None))]
    fn new(
        cameras_path: &str,
        config_path: Option<&str>,
        single_hypothesis: bool,
        no_reid: bool,
        seed: Option<u64>,
    ) -> PyResult<Self> {
        let cams = io::read_cameras(Path::new(cameras_path)).map_err(io_err)?;
        let mut cfg = load_config(config_path)?;
        if let Some(s) = seed {
            cfg.glmb.seed = s;
        }
        if single_hypothesis {
            cfg.glmb.single_hypothesis = true;
        }
        if no_reid {
            cfg.reid.enabled = false;
        }
        Ok(Self {
            filter: MvGlmbFilter::new(cams, cfg),
        })
    }

    /// Processes one frame. `detections` is a list of dicts with keys
    /// `cam`, `cx`, `cy`, `w`, `h`, `feat`. Returns the current estimates
    /// as dicts with `id`, `pos`, `ext`, `vel`.
    fn step<'py>(
        &mut self,
        py: Python<'py>,
        frame: u32,
        detections: Vec<Bound<'py, PyDict>>,
    ) -> PyResult<Bound<'py, PyList>> {
        let n_cams = self.filter.cameras().len();
        let mut per_camera: Vec<Vec<Measurement>> = vec![vec![]; n_cams];
        for d in detections {
            let cam: usize = d
                .get_item("cam")?
                .ok_or_else(|| PyValueError::new_err("detection missing 'cam'"))?
                .extract()?;
            if cam >= n_cams {
                return Err(PyValueError::new_err(format!(
                    "camera {cam} has no calibration"
                )));
            }
            let get = |key: &str| -> PyResult<f64> {
                d.get_item(key)?
                    .ok_or_else(|| PyValueError::new_err(format!("detection missing '{key}'")))?
                    .extract()
            };
            let feat: Vec<f64> = match d.get_item("feat")? {
                Some(f) => f.extract()?,
                None => vec![1.0],
            };
            let bbox = BoundingBox::from_center_size(get("cx")?, get("cy")?, get("w")?, get("h")?);
            let index = per_camera[cam].len() + 1;
            per_camera[cam].push(Measurement::new(bbox, DVector::from_vec(feat), cam, index));
        }
        self.filter.step(frame, &per_camera);
        let out = PyList::empty(py);
        for e in self.filter.estimates() {
            let item = PyDict::new(py);
            item.set_item("id", e.label.to_string())?;
            item.set_item("pos", e.position)?;
            item.set_item("ext", e.half_lengths)?;
            item.set_item("vel", e.velocity)?;
            out.append(item)?;
        }
        Ok(out)
    }

    fn hypothesis_count(&self) -> usize {
        self.filter.density.hypotheses.len()
    }

    fn tt_store_size(&self) -> usize {
        self.filter.tt_store.len()
    }
}

/// Generates a synthetic scenario; returns paths of truth, detections and
/// cameras files.
#[pyfunction]
#[pyo3(signature = (out_dir, scenario_path=None, seed=None))]
fn simulate(
    out_dir: &str,
    scenario_path: Option<&str>,
    seed: Option<u64>,
) -> PyResult<(String, String, String)> {
    let mut spec = match scenario_path {
        Some(p) => io::read_scenario(Path::new(p)).map_err(io_err)?,
        None => mvglmb_core::sim::ScenarioSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let (truth, det, cams) =
        tracker::simulate_files(&spec, &PathBuf::from(out_dir)).map_err(io_err)?;
    Ok((
        truth.display().to_string(),
        det.display().to_string(),
        cams.display().to_string(),
    ))
}

/// Runs the tracker over a detection file and writes a trajectory file.
#[pyfunction]
#[pyo3(signature = (detections, cameras, out, config=None, single_hypothesis=false, no_reid=false, occlusion=None, seed=None))]
#[allow(clippy::too_many_arguments)]
fn track(
    py: Python<'_>,
    detections: &str,
    cameras: &str,
    out: &str,
    config: Option<&str>,
    single_hypothesis: bool,
    no_reid: bool,
    occlusion: Option<&str>,
    seed: Option<u64>,
) -> PyResult<Py<PyDict>> {
    let occlusion_override = match occlusion {
        None => None,
        Some("ioa") => Some(OcclusionModel::Ioa),
        Some("los") => Some(OcclusionModel::Los),
        Some("constant") => Some(OcclusionModel::Constant),
        Some(other) => {
            return Err(PyValueError::new_err(format!(
                "unknown occlusion model '{other}'"
            )))
        }
    };
    let flags = TrackFlags {
        single_hypothesis,
        no_reid,
        occlusion_override,
        seed_override: seed,
    };
    let report = tracker::track_files(
        Path::new(detections),
        Path::new(cameras),
        config.map(Path::new),
        Path::new(out),
        None,
        &flags,
    )
    .map_err(io_err)?;
    let d = PyDict::new(py);
    d.set_item("frames", report.frames)?;
    d.set_item("fps", report.fps)?;
    d.set_item("median_frame_millis", report.median_frame_millis)?;
    Ok(d.into())
}

/// Scores an estimate file against a truth file.
#[pyfunction]
#[pyo3(signature = (est, truth, base="euclidean", cutoff=None, threshold=None, ground_plane=false, mc_runs=None))]
fn evaluate(
    py: Python<'_>,
    est: &str,
    truth: &str,
    base: &str,
    cutoff: Option<f64>,
    threshold: Option<f64>,
    ground_plane: bool,
    mc_runs: Option<usize>,
) -> PyResult<Py<PyDict>> {
    let mut cfg = match base {
        "euclidean" => EvalConfig::default(),
        "giou" => EvalConfig::giou(),
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown base distance '{other}'"
            )))
        }
    };
    if ground_plane {
        if cfg.base == BaseDistance::Giou3d {
            return Err(PyValueError::new_err(
                "ground-plane mode requires the Euclidean base distance",
            ));
        }
        cfg.ground_plane = true;
    }
    if let Some(c) = cutoff {
        cfg.cutoff = c;
    }
    if let Some(t) = threshold {
        cfg.assoc_threshold = t;
    }
    let r = tracker::evaluate_files(est, truth, &cfg, mc_runs, None).map_err(io_err)?;
    let d = PyDict::new(py);
    d.set_item("mota", r.mean_mota)?;
    d.set_item("mota_std", r.std_mota)?;
    d.set_item("idf1", r.mean_idf1)?;
    d.set_item("idf1_std", r.std_idf1)?;
    d.set_item("ospa2", r.mean_ospa2)?;
    d.set_item("ospa2_std", r.std_ospa2)?;
    d.set_item("runs", r.runs.len())?;
    let first = &r.runs[0];
    d.set_item("fp", first.clear.fp)?;
    d.set_item("fn", first.clear.fn_)?;
    d.set_item("ids", first.clear.ids)?;
    Ok(d.into())
}

#[pymodule]
fn mvglmb(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCamera>()?;
    m.add_class::<PyTracker>()?;
    m.add_function(wrap_pyfunction!(load_cameras, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(track, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
