//! Python extension module `endovo_py`: poses and trajectories, the
//! synthetic scene, shape from shading, checkpoints and evaluation.
//! Images cross the boundary as nested lists, `[row][col]` or
//! `[channel][row][col]`.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use endovo::eval;
use endovo::net::checkpoint::Checkpoint;
use endovo::pipeline;
use endovo::pose::{Pose, Trajectory};
use endovo::sfs::{self, SfsConfig};
use endovo::synth::{self, DatasetManifest, SceneConfig, Split, TrajectoryClass, TrajectorySpec};
use endovo::train::{self, TrainingLog};
use endovo::{Error, Tensor};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn to_rows(t: &Tensor<f64>) -> Vec<Vec<f64>> {
    let w = *t.shape().last().unwrap_or(&1);
    t.data().chunks(w.max(1)).map(<[f64]>::to_vec).collect()
}

fn to_planes(t: &Tensor<f64>) -> Vec<Vec<Vec<f64>>> {
    let [c, h, w] = [t.shape()[0], t.shape()[1], t.shape()[2]];
    (0..c)
        .map(|k| t.data()[k * h * w..(k + 1) * h * w].chunks(w).map(<[f64]>::to_vec).collect())
        .collect()
}

fn from_rows(rows: &[Vec<f64>]) -> PyResult<Tensor<f64>> {
    let h = rows.len();
    let w = rows.first().map_or(0, Vec::len);
    if h == 0 || w == 0 || rows.iter().any(|r| r.len() != w) {
        return Err(PyValueError::new_err("expected a non-empty rectangular list of rows"));
    }
    Tensor::new(&[h, w], rows.concat()).map_err(py_err)
}

/// Rigid camera pose: translation in meters and a unit quaternion `(w, x, y, z)`.
#[pyclass(name = "Pose", frozen, from_py_object)]
#[derive(Clone)]
struct PyPose(Pose);

#[pymethods]
impl PyPose {
    #[new]
    #[pyo3(signature = (translation = [0.0; 3], rotation = [1.0, 0.0, 0.0, 0.0]))]
    fn new(translation: [f64; 3], rotation: [f64; 4]) -> PyResult<Self> {
        Pose::new(translation, rotation).map(PyPose).map_err(py_err)
    }

    #[staticmethod]
    fn from_axis_angle(translation: [f64; 3], axis_angle: [f64; 3]) -> Self {
        PyPose(Pose::from_axis_angle(translation, axis_angle))
    }

    #[getter]
    fn translation(&self) -> [f64; 3] {
        self.0.translation
    }

    #[getter]
    fn rotation(&self) -> [f64; 4] {
        self.0.rotation
    }

    fn compose(&self, other: &PyPose) -> Self {
        PyPose(self.0.compose(&other.0))
    }

    fn inverse(&self) -> Self {
        PyPose(self.0.inverse())
    }

    /// Motion from `self` to `later`, expressed in `self`'s frame.
    fn between(&self, later: &PyPose) -> Self {
        PyPose(self.0.between(&later.0))
    }

    fn rotation_angle(&self) -> f64 {
        self.0.rotation_angle()
    }

    fn translation_norm(&self) -> f64 {
        self.0.translation_norm()
    }

    fn __eq__(&self, other: &PyPose) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!("Pose(translation={:?}, rotation={:?})", self.0.translation, self.0.rotation)
    }
}

/// Timestamped poses; reads and writes the pose CSV format.
#[pyclass(name = "Trajectory", frozen, from_py_object)]
#[derive(Clone)]
struct PyTrajectory(Trajectory);

#[pymethods]
impl PyTrajectory {
    #[new]
    fn new(timestamps: Vec<f64>, poses: Vec<PyPose>) -> PyResult<Self> {
        Trajectory::new(timestamps, poses.into_iter().map(|p| p.0).collect())
            .map(PyTrajectory)
            .map_err(py_err)
    }

    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        Trajectory::from_csv(text).map(PyTrajectory).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let text = std::fs::read_to_string(&path).map_err(|e| PyIOError::new_err(format!("{}: {e}", path.display())))?;
        Self::from_csv(&text)
    }

    fn to_csv(&self) -> String {
        self.0.to_csv()
    }

    #[getter]
    fn timestamps(&self) -> Vec<f64> {
        self.0.timestamps.clone()
    }

    #[getter]
    fn poses(&self) -> Vec<PyPose> {
        self.0.poses.iter().cloned().map(PyPose).collect()
    }

    fn relatives(&self) -> Vec<PyPose> {
        self.0.relatives().into_iter().map(PyPose).collect()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

/// Relative pose error per path-length bin; empty bins come back as `None`.
#[pyclass(name = "ErrorCurve", frozen, get_all)]
struct PyErrorCurve {
    bins: Vec<f64>,
    trans_rmse: Vec<Option<f64>>,
    rot_rmse_deg: Vec<Option<f64>>,
    counts: Vec<usize>,
}

impl From<eval::ErrorCurve> for PyErrorCurve {
    fn from(c: eval::ErrorCurve) -> Self {
        PyErrorCurve {
            bins: c.bins,
            trans_rmse: c.trans_rmse,
            rot_rmse_deg: c.rot_rmse_deg,
            counts: c.counts,
        }
    }
}

/// A trained network loaded from disk.
#[pyclass(name = "Checkpoint", frozen)]
struct PyCheckpoint(Checkpoint);

#[pymethods]
impl PyCheckpoint {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Checkpoint::load(&path).map(PyCheckpoint).map_err(py_err)
    }

    /// Network settings as `key=value` lines.
    fn config(&self) -> String {
        self.0.config.to_text()
    }

    fn precision(&self) -> &'static str {
        self.0.params.precision().as_str()
    }

    /// Absolute trajectories per name for one split (`"all"` for every one).
    #[pyo3(signature = (data, split = "test"))]
    fn infer(&self, data: PathBuf, split: &str) -> PyResult<Vec<(String, PyTrajectory, PyTrajectory)>> {
        let manifest = DatasetManifest::load(&data).map_err(py_err)?;
        let split = match split {
            "all" => None,
            s => Some(s.parse::<Split>().map_err(py_err)?),
        };
        let inferred = pipeline::infer_checkpoint(&self.0, &data, &manifest, split, None).map_err(py_err)?;
        Ok(inferred
            .into_iter()
            .map(|t| (t.name, PyTrajectory(t.absolute), PyTrajectory(t.ground_truth)))
            .collect())
    }
}

/// Camera poses for one synthetic trajectory.
#[pyfunction]
#[pyo3(signature = (class_name, frames, seed = 0))]
fn generate_trajectory(class_name: &str, frames: usize, seed: u64) -> PyResult<Vec<PyPose>> {
    let class: TrajectoryClass = class_name.parse().map_err(py_err)?;
    let poses = synth::generate_trajectory(&TrajectorySpec::new(class, frames, seed)).map_err(py_err)?;
    Ok(poses.into_iter().map(PyPose).collect())
}

/// Renders the tube scene from `pose`: `(rgb[3][h][w], depth[h][w])`.
#[pyfunction]
#[pyo3(signature = (pose, size = 64, texture_seed = 0))]
fn render_frame(pose: &PyPose, size: usize, texture_seed: u64) -> PyResult<(Vec<Vec<Vec<f64>>>, Vec<Vec<f64>>)> {
    let (rgb, depth) = synth::render_frame(&pose.0, &SceneConfig::new(size, size, texture_seed)).map_err(py_err)?;
    Ok((to_planes(&rgb), to_rows(&depth)))
}

/// Relative depth from a grayscale intensity image, zero mean and unit
/// deviation over valid pixels.
#[pyfunction]
#[pyo3(signature = (intensity, iterations = 50, light = [0.0, 0.0, 1.0]))]
fn sfs_depth(intensity: Vec<Vec<f64>>, iterations: usize, light: [f64; 3]) -> PyResult<Vec<Vec<f64>>> {
    let cfg = SfsConfig {
        iterations,
        ..SfsConfig::default()
    }
    .with_light(light)
    .map_err(py_err)?;
    let d = sfs::tsai_shah_depth(&from_rows(&intensity)?, &cfg).map_err(py_err)?;
    Ok(to_rows(&d.values))
}

#[pyfunction]
fn rmse_vs_length(est: &PyTrajectory, gt: &PyTrajectory, bins: Vec<f64>) -> PyResult<PyErrorCurve> {
    eval::rmse_vs_length(&est.0, &gt.0, &bins).map(Into::into).map_err(py_err)
}

#[pyfunction]
fn zero_motion_baseline(gt: &PyTrajectory) -> PyResult<PyTrajectory> {
    eval::zero_motion_baseline(&gt.0).map(PyTrajectory).map_err(py_err)
}

#[pyfunction]
fn constant_velocity_baseline(gt: &PyTrajectory) -> PyResult<PyTrajectory> {
    eval::constant_velocity_baseline(&gt.0).map(PyTrajectory).map_err(py_err)
}

/// β from the text of a finished training log.
#[pyfunction]
fn calibrate_beta(log_csv: &str) -> PyResult<f64> {
    let log = TrainingLog::from_csv(log_csv).map_err(py_err)?;
    train::calibrate_beta(&log).map_err(py_err)
}

/// Tiny generate → train → infer → eval run under `dir`; returns the
/// artifact paths.
#[pyfunction]
#[pyo3(signature = (dir, seed = 0))]
fn run_smoke(py: Python<'_>, dir: PathBuf, seed: u64) -> PyResult<Vec<PathBuf>> {
    let report = py.detach(|| pipeline::run_pipeline_smoke(&dir, seed)).map_err(py_err)?;
    Ok(report.files)
}

#[pymodule]
fn endovo_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPose>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyErrorCurve>()?;
    m.add_class::<PyCheckpoint>()?;
    m.add_function(wrap_pyfunction!(generate_trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(render_frame, m)?)?;
    m.add_function(wrap_pyfunction!(sfs_depth, m)?)?;
    m.add_function(wrap_pyfunction!(rmse_vs_length, m)?)?;
    m.add_function(wrap_pyfunction!(zero_motion_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(constant_velocity_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_beta, m)?)?;
    m.add_function(wrap_pyfunction!(run_smoke, m)?)?;
    Ok(())
}
