//! Python bindings: load hands and grasps, plan, simulate, evaluate and
//! gradient-check from Python.

use std::path::PathBuf;
use std::sync::Arc;

use ingrasp::costs::{load_grasp_file, CostWeights, GraspSpec, PlanMode};
use ingrasp::eval::{evaluate_batch, BatchSpec};
use ingrasp::feedback::FeedbackConfig;
use ingrasp::fixtures;
use ingrasp::geometry::load_scene_file;
use ingrasp::gradcheck::{run_gradcheck, GradcheckConfig};
use ingrasp::kinematics::{fk_pose, jacobian, load_hand_model, load_hand_model_file, HandModel};
use ingrasp::planner::{plan as plan_trajectory, PlanResult, PlannerConfig};
use ingrasp::pose::Pose;
use ingrasp::simulator::{self, orientation_error_percent, DisturbanceModel, ExecutionTrace, Metrics};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: ingrasp::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Rigid pose: position in meters and a unit quaternion.
#[pyclass(name = "Pose", module = "ingrasp_py", skip_from_py_object)]
#[derive(Clone)]
struct PyPose(Pose);

#[pymethods]
impl PyPose {
    /// Pose from position and extrinsic roll-pitch-yaw angles.
    #[new]
    #[pyo3(signature = (xyz, rpy = [0.0, 0.0, 0.0]))]
    fn new(xyz: [f64; 3], rpy: [f64; 3]) -> Self {
        PyPose(Pose::from_xyz_rpy(xyz, rpy))
    }

    #[staticmethod]
    fn from_wxyz(xyz: [f64; 3], wxyz: [f64; 4]) -> PyResult<Self> {
        Pose::from_position_wxyz(xyz, wxyz).map(PyPose).map_err(err)
    }

    #[getter]
    fn xyz(&self) -> [f64; 3] {
        self.0.position.into()
    }

    #[getter]
    fn rpy(&self) -> [f64; 3] {
        self.0.rpy().into()
    }

    #[getter]
    fn wxyz(&self) -> [f64; 4] {
        self.0.wxyz()
    }

    fn compose(&self, other: &PyPose) -> PyPose {
        PyPose(self.0.compose(&other.0))
    }

    fn inverse(&self) -> PyPose {
        PyPose(self.0.inverse())
    }

    /// Row-major 4x4 homogeneous matrix.
    fn matrix(&self) -> Vec<Vec<f64>> {
        let m = self.0.to_isometry().to_homogeneous();
        (0..4).map(|r| (0..4).map(|c| m[(r, c)]).collect()).collect()
    }

    fn __repr__(&self) -> String {
        let (p, r) = (self.xyz(), self.rpy());
        format!("Pose(xyz={p:?}, rpy={r:?})")
    }
}

#[pyclass(name = "Hand", module = "ingrasp_py")]
struct PyHand(Arc<HandModel>);

#[pymethods]
impl PyHand {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        load_hand_model_file(path).map(|h| PyHand(Arc::new(h))).map_err(err)
    }

    #[staticmethod]
    fn from_json(document: &str) -> PyResult<Self> {
        load_hand_model(document).map(|h| PyHand(Arc::new(h))).map_err(err)
    }

    /// The bundled 16-joint synthetic hand.
    #[staticmethod]
    fn synthetic() -> Self {
        PyHand(fixtures::synthetic_hand())
    }

    #[getter]
    fn name(&self) -> String {
        self.0.name().to_string()
    }

    #[getter]
    fn dof(&self) -> usize {
        self.0.dof()
    }

    #[getter]
    fn fingers(&self) -> Vec<String> {
        self.0.finger_names().map(String::from).collect()
    }

    #[getter]
    fn lower_limits(&self) -> Vec<f64> {
        self.0.lower_limits()
    }

    #[getter]
    fn upper_limits(&self) -> Vec<f64> {
        self.0.upper_limits()
    }

    /// Fingertip pose in the palm frame.
    fn fk(&self, finger: &str, q: Vec<f64>) -> PyResult<PyPose> {
        fk_pose(&self.0, finger, &q).map(PyPose).map_err(err)
    }

    /// 6 x n geometric Jacobian of a fingertip (linear rows first).
    fn jacobian(&self, finger: &str, q: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let j = jacobian(&self.0, finger, &q).map_err(err)?;
        Ok((0..j.nrows()).map(|r| j.row(r).iter().copied().collect()).collect())
    }
}

#[pyclass(name = "Grasp", module = "ingrasp_py")]
struct PyGrasp(GraspSpec);

#[pymethods]
impl PyGrasp {
    /// Loads a grasp document; without `hand` its own hand_model path is used.
    #[staticmethod]
    #[pyo3(signature = (path, hand = None))]
    fn load(path: PathBuf, hand: Option<&PyHand>) -> PyResult<Self> {
        load_grasp_file(path, hand.map(|h| h.0.clone())).map(PyGrasp).map_err(err)
    }

    /// The bundled grasp on the synthetic hand.
    #[staticmethod]
    fn synthetic() -> Self {
        PyGrasp(fixtures::synthetic_grasp())
    }

    #[getter]
    fn hand(&self) -> PyHand {
        PyHand(self.0.hand_arc())
    }

    #[getter]
    fn theta0(&self) -> Vec<f64> {
        self.0.theta0().to_vec()
    }

    #[getter]
    fn thumb(&self) -> String {
        self.0.thumb().to_string()
    }

    #[getter]
    fn object_pose(&self) -> PyPose {
        PyPose(*self.0.object_pose())
    }

    /// Object pose predicted from the thumb at `q`.
    fn object_pose_at(&self, q: Vec<f64>) -> PyResult<PyPose> {
        self.0.object_pose_at(&q).map(PyPose).map_err(err)
    }
}

#[pyclass(name = "Plan", module = "ingrasp_py")]
struct PyPlan(PlanResult);

#[pymethods]
impl PyPlan {
    #[getter]
    fn converged(&self) -> bool {
        self.0.report.converged
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.0.report.iterations
    }

    #[getter]
    fn message(&self) -> String {
        self.0.report.message.clone()
    }

    #[getter]
    fn final_cost(&self) -> f64 {
        self.0.report.final_cost
    }

    /// Meters.
    #[getter]
    fn final_position_error(&self) -> f64 {
        self.0.final_position_error
    }

    /// Percent.
    #[getter]
    fn final_orientation_error(&self) -> f64 {
        self.0.final_orientation_error
    }

    #[getter]
    fn min_signed_distance(&self) -> Option<f64> {
        self.0.min_signed_distance
    }

    #[getter]
    fn goal(&self) -> PyPose {
        PyPose(self.0.goal)
    }

    #[getter]
    fn coarse(&self) -> Vec<Vec<f64>> {
        self.0.coarse.to_steps()
    }

    #[getter]
    fn dense(&self) -> Vec<Vec<f64>> {
        self.0.dense.to_steps()
    }

    #[getter]
    fn predicted_path(&self) -> Vec<PyPose> {
        self.0.predicted_path.iter().copied().map(PyPose).collect()
    }

    /// Plan document as written by the command-line tool.
    #[pyo3(signature = (grasp, hand_model = "synthetic_hand.json"))]
    fn to_json(&self, grasp: &PyGrasp, hand_model: &str) -> PyResult<String> {
        serde_json::to_string_pretty(&self.0.to_doc(&grasp.0, hand_model))
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }
}

#[pyclass(name = "Trace", module = "ingrasp_py")]
struct PyTrace {
    trace: ExecutionTrace,
    predicted: Metrics,
    realized: Metrics,
}

fn metrics_dict<'py>(py: Python<'py>, m: &Metrics) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("position_error_cm", m.position_error_cm)?;
    d.set_item("position_error_pct", m.position_error_pct)?;
    d.set_item("orientation_error_pct", m.orientation_error_pct)?;
    Ok(d)
}

#[pymethods]
impl PyTrace {
    #[getter]
    fn commanded(&self) -> Vec<Vec<f64>> {
        self.trace.commanded.clone()
    }

    #[getter]
    fn realized(&self) -> Vec<Vec<f64>> {
        self.trace.realized.clone()
    }

    #[getter]
    fn object_poses(&self) -> Vec<PyPose> {
        self.trace.object_poses.iter().copied().map(PyPose).collect()
    }

    /// Errors of the executed trajectory.
    fn metrics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        metrics_dict(py, &self.realized)
    }

    /// Errors of the plan's own prediction.
    fn predicted_metrics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        metrics_dict(py, &self.predicted)
    }

    fn to_csv(&self) -> PyResult<String> {
        self.trace.to_csv().map_err(err)
    }

    fn __len__(&self) -> usize {
        self.trace.len()
    }
}

/// Plans a trajectory taking the grasped object to `goal` (palm frame).
#[pyfunction]
#[pyo3(signature = (grasp, goal, mode = "waypoint-interp", scene = None, config_json = None))]
fn plan(
    grasp: &PyGrasp,
    goal: &PyPose,
    mode: &str,
    scene: Option<PathBuf>,
    config_json: Option<&str>,
) -> PyResult<PyPlan> {
    let mut config: PlannerConfig = match config_json {
        Some(text) => serde_json::from_str(text).map_err(|e| PyValueError::new_err(format!("planner config: {e}")))?,
        None => PlannerConfig::default(),
    };
    config.mode = mode.parse::<PlanMode>().map_err(err)?;
    if let Some(path) = scene {
        config.scene = Some(load_scene_file(path).map_err(err)?);
    }
    plan_trajectory(&grasp.0, &goal.0, &config).map(PyPlan).map_err(err)
}

/// Runs a plan in the kinematic simulator.
#[pyfunction]
#[pyo3(signature = (plan, grasp, seed = 0, feedback = false, gain = None, noiseless = false))]
fn simulate(
    plan: &PyPlan,
    grasp: &PyGrasp,
    seed: u64,
    feedback: bool,
    gain: Option<f64>,
    noiseless: bool,
) -> PyResult<PyTrace> {
    let disturbance = if noiseless {
        DisturbanceModel::none()
    } else {
        DisturbanceModel::default()
    }
    .with_seed(seed);
    let fb = feedback.then(|| FeedbackConfig {
        gain: gain.unwrap_or(FeedbackConfig::default().gain),
        ..FeedbackConfig::default()
    });
    let trace = simulator::simulate(&plan.0, &grasp.0, &disturbance, fb.as_ref()).map_err(err)?;
    let summary = simulator::SimulationSummary::new(&plan.0, &grasp.0, &trace, &disturbance, fb.as_ref()).map_err(err)?;
    Ok(PyTrace {
        trace,
        predicted: summary.predicted,
        realized: summary.realized,
    })
}

/// Quaternion distance in percent, in [0, 100].
#[pyfunction]
fn orientation_error(desired: &PyPose, actual: &PyPose) -> f64 {
    orientation_error_percent(&desired.0.orientation, &actual.0.orientation)
}

/// The ten bundled regression goals.
#[pyfunction]
fn regression_goals() -> Vec<PyPose> {
    fixtures::regression_goals().into_iter().map(PyPose).collect()
}

/// Runs a batch file and returns the metrics table as CSV text.
#[pyfunction]
fn evaluate(batch: PathBuf) -> PyResult<String> {
    let spec = BatchSpec::load(&batch).map_err(err)?;
    let base = batch.parent().map(PathBuf::from).unwrap_or_default();
    let resolved = spec.resolve(&base).map_err(err)?;
    Ok(evaluate_batch(&resolved).map_err(err)?.to_table())
}

/// Finite-difference audit of every cost term; maps term name to
/// `(max relative error, passed)`.
#[pyfunction]
#[pyo3(signature = (grasp, samples = 100, seed = 0))]
fn gradcheck<'py>(py: Python<'py>, grasp: &PyGrasp, samples: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let config = GradcheckConfig {
        samples,
        seed,
        ..GradcheckConfig::default()
    };
    let report = run_gradcheck(&grasp.0, &fixtures::gradcheck_scene(), &CostWeights::default(), &config).map_err(err)?;
    let out = PyDict::new(py);
    for t in &report.terms {
        out.set_item(&t.term, (t.max_relative_error, t.passed))?;
    }
    Ok(out)
}

#[pymodule]
fn ingrasp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPose>()?;
    m.add_class::<PyHand>()?;
    m.add_class::<PyGrasp>()?;
    m.add_class::<PyPlan>()?;
    m.add_class::<PyTrace>()?;
    m.add_function(wrap_pyfunction!(plan, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(orientation_error, m)?)?;
    m.add_function(wrap_pyfunction!(regression_goals, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    Ok(())
}
