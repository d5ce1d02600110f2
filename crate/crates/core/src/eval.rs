//! Batch evaluation: plan every goal once, execute it under seeded
//! disturbances several times, and tabulate the final-pose errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costs::{load_grasp_file, GraspSpec, PlanMode};
use crate::error::{Error, Result};
use crate::feedback::FeedbackConfig;
use crate::geometry::load_scene_file;
use crate::kinematics::load_hand_model_file;
use crate::planner::{plan, PlannerConfig};
use crate::pose::{Pose, PoseDoc};
use crate::simulator::{compute_metrics, metrics_for_pose, simulate, DisturbanceModel, Metrics};

fn one() -> usize {
    1
}

/// Batch description as stored on disk. Relative paths resolve against the
/// directory of the batch file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchSpec {
    pub hand_model: String,
    pub grasp: String,
    pub goals: Vec<PoseDoc>,
    #[serde(default = "one")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: PlanMode,
    #[serde(default)]
    pub feedback: Option<FeedbackConfig>,
    #[serde(default)]
    pub scene: Option<String>,
    /// Defaults to [`DisturbanceModel::default`]; its seed is ignored in favor of per-trial seeds.
    #[serde(default)]
    pub disturbance: Option<DisturbanceModel>,
    /// Planner settings other than mode and scene.
    #[serde(default)]
    pub planner: Option<PlannerConfig>,
}

impl BatchSpec {
    pub fn parse(document: &str) -> Result<Self> {
        Error::from_json("batch spec", document)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::parse(path.display().to_string(), message),
            other => other,
        })
    }

    /// Loads every referenced file and validates the whole batch.
    pub fn resolve(&self, base_dir: &Path) -> Result<Batch> {
        let at = |p: &str| -> PathBuf {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base_dir.join(p)
            }
        };
        let hand = std::sync::Arc::new(load_hand_model_file(at(&self.hand_model))?);
        let grasp = load_grasp_file(at(&self.grasp), Some(hand))?;
        let mut planner = self.planner.clone().unwrap_or_default();
        planner.mode = self.mode;
        planner.scene = match &self.scene {
            Some(p) => Some(load_scene_file(at(p))?),
            None => None,
        };
        let batch = Batch {
            grasp,
            goals: self.goals.iter().map(|g| Pose::from(*g)).collect(),
            trials: self.trials,
            seed: self.seed,
            planner,
            disturbance: self.disturbance.unwrap_or_default(),
            feedback: self.feedback,
        };
        batch.validate()?;
        Ok(batch)
    }
}

/// A fully loaded batch.
#[derive(Clone, Debug)]
pub struct Batch {
    pub grasp: GraspSpec,
    pub goals: Vec<Pose>,
    pub trials: usize,
    pub seed: u64,
    pub planner: PlannerConfig,
    pub disturbance: DisturbanceModel,
    pub feedback: Option<FeedbackConfig>,
}

impl Batch {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidInput("a batch needs at least one trial per goal".into()));
        }
        if self.goals.is_empty() {
            return Err(Error::InvalidInput("a batch needs at least one goal".into()));
        }
        if let Some(i) = self.goals.iter().position(|g| !g.is_finite()) {
            return Err(Error::InvalidInput(format!("goal {i} is not finite")));
        }
        self.planner.validate()?;
        self.disturbance.validate()?;
        if let Some(fb) = &self.feedback {
            fb.validate()?;
        }
        Ok(())
    }

    /// Seed of trial `k` on goal `g`.
    pub fn trial_seed(&self, g: usize, k: usize) -> u64 {
        self.seed
            .wrapping_add((g as u64).wrapping_mul(self.trials as u64))
            .wrapping_add(k as u64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub goal: usize,
    pub trial: usize,
    pub seed: u64,
    pub converged: bool,
    pub predicted: Metrics,
    pub realized: Metrics,
}

/// Order statistics of one metric column.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Linear-interpolation quantile of sorted data (`h = (n - 1) p`).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl Summary {
    /// `None` for an empty column.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            count: v.len(),
            min: v[0],
            q1: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q3: quantile(&v, 0.75),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    /// Ordered by goal, then trial.
    pub rows: Vec<TrialRow>,
}

const COLUMNS: [&str; 3] = ["position_error_cm", "position_error_pct", "orientation_error_pct"];

impl BatchResult {
    fn column(&self, name: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter_map(|r| match name {
                "position_error_cm" => Some(r.realized.position_error_cm),
                "position_error_pct" => r.realized.position_error_pct,
                _ => Some(r.realized.orientation_error_pct),
            })
            .collect()
    }

    /// Realized-error statistics per metric, in table order.
    pub fn aggregate(&self) -> Vec<(&'static str, Option<Summary>)> {
        COLUMNS.iter().map(|c| (*c, Summary::of(&self.column(c)))).collect()
    }

    /// Statistics of the realized position error (cm) of one goal.
    pub fn goal_summary(&self, goal: usize) -> Option<Summary> {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.goal == goal)
            .map(|r| r.realized.position_error_cm)
            .collect();
        Summary::of(&v)
    }

    /// CSV: one row per trial, a blank line, then the aggregate block.
    pub fn to_table(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from(
            "goal,trial,seed,converged,position_error_cm,position_error_pct,orientation_error_pct,\
             predicted_position_error_cm,predicted_orientation_error_pct\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.goal,
                r.trial,
                r.seed,
                r.converged,
                r.realized.position_error_cm,
                opt(r.realized.position_error_pct),
                r.realized.orientation_error_pct,
                r.predicted.position_error_cm,
                r.predicted.orientation_error_pct
            );
        }
        out.push_str("\nmetric,count,min,q1,median,q3,max\n");
        for (name, s) in self.aggregate() {
            match s {
                Some(s) => {
                    let _ = writeln!(out, "{name},{},{},{},{},{},{}", s.count, s.min, s.q1, s.median, s.q3, s.max);
                }
                None => {
                    let _ = writeln!(out, "{name},0,,,,,");
                }
            }
        }
        out
    }
}

/// Plans each goal, then runs `trials` seeded executions per plan. Work is
/// parallel; results are ordered by (goal, trial).
pub fn evaluate_batch(batch: &Batch) -> Result<BatchResult> {
    batch.validate()?;
    let plans = batch
        .goals
        .par_iter()
        .map(|goal| plan(&batch.grasp, goal, &batch.planner))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..batch.goals.len())
        .flat_map(|g| (0..batch.trials).map(move |k| (g, k)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(g, k)| {
            let plan = &plans[g];
            let seed = batch.trial_seed(g, k);
            let disturbance = batch.disturbance.with_seed(seed);
            let trace = simulate(plan, &batch.grasp, &disturbance, batch.feedback.as_ref())?;
            let x0 = batch.grasp.object_pose();
            let last = plan.predicted_path.last().expect("plans have a dense path");
            Ok(TrialRow {
                goal: g,
                trial: k,
                seed,
                converged: plan.report.converged,
                predicted: metrics_for_pose(last, x0, &plan.goal),
                realized: compute_metrics(&trace, x0, &plan.goal)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BatchResult { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartiles_interpolate() {
        let s = Summary::of(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((s.min, s.max, s.count), (1.0, 4.0, 4));
        assert_eq!(s.median, 2.5);
        assert_eq!(s.q1, 1.75);
        assert_eq!(s.q3, 3.25);
        let s = Summary::of(&[5.0, 1.0, 9.0]).unwrap();
        assert_eq!(s.median, 5.0);
        assert!(Summary::of(&[]).is_none());
    }

    #[test]
    fn batch_spec_defaults() {
        let spec = BatchSpec::parse(r#"{"hand_model": "h.json", "grasp": "g.json", "goals": []}"#).unwrap();
        assert_eq!(spec.trials, 1);
        assert_eq!(spec.mode, PlanMode::WaypointInterp);
        assert!(spec.feedback.is_none());
        assert!(BatchSpec::parse(r#"{"hand_model": "h", "grasp": "g", "goals": [], "extra": 1}"#).is_err());
    }
}
