//! Bundled 16-DOF synthetic hand, grasp, scenes and regression goals.
//!
//! The same documents live under `fixtures/` in the crate directory so the
//! command-line tool can load them by path.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::costs::{GraspDoc, GraspSpec};
use crate::geometry::{load_scene, ConvexScene};
use crate::kinematics::{load_hand_model, HandModel};
use crate::pose::{Pose, PoseDoc};

pub const HAND_JSON: &str = include_str!("../fixtures/synthetic_hand.json");
pub const GRASP_JSON: &str = include_str!("../fixtures/grasp.json");
pub const OBSTACLE_SCENE_JSON: &str = include_str!("../fixtures/obstacle_scene.json");
pub const DISTANT_SCENE_JSON: &str = include_str!("../fixtures/distant_scene.json");
pub const GRADCHECK_SCENE_JSON: &str = include_str!("../fixtures/gradcheck_scene.json");
pub const GOALS_JSON: &str = include_str!("../fixtures/goals.json");

/// Directory holding the fixture documents in a source checkout.
pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn synthetic_hand() -> Arc<HandModel> {
    Arc::new(load_hand_model(HAND_JSON).expect("bundled hand model is valid"))
}

pub fn synthetic_grasp() -> GraspSpec {
    GraspDoc::parse(GRASP_JSON)
        .and_then(|d| d.build(synthetic_hand()))
        .expect("bundled grasp is valid")
}

/// A small sphere across the straight path of the first regression goal.
pub fn obstacle_scene() -> ConvexScene {
    load_scene(OBSTACLE_SCENE_JSON).expect("bundled scene is valid")
}

/// An obstacle far outside the reachable workspace.
pub fn distant_scene() -> ConvexScene {
    load_scene(DISTANT_SCENE_JSON).expect("bundled scene is valid")
}

/// Obstacles within the truncation distance of the initial object pose, one
/// of them overlapping it, so every branch of the collision gradient is used.
pub fn gradcheck_scene() -> ConvexScene {
    load_scene(GRADCHECK_SCENE_JSON).expect("bundled scene is valid")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalSet {
    pub goals: Vec<PoseDoc>,
}

/// Ten object goals (palm frame) reachable by the bundled grasp.
pub fn regression_goals() -> Vec<Pose> {
    let set: GoalSet = serde_json::from_str(GOALS_JSON).expect("bundled goals are valid");
    set.goals.into_iter().map(Pose::from).collect()
}
