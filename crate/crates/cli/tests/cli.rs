use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ingrasp::fixtures::{fixture_dir, GOALS_JSON};

fn ingrasp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ingrasp"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn fixture(name: &str) -> String {
    fixture_dir().join(name).display().to_string()
}

fn plan_to(dir: &Path, goal: &str, extra: &[&str]) -> (Output, PathBuf) {
    let out = dir.join("plan.json");
    let mut args = vec![
        "plan",
        "--goal",
        goal,
        "--out",
        out.to_str().unwrap(),
    ];
    let (hand, grasp) = (fixture("synthetic_hand.json"), fixture("grasp.json"));
    args.extend(["--hand", &hand, "--grasp", &grasp]);
    args.extend(extra);
    (ingrasp(dir, &args), out)
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

#[test]
fn relative_two_centimeter_plan_converges() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = plan_to(dir.path(), "0.02 0 0 0 0 0", &["--relative"]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    assert!(text(&o).contains("converged: true"));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert!(doc["report"]["converged"].as_bool().unwrap());
    assert!(doc["final_position_error_m"].as_f64().unwrap() <= 0.002);
    // the resolved configuration is echoed
    assert_eq!(doc["config"]["steps"], 10);
    assert_eq!(doc["config"]["mode"], "waypoint-interp");
}

#[test]
fn goal_at_start_has_zero_cost() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = plan_to(dir.path(), "0 0 0 0 0 0", &["--relative"]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert!(doc["report"]["final_cost"].as_f64().unwrap() < 1e-20);
}

#[test]
fn malformed_grasp_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("grasp.json");
    std::fs::write(
        &bad,
        r#"{"hand_model": "h.json", "theta0": [0.0], "thumb": "thumb", "grasp_fingers": [], "object_pose_xyz": [0,0,0], "object_pose_rpy": "x"}"#,
    )
    .unwrap();
    let hand = fixture("synthetic_hand.json");
    let o = ingrasp(
        dir.path(),
        &["plan", "--hand", &hand, "--grasp", bad.to_str().unwrap(), "--goal", "0 0 0 0 0 0"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).contains("object_pose_rpy"), "{}", text(&o));
}

#[test]
fn bad_goal_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let (o, _) = plan_to(dir.path(), "0.02 0 0", &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).contains("6 numbers"));
}

#[test]
fn simulate_noiseless_and_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let (o, plan) = plan_to(dir.path(), "0.02 0 0 0 0 0", &["--relative"]);
    assert_eq!(o.status.code(), Some(0));
    let plan = plan.to_str().unwrap();

    let o = ingrasp(dir.path(), &["simulate", "--plan", plan, "--noiseless", "--out", "quiet"]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("quiet/metrics.json")).unwrap()).unwrap();
    assert_eq!(m["predicted"], m["realized"]);
    assert_eq!(m["steps"], 100);

    for out in ["a", "b"] {
        let o = ingrasp(dir.path(), &["simulate", "--plan", plan, "--feedback", "--seed", "7", "--out", out]);
        assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    }
    for f in ["trace.csv", "metrics.json"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a/metrics.json")).unwrap()).unwrap();
    assert!(m["predicted"]["position_error_cm"].is_number());
    assert!(m["realized"]["position_error_cm"].is_number());
    assert_eq!(m["feedback"]["gain"], 50.0);
    assert_eq!(m["disturbance"]["seed"], 7);
}

#[test]
fn simulate_rejects_a_foreign_plan() {
    let dir = tempfile::tempdir().unwrap();
    let (_, plan) = plan_to(dir.path(), "0 0 0 0 0 0", &["--relative"]);
    let mut doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&plan).unwrap()).unwrap();
    doc["hand"] = "some_other_hand".into();
    std::fs::write(&plan, doc.to_string()).unwrap();
    let o = ingrasp(dir.path(), &["simulate", "--plan", plan.to_str().unwrap(), "--noiseless"]);
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
}

#[test]
fn evaluate_writes_rows_and_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let goals: serde_json::Value = serde_json::from_str(GOALS_JSON).unwrap();
    let batch = serde_json::json!({
        "hand_model": fixture("synthetic_hand.json"),
        "grasp": fixture("grasp.json"),
        "goals": goals["goals"].as_array().unwrap()[..2],
        "trials": 3,
        "seed": 5,
    });
    std::fs::write(dir.path().join("batch.json"), batch.to_string()).unwrap();
    let o = ingrasp(dir.path(), &["evaluate", "--batch", "batch.json", "--out", "table.csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let table = std::fs::read_to_string(dir.path().join("table.csv")).unwrap();
    let (rows, agg) = table.split_once("\n\n").unwrap();
    assert_eq!(rows.lines().count(), 1 + 6);
    assert_eq!(agg.lines().count(), 4);

    let o = ingrasp(dir.path(), &["evaluate", "--batch", "missing.json"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn gradcheck_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = ingrasp(dir.path(), &["gradcheck", "--samples", "10", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let o = ingrasp(
        dir.path(),
        &["gradcheck", "--samples", "10", "--inject-fault", "relative_position"],
    );
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("relative_position (seed"), "{err}");
}

#[test]
fn gradcheck_seed_reproduces_report() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &str| {
        let o = ingrasp(dir.path(), &["gradcheck", "--samples", "5", "--seed", "11", "--out", out]);
        assert_eq!(o.status.code(), Some(0));
        let mut v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(out)).unwrap()).unwrap();
        v["wall_time_s"] = serde_json::Value::Null;
        v
    };
    assert_eq!(run("a.json"), run("b.json"));
}
