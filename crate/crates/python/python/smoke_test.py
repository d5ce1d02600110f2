"""Smoke test for the ingrasp_py extension.

Build and install first, e.g. `maturin develop --release` in crates/python,
then run `python python/smoke_test.py`.
"""

import math

import ingrasp_py as ig


def main():
    hand = ig.Hand.synthetic()
    assert hand.dof == 16, hand.dof
    grasp = ig.Grasp.synthetic()

    x0 = grasp.object_pose
    same = grasp.object_pose_at(grasp.theta0)
    assert max(abs(a - b) for a, b in zip(x0.xyz, same.xyz)) < 1e-12

    goal = ig.regression_goals()[0]
    shift = math.dist(goal.xyz, x0.xyz)
    assert abs(shift - 0.02) < 1e-9, shift

    plan = ig.plan(grasp, goal)
    assert plan.converged, plan.message
    assert plan.final_position_error <= 0.002
    assert len(plan.dense) == 100 and len(plan.predicted_path) == 100

    quiet = ig.simulate(plan, grasp, noiseless=True)
    assert quiet.metrics() == quiet.predicted_metrics()

    a = ig.simulate(plan, grasp, seed=7, feedback=True)
    b = ig.simulate(plan, grasp, seed=7, feedback=True)
    assert a.to_csv() == b.to_csv()

    half_turn = ig.Pose.from_wxyz([0, 0, 0], [0, 0, 0, 1])
    assert abs(ig.orientation_error(ig.Pose([0, 0, 0]), half_turn) - 100.0) < 1e-9

    audit = ig.gradcheck(grasp, samples=5)
    assert all(passed for _, passed in audit.values()), audit

    try:
        hand.fk("pinky", hand.lower_limits)
    except ValueError as e:
        assert "pinky" in str(e)
    else:
        raise AssertionError("unknown finger accepted")

    print(
        f"ok: planned {plan.iterations} iterations, "
        f"error {1000 * plan.final_position_error:.3f} mm, "
        f"feedback run {a.metrics()['position_error_cm']:.3f} cm"
    )


if __name__ == "__main__":
    main()
