"""Trajectory optimizer tests: feasibility gating, budget, determinism."""

import time

import numpy as np

from reachplan.arm import load_arm
from reachplan.compose import ComposedRS, RSCell, compose_rs
from reachplan.constraints import (
    ConstraintSet,
    build_constraint_set,
    build_joint_limit_constraints,
    build_obstacle_constraints,
)
from reachplan.jrs import build_bank
from reachplan.optimize import (
    SolverSettings,
    default_seeds,
    opt_traj,
    verify_feasible,
    waypoint_cost,
    waypoint_cost_box_minimum,
)
from reachplan.sets import PolyZonotope, Zonotope, acc_id, generic_id
from reachplan.trajectories import JointParamBox, ParamBox, TimingConfig, TrajParam

TIMING = TimingConfig(0.5, 1.0, 0.01)
BANK = build_bank(8, np.pi, np.pi / 3, 1 / 3, np.pi / 24, TIMING, validation_samples=0)
# narrow velocity intervals keep the composed sets tight enough for scenes
# with a genuinely mixed feasible/infeasible decision box
BANK400 = build_bank(400, np.pi, np.pi / 3, 1 / 3, np.pi / 24, TIMING, validation_samples=0)
PLANAR = load_arm("planar2")


def empty_cs(boxes: ParamBox, arm=PLANAR, n_q=2) -> ConstraintSet:
    return ConstraintSet(
        boxes, [], [],
        build_joint_limit_constraints(np.zeros(n_q), np.zeros(n_q), arm, TIMING),
    )


def quadratic(goal):
    goal = np.asarray(goal, dtype=float)

    def cost_and_grad(k):
        d = k - goal
        return float(d @ d), 2.0 * d

    return cost_and_grad


def test_unconstrained_quadratic_reaches_target():
    boxes = ParamBox([JointParamBox(0.0, 0.1, 0.0, 0.5), JointParamBox(0.0, 0.1, 0.0, 0.5)])
    cs = empty_cs(boxes)
    goal = np.array([0.21, -0.34])
    rng = np.random.default_rng(0)
    seeds = default_seeds(cs, np.zeros(2), TIMING.t_plan, 4, rng)
    res = opt_traj(quadratic(goal), cs, 1.0, seeds, SolverSettings(max_iter=120))
    assert res.feasible
    assert np.linalg.norm(res.k_a - goal) <= 1e-4


def test_globally_infeasible_times_out():
    boxes = ParamBox([JointParamBox(0.0, 0.1, 0.0, 0.2)])
    v_slc = PolyZonotope(np.zeros(3), np.array([[0.05, 0.0, 0.0]]), [(acc_id(0),)])
    v_buf = PolyZonotope.point(np.zeros(3))
    rs = ComposedRS("synthetic", np.zeros(1), np.zeros(1), TIMING, boxes, 40,
                    ((RSCell(v_slc=v_slc, v_buf=v_buf),),))
    huge = Zonotope.box(np.zeros(3), [2.0, 2.0, 2.0], [generic_id(k) for k in range(3)])
    pts, cons = build_obstacle_constraints(rs, [huge], prune=False)
    cs = ConstraintSet(
        boxes, pts, cons,
        build_joint_limit_constraints(np.zeros(1), np.zeros(1), PLANAR, TIMING),
    )
    # grid oracle: no decision escapes the containing obstacle
    for ka in np.linspace(-0.2, 0.2, 41):
        assert not verify_feasible(cs, np.array([ka]))
    rng = np.random.default_rng(1)
    seeds = default_seeds(cs, np.zeros(1), TIMING.t_plan, 8, rng)
    res = opt_traj(quadratic([0.0]), cs, 0.5, seeds, SolverSettings())
    assert res.status == "infeasible_timeout"
    assert res.k_a is None


def test_mostly_feasible_scene_found_reliably():
    """Grid truth says >= 5% of the box is feasible; the solver must find it."""
    from reachplan.arm import joint_positions, rotation_matrix
    from reachplan.trajectories import eval_trajectory

    q0 = np.array([0.2, -0.5])
    dq0 = np.array([1.5, 1.0])
    rs = compose_rs(PLANAR, q0, dq0, BANK400)
    # obstacle at the full-throttle end pose tip: braking decisions escape it
    corner = rs.boxes.ka_centers + rs.boxes.ka_halfwidths
    qf, _ = eval_trajectory(TrajParam(dq0, corner), q0, dq0, TIMING.t_f, TIMING)
    z_axis = np.array([0.0, 0.0, 1.0])
    r = rotation_matrix(z_axis, qf[0]) @ rotation_matrix(z_axis, qf[1])
    tip = joint_positions(PLANAR, qf)[1] + r @ np.array([1.0, 0.0, 0.0])
    obs = Zonotope.box(tip, [0.1, 0.1, 0.1], [generic_id(700 + k) for k in range(3)])
    cs = build_constraint_set(rs, [obs], PLANAR)
    boxes = rs.boxes
    axes = [np.linspace(c - h, c + h, 41) for c, h in zip(boxes.ka_centers, boxes.ka_halfwidths)]
    mesh = np.meshgrid(*axes, indexing="ij")
    grid = np.stack([m.ravel() for m in mesh], axis=1)
    feasible_frac = np.mean([verify_feasible(cs, ka) for ka in grid])
    assert feasible_frac >= 0.05

    cost = waypoint_cost(q0 + 0.6, q0, dq0, TIMING)
    won = 0
    for trial in range(100):
        seeds = default_seeds(cs, dq0, TIMING.t_plan, 8, np.random.default_rng(trial))
        res = opt_traj(cost, cs, 0.5, seeds, SolverSettings())
        won += int(res.feasible)
    assert won >= 95


def test_verify_feasible_box_and_vacuous():
    boxes = ParamBox([JointParamBox(0.0, 0.1, 0.0, 0.2), JointParamBox(0.0, 0.1, 0.0, 0.2)])
    cs = empty_cs(boxes)
    assert not verify_feasible(cs, np.array([0.3, 0.0]))
    assert verify_feasible(cs, np.array([0.1, -0.1]))


def test_verify_agrees_with_eval_signs():
    rng = np.random.default_rng(3)
    q0 = rng.uniform(-1, 1, 2)
    dq0 = rng.uniform(-1, 1, 2)
    rs = compose_rs(PLANAR, q0, dq0, BANK)
    obs = Zonotope.box(rs.cells[1][40].v_slc.center, [0.2, 0.2, 0.2],
                       [generic_id(720 + k) for k in range(3)])
    cs = build_constraint_set(rs, [obs], PLANAR)
    boxes = rs.boxes
    for _ in range(1000):
        ka = rng.uniform(boxes.ka_centers - boxes.ka_halfwidths,
                         boxes.ka_centers + boxes.ka_halfwidths)
        vals = cs.eval_values(ka)
        assert verify_feasible(cs, ka) == bool(np.all(vals <= -cs.margin))


def test_feasible_result_passes_independent_verification():
    rng = np.random.default_rng(4)
    q0 = np.array([0.0, 0.0])
    dq0 = np.array([0.5, -0.5])
    rs = compose_rs(PLANAR, q0, dq0, BANK)
    obs = Zonotope.box(rs.cells[1][60].v_slc.center + [0.05, 0.1, 0.0],
                       [0.2, 0.2, 0.2], [generic_id(740 + k) for k in range(3)])
    cs = build_constraint_set(rs, [obs], PLANAR)
    cost = waypoint_cost(q0 + 0.4, q0, dq0, TIMING)
    seeds = default_seeds(cs, dq0, TIMING.t_plan, 8, rng)
    res = opt_traj(cost, cs, 0.5, seeds, SolverSettings())
    if res.feasible:
        assert verify_feasible(cs, res.k_a)


def test_budget_zero_times_out_immediately():
    boxes = ParamBox([JointParamBox(0.0, 0.1, 0.0, 0.2)])
    cs = empty_cs(boxes, n_q=1)
    res = opt_traj(quadratic([0.0]), cs, 0.0, [np.zeros(1)], SolverSettings())
    assert res.status == "infeasible_timeout" and res.iterations == 0


def test_wall_deadline_respected():
    rng = np.random.default_rng(5)
    q0 = np.array([0.2, -0.5])
    dq0 = np.array([0.6, 0.4])
    rs = compose_rs(PLANAR, q0, dq0, BANK)
    obs = Zonotope.box(rs.cells[1][80].v_slc.center, [0.3, 0.3, 0.3],
                       [generic_id(760 + k) for k in range(3)])
    cs = build_constraint_set(rs, [obs], PLANAR)
    cost = waypoint_cost(q0 + 0.3, q0, dq0, TIMING)
    budget = 0.05
    overshoots = []
    for trial in range(50):
        seeds = default_seeds(cs, dq0, TIMING.t_plan, 8, np.random.default_rng(trial))
        t0 = time.perf_counter()
        opt_traj(cost, cs, budget, seeds, SolverSettings(), use_wall_deadline=True)
        overshoots.append(time.perf_counter() - t0 - budget)
    overshoots = np.array(overshoots)
    assert np.quantile(overshoots, 0.98) <= 0.010


def test_deterministic_in_iteration_mode():
    rng_seeds = 6
    q0 = np.array([0.1, 0.3])
    dq0 = np.array([-0.4, 0.7])
    rs = compose_rs(PLANAR, q0, dq0, BANK)
    obs = Zonotope.box(rs.cells[1][50].v_slc.center + [0.1, 0.0, 0.0],
                       [0.2, 0.2, 0.2], [generic_id(780 + k) for k in range(3)])
    cs = build_constraint_set(rs, [obs], PLANAR)
    cost = waypoint_cost(q0 + 0.2, q0, dq0, TIMING)
    results = []
    for _ in range(2):
        seeds = default_seeds(cs, dq0, TIMING.t_plan, 8, np.random.default_rng(rng_seeds))
        results.append(opt_traj(cost, cs, 0.5, seeds, SolverSettings()))
    a, b = results
    assert a.status == b.status and a.iterations == b.iterations
    if a.feasible:
        assert np.array_equal(a.k_a, b.k_a) and a.cost == b.cost


def test_cost_box_minimum_is_a_lower_bound():
    rng = np.random.default_rng(7)
    boxes = ParamBox([JointParamBox(0.0, 0.1, 0.0, 0.5), JointParamBox(0.0, 0.1, 0.0, 0.5)])
    q0, dq0 = rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2)
    q_des = rng.uniform(-1, 1, 2)
    cost = waypoint_cost(q_des, q0, dq0, TIMING)
    lb = waypoint_cost_box_minimum(q_des, q0, dq0, TIMING, boxes)
    for _ in range(500):
        ka = rng.uniform(boxes.ka_centers - boxes.ka_halfwidths,
                         boxes.ka_centers + boxes.ka_halfwidths)
        assert cost(ka)[0] >= lb - 1e-12
