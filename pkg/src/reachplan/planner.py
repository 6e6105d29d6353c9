"""Receding-horizon planning: predict, compose, constrain, optimize, adopt.

Every adopted plan spans [0, t_f] and brakes to an exact stop, so a failed
planning iteration is always covered by the previous plan's braking tail.
Plans are adopted exactly at multiples of t_plan in simulation time, which
makes the predicted initial condition exact rather than estimated.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .arm import ArmModel
from .compose import compose_rs
from .constraints import ConstraintSet, build_constraint_set
from .jrs import JRSBank
from .optimize import (
    INFEASIBLE_TIMEOUT,
    OptResult,
    SolverSettings,
    default_seeds,
    opt_traj,
    verify_feasible,
    waypoint_cost,
    waypoint_cost_box_minimum,
)
from .sets import Zonotope
from .trajectories import TimingConfig, TrajParam, eval_trajectory

#: (q_current, q_goal, obstacles) -> waypoint; shapes the cost only, never
#: trusted for safety.
HighLevelPlanner = Callable[[np.ndarray, np.ndarray, list], np.ndarray]


@dataclass(frozen=True)
class Plan:
    q0: np.ndarray
    k: TrajParam
    timing: TimingConfig
    created_at: float  # simulation time of adoption (s)

    def state_at(self, tau: float):
        """(q, dq) at local time tau, held at the braked end beyond t_f."""
        tau = min(max(tau, 0.0), self.timing.t_f)
        return eval_trajectory(self.k, self.q0, self.k.k_v, tau, self.timing)

    @property
    def dq0(self) -> np.ndarray:
        return self.k.k_v


def rest_plan(q: np.ndarray, timing: TimingConfig, created_at: float = 0.0) -> Plan:
    q = np.asarray(q, dtype=float)
    zero = np.zeros_like(q)
    return Plan(q0=q, k=TrajParam(k_v=zero, k_a=zero), timing=timing, created_at=created_at)


@dataclass(frozen=True)
class PlannerState:
    plan: Plan
    exec_time: float
    stopped: bool

    def current_state(self):
        return self.plan.state_at(self.exec_time)


def initial_state(q_start: np.ndarray, timing: TimingConfig) -> PlannerState:
    return PlannerState(plan=rest_plan(q_start, timing), exec_time=0.0, stopped=True)


def predict_initial_condition(state: PlannerState):
    """State of the executing trajectory one planning period ahead.

    Beyond t_f the plan is braked, so the prediction clamps there with an
    exactly-zero velocity; a stopped arm predicts its current pose at rest.
    """
    timing = state.plan.timing
    if state.stopped:
        q, _ = state.current_state()
        return q, np.zeros_like(q)
    return state.plan.state_at(state.exec_time + timing.t_plan)


def step_execution(state: PlannerState, sim_dt: float) -> PlannerState:
    """Advance execution time; mark stopped once the braking tail completes."""
    if sim_dt <= 0.0:
        raise ValueError("sim_dt must be positive")
    t = state.exec_time + sim_dt
    timing = state.plan.timing
    if t >= timing.t_f - 1e-12:
        return replace(state, exec_time=timing.t_f, stopped=True)
    return replace(state, exec_time=t, stopped=state.stopped)


@dataclass(frozen=True)
class IterationRecord:
    """Timing and outcome bookkeeping for one planning iteration."""

    feasible: bool
    opt: OptResult | None
    t_compose: float
    t_constraints: float
    t_hlp: float
    t_opt: float
    t_verify: float
    overran: bool
    rejected_overrun: bool
    n_constraints: int

    @property
    def solve_time(self) -> float:
        return self.t_compose + self.t_constraints + self.t_hlp + self.t_opt + self.t_verify


def straight_line_hlp(step: float) -> HighLevelPlanner:
    """Waypoints along the configuration-space line toward the goal."""

    def hlp(q: np.ndarray, q_goal: np.ndarray, obstacles) -> np.ndarray:
        delta = np.asarray(q_goal, dtype=float) - np.asarray(q, dtype=float)
        dist = float(np.linalg.norm(delta))
        if dist <= step:
            return np.asarray(q_goal, dtype=float)
        return q + delta * (step / dist)

    return hlp


def make_plan(
    state: PlannerState,
    obstacles: list[Zonotope],
    q_goal: np.ndarray,
    hlp: HighLevelPlanner,
    arm: ArmModel,
    bank: JRSBank,
    solver: SolverSettings,
    margin: float,
    n_red: int,
    n_buf_red: int | None,
    rng: np.random.Generator,
    budget_override_s: float | None = None,
    use_wall_deadline: bool = False,
    strict_real_time: bool = False,
    sim_time: float = 0.0,
) -> tuple[PlannerState | None, IterationRecord]:
    """One planning iteration: returns the adopted state (or None) + record.

    The optimizer gets whatever remains of t_plan after the waypoint query,
    composition, and constraint generation; a verified plan that overran
    t_plan is only rejected in strict mode (and logged either way).
    """
    timing = bank.timing
    q0, dq0 = predict_initial_condition(state)
    if np.any(np.abs(dq0) > arm.dq_lim + 1e-9):
        raise ValueError("predicted initial speed exceeds a joint speed limit")

    t0 = time.perf_counter()
    q_des = hlp(q0, np.asarray(q_goal, dtype=float), obstacles)
    t_hlp = time.perf_counter() - t0

    t0 = time.perf_counter()
    rs = compose_rs(arm, q0, dq0, bank, n_red=n_red)
    t_compose = time.perf_counter() - t0

    t0 = time.perf_counter()
    cs = build_constraint_set(rs, obstacles, arm, margin=margin, n_buf_red=n_buf_red)
    t_constraints = time.perf_counter() - t0

    if budget_override_s is not None:
        budget = budget_override_s
    elif use_wall_deadline:
        budget = timing.t_plan - (t_hlp + t_compose + t_constraints)
    else:
        # iteration-bounded mode: work is capped by iteration counts, so the
        # budget stays nominal; measured wall times must not steer decisions
        # or reproducibility is lost
        budget = timing.t_plan

    cost = waypoint_cost(q_des, q0, dq0, timing)
    cost_lb = waypoint_cost_box_minimum(q_des, q0, dq0, timing, cs.boxes)
    seeds = default_seeds(cs, dq0, timing.t_plan, solver.n_rand, rng)
    t0 = time.perf_counter()
    result = opt_traj(
        cost, cs, budget, seeds, solver, use_wall_deadline, cost_lower_bound=cost_lb
    )
    t_opt = time.perf_counter() - t0

    t_verify = 0.0
    adopted = None
    if result.feasible:
        t0 = time.perf_counter()
        ok = verify_feasible(cs, result.k_a, margin)
        t_verify = time.perf_counter() - t0
        if not ok:
            result = OptResult(
                INFEASIBLE_TIMEOUT, None, np.inf, result.iterations, result.wall_time
            )

    total = t_hlp + t_compose + t_constraints + t_opt + t_verify
    overran = total > timing.t_plan
    rejected = False
    if result.feasible and strict_real_time and overran:
        rejected = True
    elif result.feasible:
        plan = Plan(
            q0=q0,
            k=TrajParam(k_v=dq0, k_a=result.k_a),
            timing=timing,
            created_at=sim_time + timing.t_plan,
        )
        adopted = PlannerState(plan=plan, exec_time=0.0, stopped=False)

    record = IterationRecord(
        feasible=adopted is not None,
        opt=result,
        t_compose=t_compose,
        t_constraints=t_constraints,
        t_hlp=t_hlp,
        t_opt=t_opt,
        t_verify=t_verify,
        overran=overran,
        rejected_overrun=rejected,
        n_constraints=cs.n_cell_constraints,
    )
    return adopted, record
