"""Time-boxed trajectory optimization over the acceleration decision.

A multi-start projected subgradient method on an exact L1 penalty handles the
subdifferentiable max-of-polynomial constraints without external solver
dependencies.  Optimality is best-effort; feasibility is not: a candidate is
returned only after an independent re-evaluation of every constraint at the
exact returned value passes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .constraints import ConstraintSet

FEASIBLE = "feasible"
INFEASIBLE_TIMEOUT = "infeasible_timeout"


@dataclass(frozen=True)
class SolverSettings:
    n_rand: int = 8          # uniform random multi-start seeds
    max_iter: int = 50       # subgradient iterations per start
    penalty: float = 100.0   # L1 penalty weight on constraint violation
    penalty_growth: float = 20.0
    penalty_rounds: int = 2  # extra rounds with grown penalty if infeasible
    step0: float = 0.5       # initial step, in units of box halfwidths
    step_shrink: float = 0.5
    max_backtracks: int = 10


@dataclass(frozen=True)
class OptResult:
    status: str
    k_a: np.ndarray | None
    cost: float
    iterations: int
    wall_time: float

    @property
    def feasible(self) -> bool:
        return self.status == FEASIBLE


def verify_feasible(cs: ConstraintSet, k_a: np.ndarray, margin: float | None = None) -> bool:
    """Re-evaluate every constraint at k_a with no solver state.

    True iff k_a lies in the decision box and every constraint value is at
    or below -margin.
    """
    margin = cs.margin if margin is None else margin
    k_a = np.asarray(k_a, dtype=float)
    if not cs.boxes.contains_ka(k_a, tol=0.0):
        return False
    values = cs.eval_values(k_a)
    return bool(np.all(values <= -margin))


def default_seeds(cs: ConstraintSet, dq0: np.ndarray, t_plan: float, n_rand: int, rng) -> list[np.ndarray]:
    """Box center, a full-brake heuristic, and uniform random seeds.

    The brake seed drives the peak velocity toward zero, which is close to
    the fail-safe maneuver and therefore often feasible.
    """
    boxes = cs.boxes
    seeds = [boxes.ka_centers.copy()]
    seeds.append(boxes.clip_ka(-np.asarray(dq0, dtype=float) / t_plan))
    lo = boxes.ka_centers - boxes.ka_halfwidths
    hi = boxes.ka_centers + boxes.ka_halfwidths
    for _ in range(n_rand):
        seeds.append(rng.uniform(lo, hi))
    return seeds


def opt_traj(
    cost_and_grad,
    cs: ConstraintSet,
    budget_s: float,
    seeds: list[np.ndarray],
    settings: SolverSettings = SolverSettings(),
    use_wall_deadline: bool = False,
    cost_lower_bound: float | None = None,
) -> OptResult:
    """Best verified decision found within the budget.

    ``cost_and_grad(k_a) -> (cost, grad)``.  With ``use_wall_deadline`` the
    budget is enforced between iterations by a wall-clock deadline;
    otherwise iteration counts alone bound the work, which keeps results
    bit-reproducible.  A non-positive budget is an immediate timeout.  When
    a verified candidate reaches ``cost_lower_bound`` the remaining starts
    are skipped.
    """
    t_start = time.perf_counter()
    if budget_s <= 0.0:
        return OptResult(INFEASIBLE_TIMEOUT, None, np.inf, 0, 0.0)
    deadline = t_start + budget_s if use_wall_deadline else None

    margin = cs.margin
    boxes = cs.boxes
    scale = np.where(boxes.ka_halfwidths > 0.0, boxes.ka_halfwidths, 1.0)

    best_k = None
    best_cost = np.inf
    total_iters = 0

    def out_of_time() -> bool:
        return deadline is not None and time.perf_counter() >= deadline

    def good_enough() -> bool:
        return (
            cost_lower_bound is not None
            and best_k is not None
            and best_cost <= cost_lower_bound + 1e-9
        )

    def merit(k):
        c, _ = cost_and_grad(k)
        v = cs.eval_values(k)
        return c + rho * float(np.maximum(v + margin, 0.0).sum()), c, v

    for seed in seeds:
        if out_of_time() or good_enough():
            break
        rho = settings.penalty
        x = boxes.clip_ka(np.asarray(seed, dtype=float))
        for _round in range(1 + settings.penalty_rounds):
            phi_x, cost_x, vals_x = merit(x)
            step = settings.step0
            for _it in range(settings.max_iter):
                total_iters += 1
                if out_of_time() or good_enough():
                    break
                if np.all(vals_x <= -margin) and cost_x < best_cost:
                    if verify_feasible(cs, x, margin):
                        best_k, best_cost = x.copy(), cost_x

                _, cg = cost_and_grad(x)
                vals, grads = cs.eval_with_subgradients(x)
                active = vals + margin > 0.0
                g = cg + rho * grads[active].sum(axis=0)
                # steepest descent in box-normalized coordinates
                g_scaled = g * scale
                gnorm = float(np.linalg.norm(g_scaled))
                if gnorm < 1e-12:
                    break
                direction = scale * g_scaled / gnorm

                improved = False
                trial_step = step
                for _bt in range(settings.max_backtracks):
                    if out_of_time():
                        break
                    x_new = boxes.clip_ka(x - trial_step * direction)
                    phi_new, cost_new, vals_new = merit(x_new)
                    if phi_new < phi_x - 1e-12:
                        x, phi_x, cost_x, vals_x = x_new, phi_new, cost_new, vals_new
                        step = min(trial_step * 2.0, settings.step0)
                        improved = True
                        break
                    trial_step *= settings.step_shrink
                if not improved:
                    break

            if np.all(vals_x <= -margin):
                if cost_x < best_cost and verify_feasible(cs, x, margin):
                    best_k, best_cost = x.copy(), cost_x
                break
            rho *= settings.penalty_growth

    wall = time.perf_counter() - t_start
    if best_k is None:
        return OptResult(INFEASIBLE_TIMEOUT, None, np.inf, total_iters, wall)
    return OptResult(FEASIBLE, best_k, best_cost, total_iters, wall)


def waypoint_cost(q_des: np.ndarray, q0: np.ndarray, dq0: np.ndarray, timing):
    """Squared distance of the plan's end configuration to a waypoint.

    The end configuration is affine in k_a, so the cost is a smooth convex
    quadratic.
    """
    from .trajectories import position_coeffs

    a_v, a_a = position_coeffs(timing.t_f, timing)
    base = np.asarray(q0, dtype=float) + a_v * np.asarray(dq0, dtype=float)
    q_des = np.asarray(q_des, dtype=float)

    def cost_and_grad(k_a):
        diff = base + a_a * np.asarray(k_a, dtype=float) - q_des
        return float(diff @ diff), 2.0 * a_a * diff

    return cost_and_grad


def waypoint_cost_box_minimum(
    q_des: np.ndarray, q0: np.ndarray, dq0: np.ndarray, timing, boxes
) -> float:
    """Exact minimum of the waypoint cost over the decision box.

    Separable quadratic: per joint, clip the unconstrained minimizer.
    """
    from .trajectories import position_coeffs

    a_v, a_a = position_coeffs(timing.t_f, timing)
    base = np.asarray(q0, dtype=float) + a_v * np.asarray(dq0, dtype=float)
    target = np.asarray(q_des, dtype=float) - base
    with np.errstate(divide="ignore", invalid="ignore"):
        k_star = np.where(a_a != 0.0, target / a_a, 0.0)
    k_star = boxes.clip_ka(k_star)
    diff = a_a * k_star - target
    return float(diff @ diff)
