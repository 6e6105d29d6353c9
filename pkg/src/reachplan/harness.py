"""Trial runner, metrics, and the benchmark matrix.

A trial executes the receding-horizon loop on one scene until the goal is
reached, the arm provably stagnates at rest, or the iteration cap ends the
run with a braked stop.  Every executed trajectory is then replayed through
the independent dense-time oracle; a collision there is the severest
possible failure and overrides every other outcome.
"""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .arm import ArmModel, load_arm
from .config import PlannerConfig
from .jrs import JRSBank, build_bank
from .oracle import OracleReport, check_trajectory
from .planner import (
    IterationRecord,
    PlannerState,
    initial_state,
    make_plan,
    step_execution,
    straight_line_hlp,
)
from .scenes import Scene, generate_random_scene
from .trajectories import eval_trajectory_batch

#: consecutive at-rest, zero-motion planning iterations before a trial is
#: declared safely stopped
_POSE_EPS = 1e-9


@dataclass(frozen=True)
class Metrics:
    goal_reached: bool
    crashed: bool
    safely_stopped: bool
    iterations: int
    feasible_iterations: int
    mean_solve_time: float
    path_length: float
    normalized_path_distance: float
    oracle_min_distance: float
    final_speed: float


@dataclass(frozen=True)
class _Piece:
    """One executed window: plan local time local0 + (t - t0), clamped."""

    t0: float
    plan: object
    local0: float
    plan_id: int
    fresh: bool  # plan adopted at this window's start from a feasible solve


@dataclass
class TrialResult:
    scene: Scene
    metrics: Metrics
    records: list[IterationRecord] = field(default_factory=list)
    times: np.ndarray | None = None
    q: np.ndarray | None = None
    dq: np.ndarray | None = None
    plan_ids: np.ndarray | None = None
    fresh_flags: np.ndarray | None = None
    oracle: OracleReport | None = None


def _sample_pieces(pieces, duration, dt, timing):
    """Sample q, dq, plan id, freshness over the executed timeline."""
    n = int(round(duration / dt)) + 1
    times = np.arange(n) * dt
    bounds = np.array([p.t0 for p in pieces] + [np.inf])
    idx = np.searchsorted(bounds, times, side="right") - 1
    idx = np.clip(idx, 0, len(pieces) - 1)
    q = np.empty((n, pieces[0].plan.q0.shape[0]))
    dq = np.empty_like(q)
    plan_ids = np.empty(n, dtype=int)
    fresh = np.empty(n, dtype=int)
    for k, piece in enumerate(pieces):
        sel = idx == k
        if not np.any(sel):
            continue
        local = piece.local0 + (times[sel] - piece.t0)
        qs, dqs = eval_trajectory_batch(piece.plan.k, piece.plan.q0, local, timing)
        q[sel] = qs
        dq[sel] = dqs
        plan_ids[sel] = piece.plan_id
        fresh[sel] = int(piece.fresh)
    return times, q, dq, plan_ids, fresh


def run_trial(
    arm: ArmModel,
    scene: Scene,
    config: PlannerConfig,
    bank: JRSBank,
    trial_seed: int = 0,
) -> TrialResult:
    """Run the receding-horizon loop on one scene and oracle-check it."""
    timing = bank.timing
    t_plan, t_f = timing.t_plan, timing.t_f
    obstacles_z = scene.obstacle_zonotopes()
    hlp = straight_line_hlp(config.hlp_step)
    rng = np.random.default_rng(np.random.SeedSequence((trial_seed, 7)))
    q_goal = scene.q_goal

    state = initial_state(scene.q_start, timing)
    sim_time = 0.0
    pieces: list[_Piece] = []
    records: list[IterationRecord] = []
    plan_id = 0
    stagnant = 0
    prev_pose = scene.q_start.copy()
    goal = False
    next_fresh = False  # the upcoming window starts a newly adopted plan

    def at_goal(q) -> bool:
        return bool(np.max(np.abs(q - q_goal)) <= config.goal_tol)

    for _ in range(config.max_iters):
        q_now, _ = state.current_state()
        if state.stopped and at_goal(q_now):
            goal = True
            break

        if state.stopped and np.max(np.abs(q_now - prev_pose)) <= _POSE_EPS:
            stagnant += 1
            if stagnant >= config.stagnation_iters:
                break
        else:
            stagnant = 0
        prev_pose = q_now.copy()

        # terminal coast: once the executing plan brakes inside the goal
        # region, let it run out instead of replanning past the goal
        q_end, _ = state.plan.state_at(t_f)
        coast = (not state.stopped) and at_goal(q_end)

        adopted = None
        if not coast:
            adopted, rec = make_plan(
                state,
                obstacles_z,
                q_goal,
                hlp,
                arm,
                bank,
                config.solver,
                config.margin,
                config.n_red,
                config.n_buf_red,
                rng,
                budget_override_s=config.budget_override_s,
                use_wall_deadline=(config.budget_mode == "wall"),
                strict_real_time=config.strict_real_time,
                sim_time=sim_time,
            )
            records.append(rec)

        pieces.append(
            _Piece(
                t0=sim_time,
                plan=state.plan,
                local0=state.exec_time,
                plan_id=plan_id,
                fresh=next_fresh,
            )
        )
        state = step_execution(state, t_plan)
        sim_time += t_plan
        next_fresh = adopted is not None
        if adopted is not None:
            state = adopted
            plan_id += 1

    # brake out whatever is still executing, so every trial ends at rest
    if not state.stopped:
        remaining = t_f - state.exec_time
        pieces.append(
            _Piece(
                t0=sim_time,
                plan=state.plan,
                local0=state.exec_time,
                plan_id=plan_id,
                fresh=next_fresh,
            )
        )
        state = step_execution(state, remaining)
        sim_time += remaining
        q_now, _ = state.current_state()
        if at_goal(q_now):
            goal = True

    if not pieces:
        pieces.append(_Piece(0.0, state.plan, 0.0, 0, False))
        sim_time = max(sim_time, timing.dt)

    # oracle replay of everything that was executed
    times, q, dq, plan_ids, fresh_flags = _sample_pieces(
        pieces, sim_time, config.oracle_dt, timing
    )
    report = check_trajectory(arm, times, q, dq, scene.obstacles)

    log_stride = max(1, int(round(config.log_dt / config.oracle_dt)))
    q_log = q[::log_stride]
    path_length = float(np.linalg.norm(np.diff(q_log, axis=0), axis=1).sum())
    start_goal = float(np.linalg.norm(q_goal - scene.q_start))
    mnpd = path_length / start_goal if start_goal > 0 else 0.0

    crashed = report.collision
    final_speed = float(np.max(np.abs(state.current_state()[1])))
    metrics = Metrics(
        goal_reached=bool(goal and not crashed),
        crashed=crashed,
        safely_stopped=bool(not goal and not crashed),
        iterations=len(records),
        feasible_iterations=sum(1 for r in records if r.feasible),
        mean_solve_time=(
            float(np.mean([r.solve_time for r in records])) if records else 0.0
        ),
        path_length=path_length,
        normalized_path_distance=mnpd,
        oracle_min_distance=report.min_distance,
        final_speed=final_speed,
    )
    return TrialResult(
        scene=scene,
        metrics=metrics,
        records=records,
        times=times[::log_stride],
        q=q_log,
        dq=dq[::log_stride],
        plan_ids=plan_ids[::log_stride],
        fresh_flags=fresh_flags[::log_stride],
        oracle=report,
    )


def write_trajectory_csv(result: TrialResult, path: str) -> None:
    """t, q_1..q_n, dq_1..dq_n, plan_id, feasible_flag at the log rate."""
    n_q = result.q.shape[1]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(
            ["t"]
            + [f"q_{i + 1}" for i in range(n_q)]
            + [f"dq_{i + 1}" for i in range(n_q)]
            + ["plan_id", "feasible_flag"]
        )
        for k in range(result.q.shape[0]):
            w.writerow(
                [repr(float(result.times[k]))]
                + [repr(float(v)) for v in result.q[k]]
                + [repr(float(v)) for v in result.dq[k]]
                + [int(result.plan_ids[k]), int(result.fresh_flags[k])]
            )


# ---------------------------------------------------------------------------
# benchmark matrix


@dataclass(frozen=True)
class BenchSpec:
    arms: tuple[str, ...] = ("planar2",)
    n_obs_list: tuple[int, ...] = (4, 8, 12, 16, 20, 24, 28, 32, 36, 40)
    scenes_per: int = 10
    master_seed: int = 0
    config: PlannerConfig = field(default_factory=PlannerConfig)
    workers: int = 1

    @staticmethod
    def from_json_dict(data: dict) -> "BenchSpec":
        cfg = data.get("planner")
        config = PlannerConfig.from_json_dict(cfg) if cfg else PlannerConfig()
        return BenchSpec(
            arms=tuple(data.get("arms", ("planar2",))),
            n_obs_list=tuple(data.get("n_obs_list", (4, 8, 12, 16, 20, 24, 28, 32, 36, 40))),
            scenes_per=int(data.get("scenes_per", 10)),
            master_seed=int(data.get("master_seed", 0)),
            config=config,
            workers=int(data.get("workers", 1)),
        )


def trial_seed_for(master_seed: int, arm_idx: int, n_obs: int, scene_idx: int) -> int:
    ss = np.random.SeedSequence((master_seed, arm_idx, n_obs, scene_idx))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def build_bank_for(config: PlannerConfig) -> JRSBank:
    return build_bank(
        n_jrs=config.n_jrs,
        dq_lim=config.dq_lim,
        ddq_lim=config.ddq_lim,
        r_a1=config.r_a1,
        r_a2=config.r_a2,
        timing=config.timing,
        ka_center=config.ka_center,
        validation_samples=config.jrs_validation_samples,
    )


_WORKER_CTX: dict = {}


def _init_worker(config: PlannerConfig, bank: JRSBank, arm_names: tuple[str, ...]):
    _WORKER_CTX["config"] = config
    _WORKER_CTX["bank"] = bank
    _WORKER_CTX["arms"] = {name: load_arm(name) for name in arm_names}


def _run_one(task):
    arm_name, n_obs, scene_idx, seed = task
    config: PlannerConfig = _WORKER_CTX["config"]
    bank: JRSBank = _WORKER_CTX["bank"]
    arm = _WORKER_CTX["arms"][arm_name]
    scene = generate_random_scene(arm, n_obs, seed)
    result = run_trial(arm, scene, config, bank, trial_seed=seed)
    return task, result.metrics


def run_benchmark(spec: BenchSpec, out_dir: str, bank: JRSBank | None = None) -> dict:
    """Run the scene matrix; write results CSV and a JSON summary.

    The CSV holds only deterministic per-trial fields so identical master
    seeds reproduce it byte-for-byte; wall-clock statistics go to the JSON
    summary only.
    """
    os.makedirs(out_dir, exist_ok=True)
    bank = bank or build_bank_for(spec.config)

    tasks = [
        (arm_name, n_obs, k, trial_seed_for(spec.master_seed, a_idx, n_obs, k))
        for a_idx, arm_name in enumerate(spec.arms)
        for n_obs in spec.n_obs_list
        for k in range(spec.scenes_per)
    ]

    results = {}
    t0 = time.perf_counter()
    if spec.workers > 1:
        with ProcessPoolExecutor(
            max_workers=spec.workers,
            initializer=_init_worker,
            initargs=(spec.config, bank, spec.arms),
        ) as pool:
            for task, metrics in pool.map(_run_one, tasks):
                results[task] = metrics
    else:
        _init_worker(spec.config, bank, spec.arms)
        for task in tasks:
            task_key, metrics = _run_one(task)
            results[task_key] = metrics
    wall = time.perf_counter() - t0

    rows = []
    for task in tasks:  # deterministic order
        arm_name, n_obs, scene_idx, seed = task
        m = results[task]
        outcome = "crashed" if m.crashed else ("goal" if m.goal_reached else "stopped")
        rows.append(
            {
                "arm": arm_name,
                "n_obstacles": n_obs,
                "scene_index": scene_idx,
                "seed": seed,
                "outcome": outcome,
                "goal_reached": int(m.goal_reached),
                "crashed": int(m.crashed),
                "safely_stopped": int(m.safely_stopped),
                "iterations": m.iterations,
                "feasible_iterations": m.feasible_iterations,
                "path_length": repr(m.path_length),
                "mnpd": repr(m.normalized_path_distance),
            }
        )

    csv_path = os.path.join(out_dir, "results.csv")
    with open(csv_path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        w.writeheader()
        w.writerows(rows)

    all_metrics = [results[t] for t in tasks]
    summary = {
        "trials": len(tasks),
        "goals": sum(m.goal_reached for m in all_metrics),
        "crashes": sum(m.crashed for m in all_metrics),
        "stopped": sum(m.safely_stopped for m in all_metrics),
        "goal_rate": sum(m.goal_reached for m in all_metrics) / max(len(tasks), 1),
        "mean_solve_time": float(
            np.mean([m.mean_solve_time for m in all_metrics if m.iterations])
        )
        if any(m.iterations for m in all_metrics)
        else 0.0,
        "mean_mnpd_goal_trials": float(
            np.mean(
                [m.normalized_path_distance for m in all_metrics if m.goal_reached]
            )
        )
        if any(m.goal_reached for m in all_metrics)
        else None,
        "wall_time_s": wall,
    }
    with open(os.path.join(out_dir, "summary.json"), "w") as f:
        json.dump(summary, f, indent=2)
    return summary
