"""Planner configuration: timing, decision-space hyperparameters, solver
settings, and harness knobs, with JSON round-trip."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

from .optimize import SolverSettings
from .trajectories import TimingConfig


@dataclass(frozen=True)
class PlannerConfig:
    timing: TimingConfig = field(default_factory=lambda: TimingConfig(0.5, 1.0, 0.01))
    n_jrs: int = 400
    dq_lim: float = math.pi
    ddq_lim: float = math.pi / 3.0
    ka_center: float = 0.0
    r_a1: float = 1.0 / 3.0
    r_a2: float = math.pi / 24.0
    #: braking capability the timing must allow: dq_lim/(t_f - t_plan) must
    #: not exceed it
    ddq_brake: float = 2.0 * math.pi
    n_red: int = 40
    n_buf_red: int = 20
    margin: float = 1e-6
    hlp_step: float = 0.35
    goal_tol: float = 0.05
    stagnation_iters: int = 20
    max_iters: int = 75
    log_dt: float = 0.01
    oracle_dt: float = 1e-3
    #: "iterations": work bounded by iteration counts, bit-reproducible;
    #: "wall": the optimizer additionally stops at a wall-clock deadline
    budget_mode: str = "iterations"
    strict_real_time: bool = False
    budget_override_s: float | None = None
    solver: SolverSettings = field(default_factory=SolverSettings)
    jrs_validation_samples: int = 2000

    def __post_init__(self):
        if self.budget_mode not in ("iterations", "wall"):
            raise ValueError("budget_mode must be 'iterations' or 'wall'")
        brake_need = self.dq_lim / (self.timing.t_f - self.timing.t_plan)
        if brake_need > self.ddq_brake + 1e-12:
            raise ValueError(
                f"braking from dq_lim={self.dq_lim:g} within "
                f"{self.timing.t_f - self.timing.t_plan:g}s needs acceleration "
                f"{brake_need:g} > ddq_brake={self.ddq_brake:g}"
            )

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d["timing"] = {
            "t_plan": self.timing.t_plan,
            "t_f": self.timing.t_f,
            "dt": self.timing.dt,
        }
        d["solver"] = asdict(self.solver)
        return d

    @staticmethod
    def from_json_dict(data: dict) -> "PlannerConfig":
        kwargs = dict(data)
        if "timing" in kwargs:
            kwargs["timing"] = TimingConfig(**kwargs["timing"])
        if "solver" in kwargs:
            kwargs["solver"] = SolverSettings(**kwargs["solver"])
        return PlannerConfig(**kwargs)


def save_config(config: PlannerConfig, path: str) -> None:
    with open(path, "w") as f:
        json.dump(config.to_json_dict(), f, indent=2)


def load_config(path: str) -> PlannerConfig:
    with open(path) as f:
        return PlannerConfig.from_json_dict(json.load(f))
