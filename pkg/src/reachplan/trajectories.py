"""Parameterized kinematic trajectories with a built-in braking tail.

Each plan is parameterized per joint by an initial velocity ``k_v`` and a
constant acceleration ``k_a`` applied over ``[0, t_plan)``; over
``[t_plan, t_f]`` the joint ramps linearly to an exact stop.  Positions are
unwrapped reals (rad); joints with finite limits never need wrapping and
continuous joints declare infinite limits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _is_integer_multiple(x: float, step: float) -> bool:
    n = round(x / step)
    return n >= 0 and abs(x - n * step) <= 1e-9


@dataclass(frozen=True)
class TimingConfig:
    """Plan horizon: replan every ``t_plan`` s, each plan spans ``t_f`` s."""

    t_plan: float
    t_f: float
    dt: float

    def __post_init__(self):
        if not (0.0 < self.t_plan < self.t_f):
            raise ValueError("need 0 < t_plan < t_f")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if not _is_integer_multiple(self.t_f, self.dt):
            raise ValueError("t_f must be an integer multiple of dt")
        if not _is_integer_multiple(self.t_plan, self.dt):
            raise ValueError("t_plan must be an integer multiple of dt")

    @property
    def n_steps(self) -> int:
        return round(self.t_f / self.dt)

    @property
    def n_plan_steps(self) -> int:
        return round(self.t_plan / self.dt)


@dataclass(frozen=True)
class JointParamBox:
    """Decision intervals for one joint: K_v and K_a as center/halfwidth."""

    kv_center: float
    kv_halfwidth: float
    ka_center: float
    ka_halfwidth: float

    def __post_init__(self):
        if self.kv_halfwidth < 0.0 or self.ka_halfwidth < 0.0:
            raise ValueError("halfwidths must be non-negative")


class ParamBox:
    """Per-joint decision boxes for the whole arm."""

    def __init__(self, joints: list[JointParamBox] | tuple[JointParamBox, ...]):
        self.joints = tuple(joints)
        self.ka_centers = np.array([j.ka_center for j in self.joints])
        self.ka_halfwidths = np.array([j.ka_halfwidth for j in self.joints])
        self.kv_centers = np.array([j.kv_center for j in self.joints])
        self.kv_halfwidths = np.array([j.kv_halfwidth for j in self.joints])
        for a in (self.ka_centers, self.ka_halfwidths, self.kv_centers, self.kv_halfwidths):
            a.flags.writeable = False

    @property
    def n_q(self) -> int:
        return len(self.joints)

    def contains_ka(self, k_a: np.ndarray, tol: float = 0.0) -> bool:
        return bool(
            np.all(np.abs(np.asarray(k_a) - self.ka_centers) <= self.ka_halfwidths + tol)
        )

    def clip_ka(self, k_a: np.ndarray) -> np.ndarray:
        return np.clip(
            np.asarray(k_a, dtype=float),
            self.ka_centers - self.ka_halfwidths,
            self.ka_centers + self.ka_halfwidths,
        )


@dataclass(frozen=True)
class TrajParam:
    """One plan's decision values: k_v (rad/s) and k_a (rad/s2) per joint."""

    k_v: np.ndarray
    k_a: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "k_v", np.asarray(self.k_v, dtype=float))
        object.__setattr__(self, "k_a", np.asarray(self.k_a, dtype=float))
        if self.k_v.shape != self.k_a.shape:
            raise ValueError("k_v and k_a must have the same length")


def position_coeffs(t, timing: TimingConfig):
    """Coefficients (a_v, a_a) with q(t; k) = a_v(t) k_v + a_a(t) k_a.

    Both are non-decreasing in t, which the reachable-set error bounds rely
    on.  Accepts scalars or arrays.
    """
    t = np.asarray(t, dtype=float)
    tp, tf = timing.t_plan, timing.t_f
    ramp = np.minimum(t, tp)
    a_v_ramp = ramp
    a_a_ramp = 0.5 * ramp**2
    tb = np.maximum(t, tp)
    phi = ((tf - tp) ** 2 - (tf - tb) ** 2) / (2.0 * (tf - tp))
    a_v = a_v_ramp + phi
    a_a = a_a_ramp + tp * phi
    return a_v, a_a


def eval_trajectory(
    k: TrajParam,
    q0: np.ndarray,
    dq0: np.ndarray,
    t: float,
    timing: TimingConfig,
):
    """Position and velocity at time t in [0, t_f].

    ``dq0`` must equal ``k.k_v``: the parameterization starts at the initial
    velocity by construction, and callers are required to keep the two
    consistent.
    """
    q0 = np.asarray(q0, dtype=float)
    dq0 = np.asarray(dq0, dtype=float)
    if not np.array_equal(dq0, k.k_v):
        raise ValueError("dq0 must equal k_v")
    if not 0.0 <= t <= timing.t_f + 1e-12:
        raise ValueError(f"t={t} outside [0, {timing.t_f}]")
    t = min(float(t), timing.t_f)

    a_v, a_a = position_coeffs(t, timing)
    q = q0 + a_v * k.k_v + a_a * k.k_a
    if t < timing.t_plan:
        dq = k.k_v + k.k_a * t
    else:
        v_pk = k.k_v + k.k_a * timing.t_plan
        dq = v_pk * (timing.t_f - t) / (timing.t_f - timing.t_plan)
    return q, dq


def eval_trajectory_batch(
    k: TrajParam, q0: np.ndarray, t: np.ndarray, timing: TimingConfig
):
    """Vectorized (q, dq) over an array of times; t clipped to [0, t_f]."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, timing.t_f)
    a_v, a_a = position_coeffs(t, timing)
    q = q0[None, :] + a_v[:, None] * k.k_v[None, :] + a_a[:, None] * k.k_a[None, :]
    v_pk = k.k_v + k.k_a * timing.t_plan
    brake_scale = (timing.t_f - t) / (timing.t_f - timing.t_plan)
    dq_ramp = k.k_v[None, :] + np.outer(t, k.k_a)
    dq_brake = v_pk[None, :] * brake_scale[:, None]
    dq = np.where((t < timing.t_plan)[:, None], dq_ramp, dq_brake)
    return q, dq


def trajectory_extrema(k: TrajParam, q0: np.ndarray, timing: TimingConfig):
    """Closed-form per-joint extrema over [0, t_f].

    Returns (q_min, q_max, dq_absmax).  Candidate times are {0, t_plan, t_f}
    plus the interior stationary point t* = -k_v/k_a when it falls inside
    (0, t_plan); the braking phase is a single-signed ramp, so it adds no
    interior extremum.  Peak speed is max(|k_v|, |k_v + k_a t_plan|).
    """
    q0 = np.asarray(q0, dtype=float)
    tp = timing.t_plan
    n = k.k_v.shape[0]

    cand = np.empty((4, n))
    for row, t in enumerate((0.0, tp, timing.t_f)):
        a_v, a_a = position_coeffs(t, timing)
        cand[row] = q0 + a_v * k.k_v + a_a * k.k_a
    with np.errstate(divide="ignore", invalid="ignore"):
        t_star = np.where(k.k_a != 0.0, -k.k_v / np.where(k.k_a == 0.0, 1.0, k.k_a), np.nan)
    interior = (k.k_a != 0.0) & (t_star > 0.0) & (t_star < tp)
    q_star = q0 + k.k_v * t_star + 0.5 * k.k_a * t_star**2
    cand[3] = np.where(interior, q_star, cand[0])

    q_min = cand.min(axis=0)
    q_max = cand.max(axis=0)
    dq_absmax = np.maximum(np.abs(k.k_v), np.abs(k.k_v + k.k_a * tp))
    return q_min, q_max, dq_absmax


def build_param_box(
    kv_center: float,
    kv_halfwidth: float,
    ddq_lim: float,
    r_a1: float,
    r_a2: float,
    ka_center: float = 0.0,
) -> JointParamBox:
    """Acceleration interval for one joint, scaled with its mean speed.

    The acceleration range max(r_a2, r_a1 |kv_center|) around ``ka_center``
    is clipped to the joint acceleration limit.  A zero center is the normal
    configuration; nonzero centers are supported for generality.
    """
    if kv_halfwidth < 0.0 or ddq_lim < 0.0 or r_a1 < 0.0 or r_a2 < 0.0:
        raise ValueError("negative input where a magnitude is required")
    delta = max(r_a2, r_a1 * abs(kv_center))
    lo = max(-ddq_lim, ka_center - delta)
    hi = min(ddq_lim, ka_center + delta)
    if lo > hi:
        raise ValueError("empty acceleration interval")
    return JointParamBox(
        kv_center=kv_center,
        kv_halfwidth=kv_halfwidth,
        ka_center=0.5 * (lo + hi),
        ka_halfwidth=0.5 * (hi - lo),
    )
