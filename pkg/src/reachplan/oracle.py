"""Independent dense-time collision oracle.

Links are modeled as capsules between consecutive joint positions; obstacles
are axis-aligned boxes given as raw (center, half-extents) arrays.  This
module deliberately shares no geometry code with the set-arithmetic kernel:
forward kinematics goes through scipy rotations, and distances are exact
capsule-vs-box and capsule-vs-capsule queries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .arm import ArmModel

#: Ternary-search iterations for the segment-to-box line search; the bracket
#: shrinks by (2/3) per iteration, far below floating-point resolution.
_TERNARY_ITERS = 100


@dataclass(frozen=True)
class OracleReport:
    collision: bool
    first_time: float | None = None
    link: int | None = None
    obstacle: int | None = None
    self_pair: tuple[int, int] | None = None
    limit_violation: bool = False
    min_distance: float = np.inf


def link_segments(arm: ArmModel, q_samples: np.ndarray) -> np.ndarray:
    """Capsule axis segments per configuration, shape (N, n_links, 2, 3)."""
    q_samples = np.atleast_2d(np.asarray(q_samples, dtype=float))
    n, n_q = q_samples.shape
    if n_q != arm.n_q:
        raise ValueError("configuration width must match the joint count")
    segs = np.empty((n, arm.n_q, 2, 3))
    r_acc = np.broadcast_to(np.eye(3), (n, 3, 3)).copy()
    p = np.zeros((n, 3))
    for i, joint in enumerate(arm.joints):
        r_i = Rotation.from_rotvec(np.outer(q_samples[:, i], joint.axis)).as_matrix()
        r_acc = np.einsum("nab,nbc->nac", r_acc, r_i)
        tip = np.array([joint.capsule_length, 0.0, 0.0])
        segs[:, i, 0] = p
        segs[:, i, 1] = p + np.einsum("nab,b->na", r_acc, tip)
        p = p + np.einsum("nab,b->na", r_acc, joint.displacement)
    return segs


def point_box_distance(points: np.ndarray, center: np.ndarray, half: np.ndarray) -> np.ndarray:
    d = np.maximum(np.abs(points - center) - half, 0.0)
    return np.linalg.norm(d, axis=-1)


def segment_box_distance(
    p0: np.ndarray, p1: np.ndarray, center: np.ndarray, half: np.ndarray
) -> np.ndarray:
    """Exact segment-to-box distance, batched over the leading dimension.

    The point-to-box distance along the segment is convex in the line
    parameter, so a ternary search converges to a global minimizer.
    """
    p0 = np.atleast_2d(p0)
    p1 = np.atleast_2d(p1)
    d = p1 - p0
    a = np.zeros(p0.shape[0])
    b = np.ones(p0.shape[0])
    for _ in range(_TERNARY_ITERS):
        m1 = a + (b - a) / 3.0
        m2 = b - (b - a) / 3.0
        f1 = point_box_distance(p0 + m1[:, None] * d, center, half)
        f2 = point_box_distance(p0 + m2[:, None] * d, center, half)
        take_left = f1 <= f2
        b = np.where(take_left, m2, b)
        a = np.where(take_left, a, m1)
    s = 0.5 * (a + b)
    return point_box_distance(p0 + s[:, None] * d, center, half)


def segment_segment_distance(
    p1: np.ndarray, q1: np.ndarray, p2: np.ndarray, q2: np.ndarray
) -> np.ndarray:
    """Closest distance between segments [p1,q1] and [p2,q2], batched."""
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = np.einsum("...d,...d->...", d1, d1)
    e = np.einsum("...d,...d->...", d2, d2)
    f = np.einsum("...d,...d->...", d2, r)
    c = np.einsum("...d,...d->...", d1, r)
    b = np.einsum("...d,...d->...", d1, d2)
    denom = a * e - b * b
    s = np.where(denom > 1e-14, np.clip((b * f - c * e) / np.where(denom > 1e-14, denom, 1.0), 0.0, 1.0), 0.0)
    e_safe = np.where(e > 1e-14, e, 1.0)
    t = (b * s + f) / e_safe
    t_cl = np.clip(t, 0.0, 1.0)
    a_safe = np.where(a > 1e-14, a, 1.0)
    s = np.where(t != t_cl, np.clip((b * t_cl - c) / a_safe, 0.0, 1.0), s)
    t = t_cl
    closest1 = p1 + s[..., None] * d1
    closest2 = p2 + t[..., None] * d2
    return np.linalg.norm(closest1 - closest2, axis=-1)


def min_link_obstacle_distances(
    arm: ArmModel, q_samples: np.ndarray, obstacles: np.ndarray
) -> np.ndarray:
    """Per (sample, link, obstacle) surface distances; negative = overlap.

    ``obstacles`` is an (n_O, 6) array of box centers and half-extents.  A
    cheap midpoint bound prunes pairs that cannot be close before the exact
    line search runs.
    """
    segs = link_segments(arm, q_samples)
    n, n_l = segs.shape[0], segs.shape[1]
    n_o = obstacles.shape[0]
    radii = np.array([j.capsule_radius for j in arm.joints])
    lengths = np.linalg.norm(segs[:, :, 1] - segs[:, :, 0], axis=-1)
    out = np.empty((n, n_l, n_o))
    for o in range(n_o):
        center, half = obstacles[o, :3], obstacles[o, 3:]
        mid = 0.5 * (segs[:, :, 0] + segs[:, :, 1])
        bound = point_box_distance(mid.reshape(-1, 3), center, half).reshape(n, n_l)
        bound = bound - 0.5 * lengths - radii[None, :]
        out[:, :, o] = bound
        needs = bound < 0.01
        if np.any(needs):
            idx = np.nonzero(needs)
            d = segment_box_distance(
                segs[idx[0], idx[1], 0], segs[idx[0], idx[1], 1], center, half
            )
            out[idx[0], idx[1], o] = d - radii[idx[1]]
    return out


def min_self_pair_distances(
    arm: ArmModel, q_samples: np.ndarray
) -> dict[tuple[int, int], np.ndarray]:
    """Per-sample capsule-capsule surface distances for declared pairs."""
    if not arm.self_pairs:
        return {}
    segs = link_segments(arm, q_samples)
    out = {}
    for (i, j) in arm.self_pairs:
        d = segment_segment_distance(
            segs[:, i, 0], segs[:, i, 1], segs[:, j, 0], segs[:, j, 1]
        )
        out[(i, j)] = d - arm.joints[i].capsule_radius - arm.joints[j].capsule_radius
    return out


def configuration_collides(
    arm: ArmModel, q: np.ndarray, obstacles: np.ndarray, clearance: float = 0.0
) -> bool:
    """True when the pose touches any obstacle or a declared self pair."""
    q = np.asarray(q, dtype=float)[None, :]
    if obstacles.shape[0]:
        if np.min(min_link_obstacle_distances(arm, q, obstacles)) <= clearance:
            return True
    for d in min_self_pair_distances(arm, q).values():
        if d[0] <= clearance:
            return True
    return False


def check_trajectory(
    arm: ArmModel,
    times: np.ndarray,
    q_samples: np.ndarray,
    dq_samples: np.ndarray | None,
    obstacles: np.ndarray,
) -> OracleReport:
    """Collision, self-intersection, and limit check over dense samples.

    Returns the first offending sample when one exists; otherwise the
    smallest surface distance seen anywhere.
    """
    q_samples = np.atleast_2d(q_samples)
    min_dist = np.inf
    first = None

    if obstacles.shape[0]:
        d = min_link_obstacle_distances(arm, q_samples, obstacles)
        min_dist = min(min_dist, float(d.min()))
        hits = np.nonzero(d.min(axis=(1, 2)) <= 0.0)[0]
        if hits.size:
            s = int(hits[0])
            link, obs = np.unravel_index(np.argmin(d[s]), d[s].shape)
            first = OracleReport(
                collision=True,
                first_time=float(times[s]),
                link=int(link),
                obstacle=int(obs),
                min_distance=float(d[s].min()),
            )

    for (i, j), d in min_self_pair_distances(arm, q_samples).items():
        min_dist = min(min_dist, float(d.min()))
        hits = np.nonzero(d <= 0.0)[0]
        if hits.size:
            s = int(hits[0])
            if first is None or times[s] < first.first_time:
                first = OracleReport(
                    collision=True,
                    first_time=float(times[s]),
                    self_pair=(i, j),
                    min_distance=float(d[s]),
                )

    limit_violation = False
    tol = 1e-9
    if np.any(q_samples < arm.q_min[None, :] - tol) or np.any(
        q_samples > arm.q_max[None, :] + tol
    ):
        limit_violation = True
    if dq_samples is not None and np.any(
        np.abs(dq_samples) > arm.dq_lim[None, :] + tol
    ):
        limit_violation = True

    if first is not None:
        return OracleReport(
            collision=True,
            first_time=first.first_time,
            link=first.link,
            obstacle=first.obstacle,
            self_pair=first.self_pair,
            limit_violation=limit_violation,
            min_distance=float(min_dist),
        )
    return OracleReport(
        collision=False, limit_violation=limit_violation, min_distance=float(min_dist)
    )
