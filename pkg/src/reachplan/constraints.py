"""Unsafe-parameter constraints with subgradients.

Three families, all functions of the per-joint acceleration decision k_a:

* obstacle avoidance: per (link, time step, obstacle), the buffered obstacle
  (obstacle + zonotope relaxation of the reachable set's buffer part) is
  converted to halfspaces; the sliceable part evaluates to a polynomial
  point in k_a, and the constraint is -max(A x(k_a) - b).  Negative by at
  least the margin means provably no collision.
* self-intersection: same construction on the difference of two links'
  sliceable parts against their combined buffers.
* joint limits: closed-form trajectory extrema against position and speed
  limits.

Values and subgradients for all constraints evaluate in one vectorized pass
so the optimizer's inner loop stays cheap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .arm import ArmModel
from .compose import ComposedRS
from .sets import (
    HalfspaceRep,
    IdAllocator,
    Kind,
    PolyZonotope,
    Zonotope,
    halfspace_rep,
    linear_map,
    minkowski_sum,
    overapprox_zonotope,
    reduce_generators,
)
from .trajectories import ParamBox, TimingConfig

#: Feasibility means every constraint value <= -MARGIN_DEFAULT: a float-safe
#: stand-in for the strict inequalities the safety argument needs (m).
MARGIN_DEFAULT = 1e-6

#: Slack added on top of the margin when pruning provably-inactive cells.
_PRUNE_SLACK = 1e-9


@dataclass(frozen=True)
class PolynomialPoint:
    """The map k_a -> point of one cell's fully-sliceable part.

    ``eval`` substitutes lambda_i = (k_a_i - center_i)/halfwidth_i (zero for
    collapsed intervals) into constant + sum_t coef_t * prod_i lambda_i^e_ti.
    """

    constant: np.ndarray  # (3,)
    coefs: np.ndarray  # (T, 3)
    exponents: np.ndarray  # (T, n_q) small non-negative ints

    @staticmethod
    def from_sliceable(v_slc: PolyZonotope, n_q: int) -> "PolynomialPoint":
        exps = np.zeros((v_slc.n_gens, n_q), dtype=np.int64)
        for t, factors in enumerate(v_slc.factors):
            for fid in factors:
                if fid.kind is not Kind.ACC:
                    raise ValueError(
                        "sliceable part may only carry acceleration coefficients"
                    )
                exps[t, fid.joint] += 1
        return PolynomialPoint(
            constant=np.asarray(v_slc.center, dtype=float),
            coefs=np.asarray(v_slc.gens, dtype=float),
            exponents=exps,
        )

    @property
    def n_terms(self) -> int:
        return self.coefs.shape[0]

    def radius_bound(self) -> float:
        """Ball radius around the constant covering all evaluations."""
        if self.n_terms == 0:
            return 0.0
        return float(np.linalg.norm(self.coefs, axis=1).sum())

    def eval(self, k_a: np.ndarray, boxes: ParamBox) -> np.ndarray:
        lam = _lambda_of(k_a, boxes)
        if self.n_terms == 0:
            return self.constant.copy()
        terms = np.prod(lam[None, :] ** self.exponents, axis=1)
        return self.constant + terms @ self.coefs

    def jacobian(self, k_a: np.ndarray, boxes: ParamBox) -> np.ndarray:
        """d point / d k_a, shape (3, n_q)."""
        lam = _lambda_of(k_a, boxes)
        inv_w = _inv_halfwidths(boxes)
        if self.n_terms == 0:
            return np.zeros((3, boxes.n_q))
        d = _term_derivatives(lam, self.exponents)  # (T, n_q)
        return np.einsum("td,tj->dj", self.coefs, d) * inv_w[None, :]


def _lambda_of(k_a: np.ndarray, boxes: ParamBox) -> np.ndarray:
    k_a = np.asarray(k_a, dtype=float)
    hw = boxes.ka_halfwidths
    lam = np.where(hw > 0.0, (k_a - boxes.ka_centers) / np.where(hw > 0.0, hw, 1.0), 0.0)
    if np.any(np.abs(lam) > 1.0 + 1e-9):
        raise ValueError("k_a outside its decision box")
    return np.clip(lam, -1.0, 1.0)


def _inv_halfwidths(boxes: ParamBox) -> np.ndarray:
    hw = boxes.ka_halfwidths
    return np.where(hw > 0.0, 1.0 / np.where(hw > 0.0, hw, 1.0), 0.0)


def _term_derivatives(lam: np.ndarray, exps: np.ndarray) -> np.ndarray:
    """d/d lambda_j of prod_i lambda_i^e_i per term, shape like exps."""
    t, n_q = exps.shape
    powers = lam[None, :] ** exps  # (T, n_q)
    out = np.zeros((t, n_q))
    for j in range(n_q):
        others = np.prod(np.delete(powers, j, axis=1), axis=1)
        ej = exps[:, j]
        pow_m1 = lam[j] ** np.maximum(ej - 1, 0)
        out[:, j] = np.where(ej > 0, ej * pow_m1 * others, 0.0)
    return out


@dataclass(frozen=True)
class CellConstraint:
    """One halfspace-vs-polynomial-point constraint."""

    kind: str  # "obstacle" | "self"
    joint: int
    time_index: int
    obstacle: int  # obstacle id, or the partner link for self pairs
    rep: HalfspaceRep
    point_index: int  # into ConstraintSet.points


@dataclass
class JointLimitSet:
    """Closed-form position/speed limit functions of k_a."""

    q0: np.ndarray
    dq0: np.ndarray
    q_min: np.ndarray
    q_max: np.ndarray
    dq_lim: np.ndarray
    timing: TimingConfig

    def labels(self) -> list[str]:
        out = []
        for i in range(self.q0.shape[0]):
            if np.isfinite(self.q_min[i]):
                out.append(f"pos_min[{i}]")
            if np.isfinite(self.q_max[i]):
                out.append(f"pos_max[{i}]")
            out.append(f"speed[{i}]")
        return out

    def eval(self, k_a: np.ndarray):
        """Values and rows of d value / d k_a; negative values are safe."""
        n_q = self.q0.shape[0]
        k_a = np.asarray(k_a, dtype=float)
        tp, tf = self.timing.t_plan, self.timing.t_f
        kv = self.dq0

        # candidate positions and their k_a derivatives, order: 0, t*, tp, tf
        q_tp = self.q0 + kv * tp + 0.5 * k_a * tp**2
        q_tf = q_tp + (kv + k_a * tp) * 0.5 * (tf - tp)
        d_tp = 0.5 * tp**2
        d_tf = d_tp + 0.5 * tp * (tf - tp)
        with np.errstate(divide="ignore", invalid="ignore"):
            t_star = np.where(k_a != 0.0, -kv / np.where(k_a == 0.0, 1.0, k_a), np.nan)
        interior = (k_a != 0.0) & (t_star > 0.0) & (t_star < tp)
        q_star = np.where(interior, self.q0 - kv**2 / (2.0 * np.where(k_a == 0.0, 1.0, k_a)), self.q0)
        d_star = np.where(interior, kv**2 / (2.0 * np.where(k_a == 0.0, 1.0, k_a) ** 2), 0.0)

        cand_q = np.stack([np.broadcast_to(self.q0, (n_q,)), q_star, q_tp, q_tf])
        cand_d = np.stack([np.zeros(n_q), d_star, np.full(n_q, d_tp), np.full(n_q, d_tf)])
        hi_idx = np.argmax(cand_q, axis=0)
        lo_idx = np.argmin(cand_q, axis=0)
        cols = np.arange(n_q)
        q_hi, dq_hi = cand_q[hi_idx, cols], cand_d[hi_idx, cols]
        q_lo, dq_lo = cand_q[lo_idx, cols], cand_d[lo_idx, cols]

        v_pk = kv + k_a * tp
        speed = np.maximum(np.abs(kv), np.abs(v_pk))
        d_speed = np.where(np.abs(v_pk) > np.abs(kv), np.sign(v_pk) * tp, 0.0)

        values, grads = [], []
        for i in range(n_q):
            if np.isfinite(self.q_min[i]):
                values.append(self.q_min[i] - q_lo[i])
                g = np.zeros(n_q)
                g[i] = -dq_lo[i]
                grads.append(g)
            if np.isfinite(self.q_max[i]):
                values.append(q_hi[i] - self.q_max[i])
                g = np.zeros(n_q)
                g[i] = dq_hi[i]
                grads.append(g)
            values.append(speed[i] - self.dq_lim[i])
            g = np.zeros(n_q)
            g[i] = d_speed[i]
            grads.append(g)
        return np.asarray(values), np.asarray(grads).reshape(len(values), n_q)


class ConstraintSet:
    """All constraints of one planning iteration, compiled for fast eval."""

    def __init__(
        self,
        boxes: ParamBox,
        points: list[PolynomialPoint],
        cell_constraints: list[CellConstraint],
        limits: JointLimitSet,
        margin: float = MARGIN_DEFAULT,
    ):
        self.boxes = boxes
        self.points = points
        self.cell_constraints = cell_constraints
        self.limits = limits
        self.margin = margin
        self._compile()

    # -- construction of the flat arrays ------------------------------------
    def _compile(self) -> None:
        n_q = self.boxes.n_q
        p = len(self.points)
        if p:
            t_counts = [pt.n_terms for pt in self.points]
            self._const = np.stack([pt.constant for pt in self.points])
            if sum(t_counts):
                self._coefs = np.concatenate([pt.coefs for pt in self.points])
                self._exps = np.concatenate([pt.exponents for pt in self.points])
                rows = np.repeat(np.arange(p), t_counts)
                self._spread = sp.csr_matrix(
                    (np.ones(len(rows)), (rows, np.arange(len(rows)))),
                    shape=(p, len(rows)),
                )
            else:
                self._coefs = np.empty((0, 3))
                self._exps = np.empty((0, n_q), dtype=np.int64)
                self._spread = sp.csr_matrix((p, 0))
        if self.cell_constraints:
            self._a_all = np.concatenate([c.rep.A for c in self.cell_constraints])
            self._b_all = np.concatenate([c.rep.b for c in self.cell_constraints])
            counts = [c.rep.b.shape[0] for c in self.cell_constraints]
            self._row_con = np.repeat(np.arange(len(counts)), counts)
            self._row_pt = np.repeat(
                np.array([c.point_index for c in self.cell_constraints]), counts
            )
            self._con_offsets = np.concatenate([[0], np.cumsum(counts)])[:-1]
            self._con_pt = np.array([c.point_index for c in self.cell_constraints])

    @property
    def n_cell_constraints(self) -> int:
        return len(self.cell_constraints)

    def labels(self) -> list[str]:
        out = [
            f"{c.kind}[{c.joint},{c.time_index},{c.obstacle}]"
            for c in self.cell_constraints
        ]
        return out + self.limits.labels()

    def _eval_points(self, k_a: np.ndarray) -> np.ndarray:
        lam = _lambda_of(k_a, self.boxes)
        if not self.points:
            return np.empty((0, 3))
        if self._coefs.shape[0] == 0:
            return self._const
        terms = np.prod(lam[None, :] ** self._exps, axis=1)
        return self._const + self._spread @ (terms[:, None] * self._coefs)

    def eval_values(self, k_a: np.ndarray) -> np.ndarray:
        """All constraint values at k_a; safe iff every one <= -margin."""
        lim_vals, _ = self.limits.eval(k_a)
        if not self.cell_constraints:
            return lim_vals
        x = self._eval_points(k_a)
        r = np.einsum("md,md->m", self._a_all, x[self._row_pt]) - self._b_all
        maxv = np.maximum.reduceat(r, self._con_offsets)
        return np.concatenate([-maxv, lim_vals])

    def eval_with_subgradients(self, k_a: np.ndarray):
        """Values plus one subgradient row per constraint.

        For the halfspace constraints the maximizing row (smallest index on
        ties) is chained through the polynomial point's Jacobian.
        """
        lim_vals, lim_grads = self.limits.eval(k_a)
        if not self.cell_constraints:
            return lim_vals, lim_grads

        lam = _lambda_of(k_a, self.boxes)
        n_q = self.boxes.n_q
        x = self._eval_points(k_a)
        r = np.einsum("md,md->m", self._a_all, x[self._row_pt]) - self._b_all
        maxv = np.maximum.reduceat(r, self._con_offsets)

        is_max = r >= maxv[self._row_con] - 0.0
        row_ids = np.where(is_max, np.arange(r.shape[0]), r.shape[0])
        first = np.minimum.reduceat(row_ids, self._con_offsets)

        # point jacobians (P, 3, n_q)
        if self._coefs.shape[0]:
            d = _term_derivatives(lam, self._exps)  # (T, n_q)
            jac_pts = np.stack(
                [self._spread @ (self._coefs[:, dd][:, None] * d) for dd in range(3)],
                axis=1,
            )
            jac_pts = jac_pts * _inv_halfwidths(self.boxes)[None, None, :]
        else:
            jac_pts = np.zeros((len(self.points), 3, n_q))

        a_star = self._a_all[first]
        grads = -np.einsum("cd,cdj->cj", a_star, jac_pts[self._con_pt])
        values = np.concatenate([-maxv, lim_vals])
        grad_rows = np.concatenate([grads, lim_grads], axis=0)
        return values, grad_rows

    def describe(self) -> dict:
        """Constraint metadata for debugging dumps."""
        return {
            "n_obstacle": sum(1 for c in self.cell_constraints if c.kind == "obstacle"),
            "n_self": sum(1 for c in self.cell_constraints if c.kind == "self"),
            "n_limit": len(self.limits.labels()),
            "margin": self.margin,
        }


def eval_point(point: PolynomialPoint, k_a: np.ndarray, boxes: ParamBox) -> np.ndarray:
    """Evaluate a cell's sliceable part at a concrete decision value."""
    return point.eval(k_a, boxes)


def build_obstacle_constraints(
    rs: ComposedRS,
    obstacles: list[Zonotope],
    margin: float = MARGIN_DEFAULT,
    allocator: IdAllocator | None = None,
    prune: bool = True,
    n_buf_red: int | None = 20,
):
    """Per (link, time step, obstacle) halfspace constraints.

    Cells whose evaluated-point ball provably clears the buffered obstacle's
    ball by more than the margin are dropped; that removes only constraints
    that could never become active, so safety is unaffected.  ``n_buf_red``
    caps the buffered obstacle's generator count before conversion (also
    conservative: reduction only grows the set) to bound the halfspace count.
    """
    allocator = allocator or IdAllocator(start=3_000_000_000)
    points: list[PolynomialPoint] = []
    constraints: list[CellConstraint] = []
    obs_centers = np.stack([o.center for o in obstacles]) if obstacles else np.empty((0, 3))
    obs_axis = (
        np.stack([np.abs(o.gens).sum(axis=0) for o in obstacles])
        if obstacles
        else np.empty((0, 3))
    )
    for i in range(rs.n_q):
        for n in range(rs.n_steps):
            cell = rs.cells[i][n]
            point = PolynomialPoint.from_sliceable(cell.v_slc, rs.n_q)
            if prune:
                # ball-vs-ball separation from raw arrays; constructs the
                # buffered sets only for cells that could matter
                r_point = point.radius_bound()
                buf_axis = np.abs(cell.v_buf.gens).sum(axis=0)
                radii = np.linalg.norm(buf_axis[None, :] + obs_axis, axis=1)
                dists = np.linalg.norm(point.constant[None, :] - obs_centers, axis=1)
                live = np.flatnonzero(dists - r_point - radii < margin + _PRUNE_SLACK)
                if live.size == 0:
                    continue
            else:
                live = np.arange(len(obstacles))
            buf_z = overapprox_zonotope(cell.v_buf, allocator)
            point_idx = len(points)
            points.append(point)
            for o_idx in live:
                buffered = minkowski_sum(obstacles[o_idx], buf_z)
                if n_buf_red is not None:
                    buffered = reduce_generators(buffered, n_buf_red, allocator)
                rep = halfspace_rep(buffered, allocator)
                constraints.append(
                    CellConstraint(
                        kind="obstacle",
                        joint=i,
                        time_index=n,
                        obstacle=int(o_idx),
                        rep=rep,
                        point_index=point_idx,
                    )
                )
    return points, constraints


def build_self_intersection_constraints(
    rs: ComposedRS,
    self_pairs,
    margin: float = MARGIN_DEFAULT,
    allocator: IdAllocator | None = None,
    prune: bool = True,
    point_offset: int = 0,
    n_buf_red: int | None = 20,
):
    """Per (link pair, time step) constraints from the difference set.

    The difference of the two sliceable parts must stay outside the combined
    buffers (a zero-centered zonotope) for the links to be provably apart.
    """
    allocator = allocator or IdAllocator(start=4_000_000_000)
    points: list[PolynomialPoint] = []
    constraints: list[CellConstraint] = []
    neg = -np.eye(3)
    for (i, j) in self_pairs:
        if not (0 <= i < rs.n_q and 0 <= j < rs.n_q):
            raise ValueError(f"self-intersection pair ({i}, {j}) out of range")
        for n in range(rs.n_steps):
            ci, cj = rs.cells[i][n], rs.cells[j][n]
            diff = minkowski_sum(ci.v_slc, linear_map(neg, cj.v_slc))
            point = PolynomialPoint.from_sliceable(diff, rs.n_q)
            buf = minkowski_sum(ci.v_buf, cj.v_buf)
            buf_z = overapprox_zonotope(buf, allocator)
            if prune:
                gap = (
                    float(np.linalg.norm(point.constant))
                    - point.radius_bound()
                    - buf_z.radius_bound()
                )
                if gap >= margin + _PRUNE_SLACK:
                    continue
            if n_buf_red is not None:
                buf_z = reduce_generators(buf_z, n_buf_red, allocator)
            rep = halfspace_rep(buf_z, allocator)
            constraints.append(
                CellConstraint(
                    kind="self",
                    joint=i,
                    time_index=n,
                    obstacle=j,
                    rep=rep,
                    point_index=point_offset + len(points),
                )
            )
            points.append(point)
    return points, constraints


def build_joint_limit_constraints(
    q0: np.ndarray, dq0: np.ndarray, arm: ArmModel, timing: TimingConfig
) -> JointLimitSet:
    return JointLimitSet(
        q0=np.asarray(q0, dtype=float),
        dq0=np.asarray(dq0, dtype=float),
        q_min=arm.q_min,
        q_max=arm.q_max,
        dq_lim=arm.dq_lim,
        timing=timing,
    )


def build_constraint_set(
    rs: ComposedRS,
    obstacles: list[Zonotope],
    arm: ArmModel,
    margin: float = MARGIN_DEFAULT,
    prune: bool = True,
    n_buf_red: int | None = 20,
) -> ConstraintSet:
    """Obstacle, self-intersection, and joint-limit constraints together."""
    pts_o, cons_o = build_obstacle_constraints(
        rs, obstacles, margin, prune=prune, n_buf_red=n_buf_red
    )
    pts_s, cons_s = build_self_intersection_constraints(
        rs, arm.self_pairs, margin, prune=prune, point_offset=len(pts_o),
        n_buf_red=n_buf_red,
    )
    limits = build_joint_limit_constraints(rs.q0, rs.dq0, arm, rs.timing)
    return ConstraintSet(
        boxes=rs.boxes,
        points=pts_o + pts_s,
        cell_constraints=cons_o + cons_s,
        limits=limits,
        margin=margin,
    )
