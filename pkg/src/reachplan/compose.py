"""Online composition of the arm's workspace reachable set.

Given the predicted initial state (q0, dq0), each joint's bank sequence is
sliced at the exact initial speed, reshaped into matrix zonotopes enclosing
that joint's rotations, and chained through the kinematics: per time step,
each link volume is rotated through its predecessors and stacked on the
joint-displacement sets.  The result per (link, time step) is split into a
fully parameter-sliceable part (collapses to a point once the acceleration
decision is fixed) and a buffer part holding everything else.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .arm import ArmModel, rotation_matrix, skew
from .jrs import ACC_GEN, VEL_GEN, JRSBank, JRSSequence, select_jrs
from .sets import (
    IdAllocator,
    Kind,
    MatrixZonotope,
    PolyZonotope,
    Zonotope,
    acc_id,
    matzono_product,
    minkowski_sum,
    reduce_generators,
    slice_set,
    vel_id,
)
from .trajectories import JointParamBox, ParamBox, TimingConfig


@dataclass(frozen=True)
class RSCell:
    """Reachable set of one link over one time interval, split in two."""

    v_slc: PolyZonotope  # center + fully parameter-sliceable generators
    v_buf: PolyZonotope  # zero center + every remaining generator


@dataclass(frozen=True)
class ComposedRS:
    arm_name: str
    q0: np.ndarray
    dq0: np.ndarray
    timing: TimingConfig
    boxes: ParamBox  # per-joint decision boxes of the selected sequences
    n_red: int
    cells: tuple[tuple[RSCell, ...], ...]  # [joint][time index]

    @property
    def n_q(self) -> int:
        return len(self.cells)

    @property
    def n_steps(self) -> int:
        return len(self.cells[0])


def relabel_bank_zono(
    z: Zonotope, joint: int, allocator: IdAllocator
) -> Zonotope:
    """Instantiate a joint-agnostic bank zonotope for a concrete joint.

    VEL/ACC labels move to the target joint; anonymous error labels get
    fresh uids so error coefficients of different joints and time steps
    never alias.
    """
    ids = []
    for fid in z.ids:
        if fid.kind is Kind.VEL:
            ids.append(vel_id(joint))
        elif fid.kind is Kind.ACC:
            ids.append(acc_id(joint))
        else:
            ids.append(allocator.fresh())
    return Zonotope(z.center, z.gens, ids)


def slice_by_init_vel(
    z: Zonotope, dq0_i: float, box: JointParamBox, joint: int
) -> Zonotope:
    """Evaluate the velocity coefficient at the exact initial speed.

    The velocity-sliceable generator carries a single factor, so it folds
    into the center.  Tiny floating-point overshoot of the coefficient range
    is clamped; genuinely out-of-range speeds are an error.
    """
    if box.kv_halfwidth == 0.0:
        lam = 0.0
        if abs(dq0_i - box.kv_center) > 1e-9:
            raise ValueError("initial speed outside a collapsed velocity interval")
    else:
        lam = (dq0_i - box.kv_center) / box.kv_halfwidth
        if abs(lam) > 1.0 + 1e-9:
            raise ValueError(f"initial speed maps to coefficient {lam} outside [-1, 1]")
        lam = min(1.0, max(-1.0, lam))
    return slice_set(z, [vel_id(joint)], [lam])


def make_mat_zono(
    z_sliced: Zonotope, q0_i: float, axis: np.ndarray
) -> MatrixZonotope:
    """Rotation-matrix enclosure from a velocity-sliced joint zonotope.

    With A(c, s) = I + [u]x s + [u]x^2 (1 - c) affine in the zonotope's
    cos/sin coordinates, the center maps to R(q0) A(c0, s0) and each
    generator (cg, sg, ., .) to R(q0) ([u]x sg - [u]x^2 cg), keeping its
    label.  R(q0) corrects for the joint's actual initial angle since the
    bank assumes a zero start.
    """
    k = skew(np.asarray(axis, dtype=float))
    k2 = k @ k
    r0 = rotation_matrix(axis, q0_i)
    c0, s0 = z_sliced.center[0], z_sliced.center[1]
    center = r0 @ (np.eye(3) + k * s0 + k2 * (1.0 - c0))
    cg = z_sliced.gens[:, 0]
    sg = z_sliced.gens[:, 1]
    mats = sg[:, None, None] * k[None] - cg[:, None, None] * k2[None]
    gens = np.einsum("ab,mbc->mac", r0, mats)
    return MatrixZonotope(center, gens, z_sliced.ids)


def split_slice_buf(v: PolyZonotope) -> tuple[PolyZonotope, PolyZonotope]:
    """Separate fully parameter-sliceable generators from the rest.

    The first part keeps the center; the second is centered at zero.  Their
    Minkowski sum reproduces the input exactly.
    """
    mask = v.fully_sliceable
    n_slc = int(mask.sum())
    v_slc = PolyZonotope(
        v.center,
        v.gens[mask],
        tuple(f for f, m in zip(v.factors, mask) if m),
        _canonical=True,
        _fully=np.ones(n_slc, bool),
        _some=np.ones(n_slc, bool),
    )
    v_buf = PolyZonotope(
        np.zeros(v.dim),
        v.gens[~mask],
        tuple(f for f, m in zip(v.factors, mask) if not m),
        _canonical=True,
        _fully=np.zeros(v.n_gens - n_slc, bool),
        _some=v.sliceable[~mask],
    )
    return v_slc, v_buf


def compose_rs(
    arm: ArmModel,
    q0: np.ndarray,
    dq0: np.ndarray,
    bank: JRSBank,
    n_red: int = 40,
) -> ComposedRS:
    """Build the split reachable set for every (link, time step) cell.

    Generator counts are capped at ``n_red`` after every matrix product;
    fully-sliceable generators are kept out of the reduction whenever the
    remaining population alone can meet the cap, since slicing them later
    shrinks the set.
    """
    q0 = np.asarray(q0, dtype=float)
    dq0 = np.asarray(dq0, dtype=float)
    if q0.shape != (arm.n_q,) or dq0.shape != (arm.n_q,):
        raise ValueError("q0/dq0 length must match the arm's joint count")
    if np.any(np.abs(dq0) > bank.dq_lim):
        raise ValueError("initial speed outside the bank's velocity range")
    if np.any(arm.dq_lim > bank.dq_lim + 1e-12):
        raise ValueError(
            "bank velocity range does not cover the arm's joint speed limits"
        )

    allocator = IdAllocator(start=0)
    seqs: list[JRSSequence] = [select_jrs(bank, float(v)) for v in dq0]
    boxes = ParamBox([s.box for s in seqs])
    timing = bank.timing
    n_steps = timing.n_steps

    link_volumes = [PolyZonotope.from_zonotope(j.link) for j in arm.joints]
    displacements = [j.displacement for j in arm.joints]

    def capped(v: PolyZonotope) -> PolyZonotope:
        return reduce_generators(
            v, n_red, allocator=allocator, protect_fully_sliceable=True
        )

    cells: list[list[RSCell]] = [[] for _ in range(arm.n_q)]
    for n in range(n_steps):
        mats = []
        for i in range(arm.n_q):
            z = relabel_bank_zono(seqs[i].zonos[n], i, allocator)
            z = slice_by_init_vel(z, float(dq0[i]), seqs[i].box, i)
            mats.append(make_mat_zono(z, float(q0[i]), arm.joints[i].axis))

        # joint-displacement chains: chain[j] = M_0 ... M_j {l_j}
        chain: list[PolyZonotope] = []
        for j in range(arm.n_q - 1):
            d = PolyZonotope.point(displacements[j])
            for jj in range(j, -1, -1):
                d = capped(matzono_product(mats[jj], d))
            chain.append(d)

        for i in range(arm.n_q):
            v = link_volumes[i]
            for jj in range(i, -1, -1):
                v = capped(matzono_product(mats[jj], v))
            for j in range(i):
                v = minkowski_sum(v, chain[j])
            v_slc, v_buf = split_slice_buf(v)
            cells[i].append(RSCell(v_slc=v_slc, v_buf=v_buf))

    return ComposedRS(
        arm_name=arm.name,
        q0=q0,
        dq0=dq0,
        timing=timing,
        boxes=boxes,
        n_red=n_red,
        cells=tuple(tuple(c) for c in cells),
    )
