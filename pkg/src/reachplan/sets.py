"""Conservative set arithmetic for zonotopes and their labeled extensions.

Three set families live here:

* ``Zonotope``: center plus generators, one labeled [-1, 1] coefficient per
  generator.
* ``MatrixZonotope``: the same construction over 3x3 matrices, used to
  enclose joint rotation matrices.
* ``PolyZonotope``: a zonotope whose generators carry *multisets* of factor
  labels, produced by matrix-zonotope products.  Evaluating some factors at
  fixed values ("slicing") extracts a subset of the set.

All objects are immutable after construction and every operation is a pure
function, so concurrent use needs no synchronization.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linprog

#: Boundary band for membership and intersection decisions, in the units of
#: the set (workspace meters for 3-D sets).
MEMBERSHIP_TOL = 1e-9

#: Generators gi, gj are treated as parallel when
#: ||gi x gj|| <= PARALLEL_TOL * ||gi|| * ||gj||.
PARALLEL_TOL = 1e-12

#: Magnitude of the axis-aligned generators added to rank-deficient zonotopes
#: before halfspace conversion.  Conservative: the set only grows.
DEGENERATE_INFLATION = 1e-8


class Kind(Enum):
    """What a factor label stands for."""

    VEL = "vel"  # per-joint initial-velocity decision coefficient
    ACC = "acc"  # per-joint acceleration decision coefficient
    GEN = "gen"  # anonymous conservative coefficient


_KIND_RANK = {Kind.VEL: 0, Kind.ACC: 1, Kind.GEN: 2}


@dataclass(frozen=True)
class FactorId:
    """Identity of one indeterminate [-1, 1] coefficient.

    VEL/ACC ids compare by (kind, joint) so that evaluating a joint's
    decision coefficient hits every time step at once; GEN ids compare by
    their uid alone.
    """

    kind: Kind
    joint: int | None = None
    uid: int | None = None

    def __post_init__(self):
        if self.kind in (Kind.VEL, Kind.ACC):
            if self.joint is None or self.uid is not None:
                raise ValueError("VEL/ACC ids carry a joint index and no uid")
        else:
            if self.uid is None or self.joint is not None:
                raise ValueError("GEN ids carry a uid and no joint index")

    @property
    def sort_key(self) -> tuple[int, int, int]:
        return (
            _KIND_RANK[self.kind],
            -1 if self.joint is None else self.joint,
            -1 if self.uid is None else self.uid,
        )

    @property
    def is_param(self) -> bool:
        """True for VEL/ACC ids (trajectory-parameter coefficients)."""
        return self.kind is not Kind.GEN

    def to_json(self) -> dict:
        d: dict = {"kind": self.kind.value}
        if self.joint is not None:
            d["joint"] = self.joint
        if self.uid is not None:
            d["uid"] = self.uid
        return d

    @staticmethod
    def from_json(d: dict) -> "FactorId":
        return FactorId(Kind(d["kind"]), d.get("joint"), d.get("uid"))


def vel_id(joint: int) -> FactorId:
    return FactorId(Kind.VEL, joint=joint)


def acc_id(joint: int) -> FactorId:
    return FactorId(Kind.ACC, joint=joint)


def generic_id(uid: int) -> FactorId:
    return FactorId(Kind.GEN, uid=uid)


#: A factor multiset, stored as a canonically sorted tuple (repeats allowed).
Factors = tuple[FactorId, ...]


def canon_factors(ids: Iterable[FactorId]) -> Factors:
    return tuple(sorted(ids, key=lambda f: f.sort_key))


class IdAllocator:
    """Deterministic source of fresh GEN uids.

    Long-lived sets that must be reproducible (composed reachable sets,
    scene obstacles) should each use their own allocator with a fixed
    starting uid; the module-level default starts high enough to never
    collide with those ranges.
    """

    def __init__(self, start: int = 0):
        self._counter = itertools.count(start)

    def fresh(self) -> FactorId:
        return generic_id(next(self._counter))

    def fresh_avoiding(self, taken: set[FactorId]) -> FactorId:
        fid = self.fresh()
        while fid in taken:
            fid = self.fresh()
        return fid


_DEFAULT_ALLOCATOR = IdAllocator(start=1 << 40)


def _as_readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    a.flags.writeable = False
    return a


class Zonotope:
    """Center plus generators, one factor label per generator."""

    __slots__ = ("dim", "center", "gens", "ids")

    def __init__(self, center, gens, ids: Sequence[FactorId]):
        self.center = _as_readonly(np.atleast_1d(center))
        self.dim = self.center.shape[0]
        gens = np.asarray(gens, dtype=float).reshape(-1, self.dim)
        self.gens = _as_readonly(gens)
        self.ids = tuple(ids)
        if len(self.ids) != self.gens.shape[0]:
            raise ValueError("one factor id per generator required")

    @property
    def n_gens(self) -> int:
        return self.gens.shape[0]

    @staticmethod
    def point(center) -> "Zonotope":
        center = np.atleast_1d(np.asarray(center, dtype=float))
        return Zonotope(center, np.empty((0, center.shape[0])), ())

    @staticmethod
    def box(center, half_extents, ids: Sequence[FactorId]) -> "Zonotope":
        center = np.asarray(center, dtype=float)
        return Zonotope(center, np.diag(np.asarray(half_extents, dtype=float)), ids)

    def radius_bound(self) -> float:
        """Upper bound on max distance from the center to any point.

        Half-diagonal of the axis-aligned bounding box.
        """
        if self.n_gens == 0:
            return 0.0
        return float(np.linalg.norm(np.abs(self.gens).sum(axis=0)))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Zonotope)
            and np.array_equal(self.center, other.center)
            and np.array_equal(self.gens, other.gens)
            and self.ids == other.ids
        )

    def __repr__(self) -> str:
        return f"Zonotope(dim={self.dim}, n_gens={self.n_gens})"

    def to_json_dict(self) -> dict:
        return {
            "center": self.center.tolist(),
            "generators": [
                {"vec": g.tolist(), "id": fid.to_json()}
                for g, fid in zip(self.gens, self.ids)
            ],
        }

    @staticmethod
    def from_json_dict(d: dict) -> "Zonotope":
        gens = [e["vec"] for e in d["generators"]]
        ids = [FactorId.from_json(e["id"]) for e in d["generators"]]
        center = np.asarray(d["center"], dtype=float)
        return Zonotope(center, np.asarray(gens).reshape(-1, center.shape[0]), ids)


class PolyZonotope:
    """Zonotope whose generators carry factor multisets.

    A generator is *fully parameter-sliceable* when every factor in its
    multiset is a VEL/ACC id: evaluating the trajectory parameters collapses
    it to a plain vector.  It is *parameter-sliceable* when at least one
    factor is VEL/ACC.
    """

    __slots__ = ("dim", "center", "gens", "factors", "fully_sliceable", "sliceable")

    def __init__(
        self,
        center,
        gens,
        factors: Sequence[Factors],
        *,
        _canonical: bool = False,
        _fully: np.ndarray | None = None,
        _some: np.ndarray | None = None,
    ):
        # the underscore arguments are trusted fast paths for internal
        # callers that already hold canonical factors / sliceability masks
        self.center = _as_readonly(np.atleast_1d(center))
        self.dim = self.center.shape[0]
        gens = np.asarray(gens, dtype=float).reshape(-1, self.dim)
        self.gens = _as_readonly(gens)
        if _canonical:
            self.factors = tuple(factors)
        else:
            self.factors = tuple(canon_factors(f) for f in factors)
        if len(self.factors) != self.gens.shape[0]:
            raise ValueError("one factor multiset per generator required")
        if any(len(f) == 0 for f in self.factors):
            raise ValueError("every generator needs at least one factor")
        if _fully is None or _some is None:
            _fully = np.fromiter(
                (all(fid.is_param for fid in f) for f in self.factors),
                dtype=bool,
                count=len(self.factors),
            )
            _some = np.fromiter(
                (any(fid.is_param for fid in f) for f in self.factors),
                dtype=bool,
                count=len(self.factors),
            )
        else:
            _fully = np.asarray(_fully, dtype=bool)
            _some = np.asarray(_some, dtype=bool)
        _fully.flags.writeable = False
        _some.flags.writeable = False
        self.fully_sliceable = _fully
        self.sliceable = _some

    @property
    def n_gens(self) -> int:
        return self.gens.shape[0]

    @staticmethod
    def point(center) -> "PolyZonotope":
        center = np.atleast_1d(np.asarray(center, dtype=float))
        return PolyZonotope(center, np.empty((0, center.shape[0])), ())

    @staticmethod
    def from_zonotope(z: Zonotope) -> "PolyZonotope":
        return PolyZonotope(z.center, z.gens, tuple((fid,) for fid in z.ids))

    def radius_bound(self) -> float:
        if self.n_gens == 0:
            return 0.0
        return float(np.linalg.norm(np.abs(self.gens).sum(axis=0)))

    def all_ids(self) -> set[FactorId]:
        return {fid for f in self.factors for fid in f}

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, PolyZonotope)
            and np.array_equal(self.center, other.center)
            and np.array_equal(self.gens, other.gens)
            and self.factors == other.factors
        )

    def __repr__(self) -> str:
        return f"PolyZonotope(dim={self.dim}, n_gens={self.n_gens})"

    def to_json_dict(self) -> dict:
        return {
            "center": self.center.tolist(),
            "generators": [
                {"vec": g.tolist(), "factors": [fid.to_json() for fid in f]}
                for g, f in zip(self.gens, self.factors)
            ],
        }


class MatrixZonotope:
    """Set of 3x3 matrices: center plus generators, one factor id each."""

    __slots__ = ("center", "gens", "ids")

    def __init__(self, center, gens, ids: Sequence[FactorId]):
        center = np.asarray(center, dtype=float)
        if center.shape != (3, 3):
            raise ValueError("matrix zonotope center must be 3x3")
        gens = np.asarray(gens, dtype=float).reshape(-1, 3, 3)
        self.center = _as_readonly(center)
        self.gens = _as_readonly(gens)
        self.ids = tuple(ids)
        if len(self.ids) != self.gens.shape[0]:
            raise ValueError("one factor id per generator required")

    @property
    def n_gens(self) -> int:
        return self.gens.shape[0]

    def __repr__(self) -> str:
        return f"MatrixZonotope(n_gens={self.n_gens})"


@dataclass(frozen=True)
class HalfspaceRep:
    """{y : A y - b <= 0} with unit row normals."""

    A: np.ndarray
    b: np.ndarray

    def max_violation(self, points: np.ndarray) -> np.ndarray:
        """max(A y - b) per point; <= 0 means inside (up to tolerance)."""
        pts = np.atleast_2d(points)
        return (pts @ self.A.T - self.b).max(axis=1)


# ---------------------------------------------------------------------------
# basic operations


def minkowski_sum(x, y):
    """Sum of the centers, concatenation of the generators.

    Both operands must be the same kind (Zonotope or PolyZonotope) and the
    same dimension; factor labels are preserved verbatim.
    """
    if type(x) is not type(y):
        raise TypeError(f"mixed-kind Minkowski sum: {type(x)} vs {type(y)}")
    if x.dim != y.dim:
        raise ValueError(f"dimension mismatch: {x.dim} vs {y.dim}")
    center = x.center + y.center
    gens = np.concatenate([x.gens, y.gens], axis=0)
    if isinstance(x, Zonotope):
        return Zonotope(center, gens, x.ids + y.ids)
    return PolyZonotope(
        center,
        gens,
        x.factors + y.factors,
        _canonical=True,
        _fully=np.concatenate([x.fully_sliceable, y.fully_sliceable]),
        _some=np.concatenate([x.sliceable, y.sliceable]),
    )


def linear_map(a: np.ndarray, z):
    """Apply a matrix to the center and every generator; labels unchanged."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[1] != z.dim:
        raise ValueError(f"matrix columns ({a.shape}) must match set dim {z.dim}")
    center = a @ z.center
    gens = z.gens @ a.T
    if isinstance(z, Zonotope):
        return Zonotope(center, gens, z.ids)
    return PolyZonotope(
        center,
        gens,
        z.factors,
        _canonical=True,
        _fully=z.fully_sliceable,
        _some=z.sliceable,
    )


def slice_set(z, ids: Sequence[FactorId], values: Sequence[float]):
    """Evaluate the given factors at fixed values in [-1, 1].

    Each occurrence of an evaluated factor multiplies its generator by the
    value and is removed from the multiset; generators left with no factors
    are folded into the center.  Values outside [-1, 1] are rejected because
    they would break conservativeness.  Ids absent from the set are a no-op.
    """
    ids = list(ids)
    values = [float(v) for v in values]
    if len(ids) != len(values):
        raise ValueError("ids and values must have equal length")
    for v in values:
        if not -1.0 <= v <= 1.0:
            raise ValueError(f"slice value {v} outside [-1, 1]")
    val_of = dict(zip(ids, values))

    if isinstance(z, Zonotope):
        center = z.center.copy()
        keep_gens, keep_ids = [], []
        for g, fid in zip(z.gens, z.ids):
            if fid in val_of:
                center = center + val_of[fid] * g
            else:
                keep_gens.append(g)
                keep_ids.append(fid)
        return Zonotope(center, np.asarray(keep_gens).reshape(-1, z.dim), keep_ids)

    center = z.center.copy()
    keep_gens, keep_factors = [], []
    for g, fs in zip(z.gens, z.factors):
        scale = 1.0
        remaining = []
        for fid in fs:
            if fid in val_of:
                scale *= val_of[fid]
            else:
                remaining.append(fid)
        g = scale * g
        if remaining:
            keep_gens.append(g)
            keep_factors.append(tuple(remaining))
        else:
            center = center + g
    return PolyZonotope(
        center, np.asarray(keep_gens).reshape(-1, z.dim), keep_factors
    )


def matzono_product(m: MatrixZonotope, z) -> PolyZonotope:
    """Product of a matrix zonotope with a zonotope or poly-zonotope.

    Output generators are {X gi} u {Gj x} u {Gj gi} where X, x are the
    centers; factor multisets are the input generator's factors, the matrix
    generator's id, and their multiset union respectively.  Exactly-zero
    generators are dropped (they contribute nothing to the set).
    """
    if z.dim != 3:
        raise ValueError("matrix zonotope products require 3-D operands")
    if isinstance(z, Zonotope):
        z = PolyZonotope.from_zonotope(z)

    center = m.center @ z.center
    m_param = np.fromiter((mid.is_param for mid in m.ids), dtype=bool, count=m.n_gens)
    blocks = []
    factors: list[Factors] = []
    fully_parts, some_parts = [], []

    if z.n_gens:
        blocks.append(z.gens @ m.center.T)  # X gi
        factors.extend(z.factors)
        fully_parts.append(z.fully_sliceable)
        some_parts.append(z.sliceable)
    if m.n_gens:
        blocks.append(m.gens @ z.center)  # Gj x
        factors.extend((mid,) for mid in m.ids)
        fully_parts.append(m_param)
        some_parts.append(m_param)
    if m.n_gens and z.n_gens:
        cross = np.einsum("mab,pb->mpa", m.gens, z.gens)  # Gj gi
        blocks.append(cross.reshape(-1, 3))
        factors.extend(
            canon_factors(z.factors[i] + (m.ids[j],))
            for j in range(m.n_gens)
            for i in range(z.n_gens)
        )
        fully_parts.append((m_param[:, None] & z.fully_sliceable[None, :]).ravel())
        some_parts.append((m_param[:, None] | z.sliceable[None, :]).ravel())

    if blocks:
        gens = np.concatenate(blocks, axis=0)
        fully = np.concatenate(fully_parts)
        some = np.concatenate(some_parts)
    else:
        gens = np.empty((0, 3))
        fully = np.empty(0, dtype=bool)
        some = np.empty(0, dtype=bool)
    nonzero = ~np.all(gens == 0.0, axis=1)
    gens = gens[nonzero]
    factors = [f for f, nz in zip(factors, nonzero) if nz]
    return PolyZonotope(
        center, gens, factors, _canonical=True, _fully=fully[nonzero], _some=some[nonzero]
    )


def overapprox_zonotope(
    z: PolyZonotope, allocator: IdAllocator | None = None
) -> Zonotope:
    """Relax every factor multiset to a single fresh GEN coefficient.

    Conservative: any product of [-1, 1] values lies in [-1, 1].
    """
    allocator = allocator or _DEFAULT_ALLOCATOR
    taken = z.all_ids()
    ids = [allocator.fresh_avoiding(taken) for _ in range(z.n_gens)]
    return Zonotope(z.center, z.gens, ids)


def reduce_generators(
    z,
    n_red: int,
    allocator: IdAllocator | None = None,
    protect_fully_sliceable: bool = False,
):
    """Keep the largest ``n_red`` generators (Euclidean norm), box the rest.

    Discarded generators are replaced by axis-aligned generators whose j-th
    magnitude is the sum of the discarded |j-th components|; each box
    generator gets a fresh GEN id, so any discarded parameter-sliceable
    generator loses its sliceability.  The output always contains the input.

    With ``protect_fully_sliceable`` (PolyZonotope only), fully-sliceable
    generators are kept whenever the rest alone can be reduced to meet
    ``n_red``; otherwise the smallest fully-sliceable ones are boxed last.
    """
    if n_red < 0:
        raise ValueError("n_red must be >= 0")
    p = z.n_gens
    if p <= n_red:
        return z
    allocator = allocator or _DEFAULT_ALLOCATOR

    norms = np.linalg.norm(z.gens, axis=1)
    order = np.argsort(-norms, kind="stable")

    if protect_fully_sliceable and isinstance(z, PolyZonotope):
        fully = z.fully_sliceable
        f_sorted = [i for i in order if fully[i]]
        n_sorted = [i for i in order if not fully[i]]
        if len(f_sorted) <= n_red:
            keep = f_sorted + n_sorted[: n_red - len(f_sorted)]
        else:
            keep = f_sorted[:n_red]
    else:
        keep = list(order[:n_red])

    keep_mask = np.zeros(p, dtype=bool)
    keep_mask[keep] = True
    keep_idx = np.flatnonzero(keep_mask)  # input order, deterministic
    drop_idx = np.flatnonzero(~keep_mask)

    box_mags = np.abs(z.gens[drop_idx]).sum(axis=0)
    if isinstance(z, Zonotope):
        taken = set(z.ids)
    else:
        taken = z.all_ids()
    box_gens, box_ids = [], []
    for axis in np.flatnonzero(box_mags > 0.0):
        g = np.zeros(z.dim)
        g[axis] = box_mags[axis]
        box_gens.append(g)
        box_ids.append(allocator.fresh_avoiding(taken))
    box_gens = np.asarray(box_gens).reshape(-1, z.dim)

    gens = np.concatenate([z.gens[keep_idx], box_gens], axis=0)
    if isinstance(z, Zonotope):
        ids = tuple(z.ids[i] for i in keep_idx) + tuple(box_ids)
        return Zonotope(z.center, gens, ids)
    factors = tuple(z.factors[i] for i in keep_idx) + tuple(
        (fid,) for fid in box_ids
    )
    n_box = len(box_ids)
    return PolyZonotope(
        z.center,
        gens,
        factors,
        _canonical=True,
        _fully=np.concatenate([z.fully_sliceable[keep_idx], np.zeros(n_box, bool)]),
        _some=np.concatenate([z.sliceable[keep_idx], np.zeros(n_box, bool)]),
    )


# ---------------------------------------------------------------------------
# halfspace conversion, membership, intersection


def _inflate_degenerate(z: Zonotope, allocator: IdAllocator | None) -> Zonotope:
    allocator = allocator or _DEFAULT_ALLOCATOR
    taken = set(z.ids)
    extra = np.eye(z.dim) * DEGENERATE_INFLATION
    ids = [allocator.fresh_avoiding(taken) for _ in range(z.dim)]
    return Zonotope(z.center, np.concatenate([z.gens, extra], axis=0), z.ids + tuple(ids))


def _is_full_rank(gens: np.ndarray) -> bool:
    if gens.shape[0] < 3:
        return False
    s = np.linalg.svd(gens, compute_uv=False)
    return bool(s[-1] > 1e-12 * max(s[0], 1e-300))


def halfspace_rep(
    z: Zonotope, allocator: IdAllocator | None = None
) -> HalfspaceRep:
    """Facet-normal halfspace representation of a 3-D zonotope.

    Every facet normal of a 3-D zonotope is the cross product of two
    generators, so rows +/-(gi x gj)/|..| with offsets +/-n.c + sum_k |n.gk|
    give an exact representation (plus redundant valid rows).  Parallel
    generator pairs are skipped; rank-deficient inputs are first inflated by
    three axis-aligned generators of magnitude ``DEGENERATE_INFLATION``.
    """
    if z.dim != 3:
        raise ValueError("halfspace conversion implemented for dim 3 only")
    gens = z.gens[~np.all(z.gens == 0.0, axis=1)]
    if not _is_full_rank(gens):
        return halfspace_rep(_inflate_degenerate(z, allocator), allocator)

    p = gens.shape[0]
    iu, ju = np.triu_indices(p, k=1)
    crosses = np.cross(gens[iu], gens[ju])
    cnorms = np.linalg.norm(crosses, axis=1)
    gnorms = np.linalg.norm(gens, axis=1)
    ok = cnorms > PARALLEL_TOL * gnorms[iu] * gnorms[ju]
    if not np.any(ok):
        return halfspace_rep(_inflate_degenerate(z, allocator), allocator)

    normals = crosses[ok] / cnorms[ok][:, None]

    # duplicate normals carry identical offsets (support values), so keep
    # one representative per direction; canonicalize sign first
    sign = np.sign(normals[:, 0])
    sign = np.where(sign == 0.0, np.sign(normals[:, 1]), sign)
    sign = np.where(sign == 0.0, np.sign(normals[:, 2]), sign)
    canon = normals * sign[:, None]
    _, first = np.unique(np.round(canon, 12), axis=0, return_index=True)
    normals = canon[np.sort(first)]

    spread = np.abs(normals @ gens.T).sum(axis=1)
    offset = normals @ z.center
    a = np.concatenate([normals, -normals], axis=0)
    b = np.concatenate([offset + spread, -offset + spread])
    return HalfspaceRep(_as_readonly(a), _as_readonly(b))


def contains_point(z: Zonotope, point, tol: float = MEMBERSHIP_TOL) -> bool:
    """Exact membership via linear feasibility of the coefficient system.

    When the generator matrix is square and invertible the unique candidate
    coefficient vector is solved directly; otherwise a small LP minimizes the
    infinity-norm residual over the coefficient box.
    """
    return bool(contains_points(z, np.asarray(point, dtype=float)[None, :], tol)[0])


def contains_points(
    z: Zonotope, points: np.ndarray, tol: float = MEMBERSHIP_TOL
) -> np.ndarray:
    """Vectorized ``contains_point`` over an (N, dim) array."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    r = pts - z.center
    nz = ~np.all(z.gens == 0.0, axis=1)
    g = z.gens[nz].T  # (dim, p)
    p = g.shape[1]

    if p == 0:
        return np.max(np.abs(r), axis=1) <= tol
    if p == z.dim:
        try:
            beta = np.linalg.solve(g, r.T)  # (p, N)
        except np.linalg.LinAlgError:
            beta = None
        if beta is not None:
            inside = np.max(np.abs(beta), axis=0) <= 1.0 + 1e-12
            # residual guard against ill-conditioning
            resid = np.max(np.abs(g @ np.clip(beta, -1, 1) - r.T), axis=0)
            out = inside & (resid <= max(tol, 1e-9))
            # fall back to the LP only for near-boundary rejections
            boundary = (~out) & (np.max(np.abs(beta), axis=0) <= 1.0 + 1e-6)
            for i in np.flatnonzero(boundary):
                out[i] = _lp_member(g, r[i], tol)
            return out

    return np.array([_lp_member(g, ri, tol) for ri in r], dtype=bool)


def _lp_member(g: np.ndarray, r: np.ndarray, tol: float) -> bool:
    # min t  s.t.  |g beta - r| <= t elementwise,  beta in [-1, 1]^p
    n, p = g.shape
    c = np.zeros(p + 1)
    c[-1] = 1.0
    a_ub = np.block([[g, -np.ones((n, 1))], [-g, -np.ones((n, 1))]])
    b_ub = np.concatenate([r, -r])
    bounds = [(-1.0, 1.0)] * p + [(0.0, None)]
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
    return bool(res.success and res.fun <= tol)


def zono_intersect_test(
    x: Zonotope, y: Zonotope, tol: float = MEMBERSHIP_TOL
) -> bool:
    """True iff the zonotopes intersect (up to the halfspace tolerance).

    X and Y intersect iff Y's center lies in X buffered by Y's generators;
    the buffered set's generators get fresh labels so unrelated coefficients
    never alias.
    """
    if x.dim != y.dim or x.dim != 3:
        raise ValueError("intersection test requires matching dim 3")
    taken = set(x.ids) | set(y.ids)
    fresh = [_DEFAULT_ALLOCATOR.fresh_avoiding(taken) for _ in range(y.n_gens)]
    buffered = Zonotope(
        x.center, np.concatenate([x.gens, y.gens], axis=0), x.ids + tuple(fresh)
    )
    rep = halfspace_rep(buffered)
    return bool(rep.max_violation(y.center[None, :])[0] <= tol)


def support_function(z, direction: np.ndarray) -> float:
    """d.c + sum_i |d.gi| for a unit direction d.

    For a PolyZonotope this is the support of its zonotope relaxation
    (generators treated as independent), which upper-bounds the true set.
    """
    d = np.asarray(direction, dtype=float)
    if abs(np.linalg.norm(d) - 1.0) > 1e-9:
        raise ValueError("direction must be a unit vector")
    return float(d @ z.center + np.abs(z.gens @ d).sum())


def sample_points(z, n: int, rng: np.random.Generator) -> np.ndarray:
    """Sample points of the set respecting factor semantics.

    One value per distinct factor id is drawn uniformly from [-1, 1]; each
    generator's coefficient is the product of its factors' values (once per
    occurrence).
    """
    if isinstance(z, Zonotope):
        factors = tuple((fid,) for fid in z.ids)
    else:
        factors = z.factors
    distinct = sorted({fid for f in factors for fid in f}, key=lambda f: f.sort_key)
    index = {fid: k for k, fid in enumerate(distinct)}
    vals = rng.uniform(-1.0, 1.0, size=(n, len(distinct)))
    coeffs = np.ones((n, len(factors)))
    for gi, f in enumerate(factors):
        for fid in f:
            coeffs[:, gi] *= vals[:, index[fid]]
    if len(factors) == 0:
        return np.tile(z.center, (n, 1))
    return z.center + coeffs @ z.gens


def set_to_json(z) -> str:
    """Debug dump of any set as JSON (center, generators, factor ids)."""
    return json.dumps(z.to_json_dict())
