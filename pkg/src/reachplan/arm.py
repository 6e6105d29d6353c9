"""Kinematic arm description and exact forward occupancy.

Joints are single-axis revolute, chained from the base; joint 1 sits at the
origin.  Each joint stores its rotation axis (in the predecessor link frame),
the displacement to the next joint, position/speed limits, and a zonotope
bounding the link volume in the link frame.  Link volumes double as the
conservative geometry for reachable-set composition, while a capsule
(segment + radius) per link feeds the independent collision oracle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .sets import Zonotope, contains_point, generic_id, linear_map

#: uid base for link-volume generator labels; keeps arm geometry ids out of
#: the ranges used by composition and obstacles.
_LINK_UID_BASE = 2_000_000_000


@dataclass(frozen=True)
class JointSpec:
    axis: np.ndarray          # unit rotation axis, predecessor-link frame
    displacement: np.ndarray  # joint->next-joint offset, link frame (m)
    q_min: float
    q_max: float
    dq_lim: float
    link: Zonotope            # link volume, link frame (m)
    capsule_length: float
    capsule_radius: float

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float)
        disp = np.asarray(self.displacement, dtype=float)
        if abs(np.linalg.norm(axis) - 1.0) > 1e-12:
            raise ValueError("joint axis must be a unit vector")
        if self.q_min > self.q_max:
            raise ValueError("q_min must not exceed q_max")
        axis.flags.writeable = False
        disp.flags.writeable = False
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "displacement", disp)


@dataclass(frozen=True)
class ArmModel:
    name: str
    joints: tuple[JointSpec, ...]
    self_pairs: tuple[tuple[int, int], ...]  # 0-based link index pairs, j >= i+2

    def __post_init__(self):
        for i, j in self.self_pairs:
            if not (0 <= i < j < self.n_q and j >= i + 2):
                raise ValueError(f"invalid self-intersection pair ({i}, {j})")

    @property
    def n_q(self) -> int:
        return len(self.joints)

    @property
    def q_min(self) -> np.ndarray:
        return np.array([j.q_min for j in self.joints])

    @property
    def q_max(self) -> np.ndarray:
        return np.array([j.q_max for j in self.joints])

    @property
    def dq_lim(self) -> np.ndarray:
        return np.array([j.dq_lim for j in self.joints])

    def reach(self) -> float:
        """Radius of a ball around the base containing every configuration."""
        r, run = 0.0, 0.0
        for j in self.joints:
            r = max(r, run + j.capsule_length + j.capsule_radius)
            run += float(np.linalg.norm(j.displacement))
        return r


def skew(u: np.ndarray) -> np.ndarray:
    return np.array(
        [[0.0, -u[2], u[1]], [u[2], 0.0, -u[0]], [-u[1], u[0], 0.0]]
    )


def rotation_matrix(axis: np.ndarray, q: float) -> np.ndarray:
    """Rodrigues rotation about a fixed unit axis.

    R = I + sin(q) [u]x + (1 - cos(q)) [u]x^2, affine in (cos q, sin q),
    which the matrix-zonotope construction relies on.
    """
    axis = np.asarray(axis, dtype=float)
    if abs(np.linalg.norm(axis) - 1.0) > 1e-12:
        raise ValueError("axis must be a unit vector")
    k = skew(axis)
    return np.eye(3) + np.sin(q) * k + (1.0 - np.cos(q)) * (k @ k)


def joint_positions(arm: ArmModel, q: np.ndarray) -> np.ndarray:
    """(n_q, 3) joint positions; joint 1 sits at the origin."""
    q = np.asarray(q, dtype=float)
    if q.shape != (arm.n_q,):
        raise ValueError(f"expected {arm.n_q} joint values, got {q.shape}")
    pos = np.zeros((arm.n_q, 3))
    r_acc = np.eye(3)
    p = np.zeros(3)
    for i, joint in enumerate(arm.joints):
        r_acc = r_acc @ rotation_matrix(joint.axis, q[i])
        pos[i] = p
        p = p + r_acc @ joint.displacement
    return pos


def forward_occupancy(arm: ArmModel, q: np.ndarray) -> list[Zonotope]:
    """Workspace volume of each link at configuration q, as zonotopes."""
    q = np.asarray(q, dtype=float)
    if q.shape != (arm.n_q,):
        raise ValueError(f"expected {arm.n_q} joint values, got {q.shape}")
    out = []
    r_acc = np.eye(3)
    p = np.zeros(3)
    for i, joint in enumerate(arm.joints):
        r_acc = r_acc @ rotation_matrix(joint.axis, q[i])
        vol = linear_map(r_acc, joint.link)
        out.append(Zonotope(vol.center + p, vol.gens, vol.ids))
        p = p + r_acc @ joint.displacement
    return out


def capsule_zonotope(length: float, radius: float, link_index: int) -> Zonotope:
    """Smallest box zonotope containing an x-aligned capsule."""
    center = np.array([0.5 * length, 0.0, 0.0])
    half = np.array([0.5 * length + radius, radius, radius])
    ids = [generic_id(_LINK_UID_BASE + 10 * link_index + k) for k in range(3)]
    return Zonotope.box(center, half, ids)


def _capsule_sample_points(length: float, radius: float, n: int = 48) -> np.ndarray:
    """Points on the capsule surface (both caps plus the cylinder wall)."""
    rng = np.random.default_rng(12345)
    dirs = rng.normal(size=(n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    caps = np.concatenate(
        [dirs * radius, dirs * radius + np.array([length, 0.0, 0.0])]
    )
    s = rng.uniform(0.0, length, size=n)
    phi = rng.uniform(0.0, 2 * np.pi, size=n)
    wall = np.stack([s, radius * np.cos(phi), radius * np.sin(phi)], axis=1)
    return np.concatenate([caps, wall])


def arm_from_json_dict(data: dict, name: str = "arm") -> ArmModel:
    joints = []
    for i, jd in enumerate(data["joints"]):
        capsule = jd["capsule"]
        length, radius = float(capsule["length"]), float(capsule["radius"])
        if "link_zonotope" in jd:
            link = Zonotope.from_json_dict(jd["link_zonotope"])
            for p in _capsule_sample_points(length, radius):
                if not contains_point(link, p, tol=1e-9):
                    raise ValueError(
                        f"link volume of joint {i} does not contain its capsule"
                    )
        else:
            link = capsule_zonotope(length, radius, i)
        joints.append(
            JointSpec(
                axis=np.asarray(jd["axis"], dtype=float),
                displacement=np.asarray(jd["displacement"], dtype=float),
                q_min=float(jd["q_min"]) if jd.get("q_min") is not None else -np.inf,
                q_max=float(jd["q_max"]) if jd.get("q_max") is not None else np.inf,
                dq_lim=float(jd["dq_lim"]),
                link=link,
                capsule_length=length,
                capsule_radius=radius,
            )
        )
    if len(joints) != int(data["n_q"]):
        raise ValueError("n_q does not match the joint list")
    pairs = tuple(tuple(p) for p in data.get("self_pairs", []))
    return ArmModel(name=name, joints=tuple(joints), self_pairs=pairs)


def load_arm(source: str) -> ArmModel:
    """Load an arm from a bundled name ('planar2', 'spatial3') or a path."""
    bundle = resources.files("reachplan").joinpath(f"data/arms/{source}.json")
    if bundle.is_file():
        data = json.loads(bundle.read_text())
        return arm_from_json_dict(data, name=source)
    with open(source) as f:
        data = json.load(f)
    return arm_from_json_dict(data, name=source)
