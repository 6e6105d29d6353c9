"""Scene description, random scene generation, and bundled scene files.

Obstacles are axis-aligned boxes stored as raw (center, half-extents) rows so
the collision oracle never touches the set-arithmetic kernel; the constraint
side converts them to labeled box zonotopes on demand.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .arm import ArmModel
from .oracle import configuration_collides, point_box_distance
from .sets import Zonotope, generic_id

#: uid base for obstacle generator labels (distinct per obstacle and axis).
_OBSTACLE_UID_BASE = 1_000_000_000

#: centers of random obstacles keep this clearance from the arm's base (m)
BASE_CLEARANCE = 0.1

#: random obstacle side lengths are uniform in this range (m)
SIDE_RANGE = (0.01, 0.5)

MAX_REJECTIONS = 10_000


@dataclass(frozen=True)
class Scene:
    name: str
    arm_name: str
    obstacles: np.ndarray  # (n_O, 6): center xyz, half-extent xyz
    q_start: np.ndarray
    q_goal: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        obs = np.asarray(self.obstacles, dtype=float).reshape(-1, 6)
        obs.flags.writeable = False
        object.__setattr__(self, "obstacles", obs)
        for attr in ("q_start", "q_goal"):
            a = np.asarray(getattr(self, attr), dtype=float)
            a.flags.writeable = False
            object.__setattr__(self, attr, a)

    @property
    def n_obstacles(self) -> int:
        return self.obstacles.shape[0]

    def obstacle_zonotopes(self) -> list[Zonotope]:
        out = []
        for idx, row in enumerate(self.obstacles):
            ids = [
                generic_id(_OBSTACLE_UID_BASE + 10 * idx + k) for k in range(3)
            ]
            out.append(Zonotope.box(row[:3], row[3:], ids))
        return out

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "arm": self.arm_name,
            "seed": self.seed,
            "obstacles": [
                {"center": row[:3].tolist(), "half_extents": row[3:].tolist()}
                for row in self.obstacles
            ],
            "q_start": self.q_start.tolist(),
            "q_goal": self.q_goal.tolist(),
        }


def scene_from_json_dict(data: dict, name: str = "scene") -> Scene:
    rows = [
        np.concatenate([np.asarray(o["center"], dtype=float), np.asarray(o["half_extents"], dtype=float)])
        for o in data.get("obstacles", [])
    ]
    return Scene(
        name=data.get("name", name),
        arm_name=data["arm"],
        obstacles=np.asarray(rows).reshape(-1, 6),
        q_start=np.asarray(data["q_start"], dtype=float),
        q_goal=np.asarray(data["q_goal"], dtype=float),
        seed=data.get("seed"),
    )


def save_scene(scene: Scene, path: str) -> None:
    with open(path, "w") as f:
        json.dump(scene.to_json_dict(), f, indent=2)


def load_scene(source: str) -> Scene:
    """Load a scene from a bundled name or a file path."""
    bundle = resources.files("reachplan").joinpath(f"data/scenes/{source}.json")
    if bundle.is_file():
        return scene_from_json_dict(json.loads(bundle.read_text()), name=source)
    with open(source) as f:
        return scene_from_json_dict(json.load(f), name=source)


def bundled_scene_names() -> list[str]:
    files = resources.files("reachplan").joinpath("data/scenes")
    return sorted(p.name[: -len(".json")] for p in files.iterdir() if p.name.endswith(".json"))


def _sample_collision_free_config(
    arm: ArmModel, obstacles: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    lo = np.maximum(arm.q_min, -np.pi)
    hi = np.minimum(arm.q_max, np.pi)
    for _ in range(MAX_REJECTIONS):
        q = rng.uniform(lo, hi)
        if not configuration_collides(arm, q, obstacles):
            return q
    raise RuntimeError(
        "could not sample a collision-free configuration; scene too cluttered"
    )


def generate_random_scene(arm: ArmModel, n_obstacles: int, seed: int) -> Scene:
    """Random boxes in the reach sphere plus collision-free start and goal.

    Deterministic in (arm, n_obstacles, seed).  Obstacle centers are uniform
    in the reach sphere excluding a small clearance ball around the base;
    side lengths are uniform per axis.
    """
    if n_obstacles < 0:
        raise ValueError("n_obstacles must be >= 0")
    rng = np.random.default_rng(seed)
    reach = arm.reach()
    rows = []
    while len(rows) < n_obstacles:
        center = rng.uniform(-reach, reach, size=3)
        r = np.linalg.norm(center)
        if r > reach or r < BASE_CLEARANCE:
            continue
        half = 0.5 * rng.uniform(SIDE_RANGE[0], SIDE_RANGE[1], size=3)
        # the whole box, not just its center, must clear the base; a box
        # swallowing the first joint would leave no valid configuration
        if point_box_distance(np.zeros(3), center, half) < BASE_CLEARANCE:
            continue
        rows.append(np.concatenate([center, half]))
    obstacles = np.asarray(rows).reshape(-1, 6)
    q_start = _sample_collision_free_config(arm, obstacles, rng)
    q_goal = _sample_collision_free_config(arm, obstacles, rng)
    return Scene(
        name=f"random-{arm.name}-n{n_obstacles}-s{seed}",
        arm_name=arm.name,
        obstacles=obstacles,
        q_start=q_start,
        q_goal=q_goal,
        seed=seed,
    )
