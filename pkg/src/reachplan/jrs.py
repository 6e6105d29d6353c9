"""Offline per-joint reachable sets over the plan time partition.

For one joint and one decision box, each time interval gets a 4-D zonotope in
(cos q, sin q, k_v, k_a) coordinates enclosing every parameterized trajectory
of that joint.  Because q(t; k) is exactly affine in k at fixed t, a
first-order expansion in k around the interval midpoint with an interval
remainder gives the enclosure in closed form; the remainder is absorbed by
two axis-aligned error generators in the cos/sin plane.

Every zonotope keeps the same layout: generator 0 is the only one with a
nonzero k_v entry (equal to the k_v halfwidth), generator 1 the only one with
a nonzero k_a entry, generators 2 and 3 are the error box.  Slicing the
velocity coefficient therefore folds exactly one generator into the center.

A bank is an array of such sequences tiling the joint speed range; banks are
joint-agnostic and relabeled per joint at composition time.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .sets import Zonotope, acc_id, contains_points, generic_id, vel_id
from .trajectories import JointParamBox, TimingConfig, build_param_box, position_coeffs

BANK_FORMAT_VERSION = "1"

VEL_GEN = 0  # generator index carrying the k_v coefficient
ACC_GEN = 1  # generator index carrying the k_a coefficient


@dataclass(frozen=True)
class JRSSequence:
    """Zonotope per time interval for one joint decision box."""

    timing: TimingConfig
    box: JointParamBox
    zonos: tuple[Zonotope, ...]

    def zono_at(self, t: float) -> Zonotope:
        n = min(int(t / self.timing.dt), self.timing.n_steps - 1)
        return self.zonos[n]


@dataclass(frozen=True)
class JRSBank:
    """Sequences tiling [-dq_lim, dq_lim] with equal velocity intervals."""

    timing: TimingConfig
    n_jrs: int
    dq_lim: float
    ddq_lim: float
    r_a1: float
    r_a2: float
    sequences: tuple[JRSSequence, ...]

    @property
    def interval_width(self) -> float:
        return 2.0 * self.dq_lim / self.n_jrs


@dataclass(frozen=True)
class ContainmentReport:
    violations: int
    max_margin: float
    n_samples: int


def _interval_product(alo, ahi, klo, khi):
    """Elementwise interval product bounds for [alo,ahi] * [klo,khi]."""
    corners = np.stack([alo * klo, alo * khi, ahi * klo, ahi * khi])
    return corners.min(axis=0), corners.max(axis=0)


def compute_jrs(box: JointParamBox, timing: TimingConfig) -> JRSSequence:
    """Build the zonotope sequence for one joint decision box.

    For each interval with midpoint t_c and mean decision values
    (kv_c, ka_c), the center is (cos qbar, sin qbar, kv_c, ka_c) with
    qbar = a_v(t_c) kv_c + a_a(t_c) ka_c.  The two decision generators carry
    the first-order cos/sin sensitivities; the error radius
    eps = eta + delta^2 / 2 bounds the within-interval coefficient drift
    (eta) plus the second-order trig remainder (delta is the largest
    |q - qbar| over the cell, from interval evaluation of the monotone
    coefficient forms).
    """
    n = timing.n_steps
    edges = np.arange(n + 1) * timing.dt
    t_lo, t_hi = edges[:-1], edges[1:]
    t_c = 0.5 * (t_lo + t_hi)

    av_lo, aa_lo = position_coeffs(t_lo, timing)
    av_hi, aa_hi = position_coeffs(t_hi, timing)
    av_c, aa_c = position_coeffs(t_c, timing)

    kv_c, dkv = box.kv_center, box.kv_halfwidth
    ka_c, dka = box.ka_center, box.ka_halfwidth

    q_bar = av_c * kv_c + aa_c * ka_c
    cos_q, sin_q = np.cos(q_bar), np.sin(q_bar)

    # coefficient drift inside the interval, against the worst |k|
    eta = np.maximum(np.abs(av_lo - av_c), np.abs(av_hi - av_c)) * (
        abs(kv_c) + dkv
    ) + np.maximum(np.abs(aa_lo - aa_c), np.abs(aa_hi - aa_c)) * (abs(ka_c) + dka)

    # interval range of q over the cell (coefficients are non-decreasing)
    v_lo, v_hi = _interval_product(av_lo, av_hi, kv_c - dkv, kv_c + dkv)
    a_lo, a_hi = _interval_product(aa_lo, aa_hi, ka_c - dka, ka_c + dka)
    q_lo, q_hi = v_lo + a_lo, v_hi + a_hi
    delta = np.maximum(q_bar - q_lo, q_hi - q_bar)

    eps = eta + 0.5 * delta**2

    ids = (vel_id(0), acc_id(0))
    zonos = []
    for i in range(n):
        gens = np.array(
            [
                [-sin_q[i] * av_c[i] * dkv, cos_q[i] * av_c[i] * dkv, dkv, 0.0],
                [-sin_q[i] * aa_c[i] * dka, cos_q[i] * aa_c[i] * dka, 0.0, dka],
                [eps[i], 0.0, 0.0, 0.0],
                [0.0, eps[i], 0.0, 0.0],
            ]
        )
        center = np.array([cos_q[i], sin_q[i], kv_c, ka_c])
        zonos.append(
            Zonotope(center, gens, ids + (generic_id(2 * i), generic_id(2 * i + 1)))
        )
    return JRSSequence(timing=timing, box=box, zonos=tuple(zonos))


def validate_containment(
    seq: JRSSequence, n_samples: int, rng_seed: int
) -> ContainmentReport:
    """Monte Carlo containment check of the sequence.

    Samples (t, k) uniformly over the horizon and the decision box and checks
    that (cos q, sin q, k_v, k_a) lies in the covering zonotope.  The margin
    is the worst coefficient excess max|beta| - 1 (negative means strictly
    inside); a violation is any margin above floating-point slack.
    """
    rng = np.random.default_rng(rng_seed)
    timing, box = seq.timing, seq.box
    t = rng.uniform(0.0, timing.t_f, size=n_samples)
    k_v = rng.uniform(box.kv_center - box.kv_halfwidth, box.kv_center + box.kv_halfwidth, n_samples)
    k_a = rng.uniform(box.ka_center - box.ka_halfwidth, box.ka_center + box.ka_halfwidth, n_samples)
    a_v, a_a = position_coeffs(t, timing)
    q = a_v * k_v + a_a * k_a
    pts = np.stack([np.cos(q), np.sin(q), k_v, k_a], axis=1)
    idx = np.minimum((t / timing.dt).astype(int), timing.n_steps - 1)

    violations = 0
    max_margin = -np.inf
    for n in np.unique(idx):
        sel = idx == n
        z = seq.zonos[n]
        margins = _coefficient_margins(z, pts[sel])
        max_margin = max(max_margin, float(margins.max()))
        bad = margins > 1e-9
        if np.any(bad):
            # confirm against the exact feasibility program before counting
            confirmed = ~contains_points(z, pts[sel][bad])
            violations += int(confirmed.sum())
    return ContainmentReport(
        violations=violations, max_margin=float(max_margin), n_samples=n_samples
    )


def _coefficient_margins(z: Zonotope, pts: np.ndarray) -> np.ndarray:
    """max|beta| - 1 per point when the generator system is square.

    Falls back to 0/1 margins from the feasibility program otherwise.
    """
    nz = ~np.all(z.gens == 0.0, axis=1)
    g = z.gens[nz].T
    r = pts - z.center
    if g.shape[1] == g.shape[0]:
        try:
            beta = np.linalg.solve(g, r.T)
            return np.max(np.abs(beta), axis=0) - 1.0
        except np.linalg.LinAlgError:
            pass
    inside = contains_points(z, pts)
    return np.where(inside, -1.0, 1.0)


def build_bank(
    n_jrs: int,
    dq_lim: float,
    ddq_lim: float,
    r_a1: float,
    r_a2: float,
    timing: TimingConfig,
    ka_center: float = 0.0,
    validation_samples: int = 2000,
    validation_seed: int = 0,
) -> JRSBank:
    """Partition the speed range, build and validate every sequence.

    Fails hard (naming the offending interval) if any sequence fails its
    build-time containment check.
    """
    if n_jrs < 1:
        raise ValueError("n_jrs must be >= 1")
    width = 2.0 * dq_lim / n_jrs
    sequences = []
    for j in range(n_jrs):
        kv_center = -dq_lim + (j + 0.5) * width
        box = build_param_box(kv_center, 0.5 * width, ddq_lim, r_a1, r_a2, ka_center)
        seq = compute_jrs(box, timing)
        if validation_samples > 0:
            report = validate_containment(seq, validation_samples, validation_seed + j)
            if report.violations > 0:
                raise RuntimeError(
                    f"containment violated for velocity interval {j} "
                    f"(center {kv_center:.6g}): {report.violations} of "
                    f"{report.n_samples} samples escaped"
                )
        sequences.append(seq)
    return JRSBank(
        timing=timing,
        n_jrs=n_jrs,
        dq_lim=dq_lim,
        ddq_lim=ddq_lim,
        r_a1=r_a1,
        r_a2=r_a2,
        sequences=tuple(sequences),
    )


def select_jrs(bank: JRSBank, dq0_i: float) -> JRSSequence:
    """Sequence whose velocity interval contains dq0_i (boundary -> lower)."""
    if abs(dq0_i) > bank.dq_lim:
        raise ValueError(f"initial speed {dq0_i} outside [-{bank.dq_lim}, {bank.dq_lim}]")
    x = (dq0_i + bank.dq_lim) / bank.interval_width
    idx = min(max(math.ceil(x) - 1, 0), bank.n_jrs - 1)
    return bank.sequences[idx]


# ---------------------------------------------------------------------------
# serialization


def bank_to_json_dict(bank: JRSBank) -> dict:
    return {
        "version": BANK_FORMAT_VERSION,
        "timing": {
            "t_plan": bank.timing.t_plan,
            "t_f": bank.timing.t_f,
            "dt": bank.timing.dt,
        },
        "n_JRS": bank.n_jrs,
        "dq_lim": bank.dq_lim,
        "hyperparams": {
            "ddq_lim": bank.ddq_lim,
            "r_a1": bank.r_a1,
            "r_a2": bank.r_a2,
        },
        "sequences": [
            {
                "kv_center": seq.box.kv_center,
                "kv_halfwidth": seq.box.kv_halfwidth,
                "ka_center": seq.box.ka_center,
                "ka_halfwidth": seq.box.ka_halfwidth,
                "zonos": [z.to_json_dict() for z in seq.zonos],
            }
            for seq in bank.sequences
        ],
    }


def save_bank(bank: JRSBank, path: str) -> None:
    """Write the bank as versioned JSON; floats round-trip bit-exactly."""
    with open(path, "w") as f:
        json.dump(bank_to_json_dict(bank), f)


def load_bank(path: str) -> JRSBank:
    with open(path) as f:
        data = json.load(f)
    return bank_from_json_dict(data)


def bank_from_json_dict(data: dict) -> JRSBank:
    version = data.get("version")
    if version != BANK_FORMAT_VERSION:
        raise ValueError(
            f"unsupported bank format version {version!r}, "
            f"expected {BANK_FORMAT_VERSION!r}"
        )
    timing = TimingConfig(**data["timing"])
    sequences = []
    for s in data["sequences"]:
        box = JointParamBox(
            kv_center=s["kv_center"],
            kv_halfwidth=s["kv_halfwidth"],
            ka_center=s["ka_center"],
            ka_halfwidth=s["ka_halfwidth"],
        )
        zonos = tuple(Zonotope.from_json_dict(z) for z in s["zonos"])
        sequences.append(JRSSequence(timing=timing, box=box, zonos=zonos))
    hp = data["hyperparams"]
    return JRSBank(
        timing=timing,
        n_jrs=data["n_JRS"],
        dq_lim=data["dq_lim"],
        ddq_lim=hp["ddq_lim"],
        r_a1=hp["r_a1"],
        r_a2=hp["r_a2"],
        sequences=tuple(sequences),
    )
