"""Seeded parameter sampling for the extreme-profile synthetic dataset.

Every record is a pure function of ``(spec, id)``: the per-sample seed is
derived by hashing ``(base_seed, id)`` with :class:`numpy.random.SeedSequence`
and drives a counter-based Philox generator, so records can be drawn in any
order or in parallel.

Pose layout produced for an asset with ``J`` joints (``3 * J`` scalars)::

    global rotation  = log( R_rest @ R_y(yaw) )   yaw applied first, about +y
    R_rest           = exp([p0, 0, p1])           two non-yaw global scalars
    joint j >= 1     = [p(2+3(j-1)) .. p(4+3(j-1))]

where ``p`` are the non-yaw pose scalars drawn from the truncated Gaussian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import defaults
from .model import PoseParams, canonical_axis_angle, rodrigues, rotation_to_axis_angle

YAW_COMPOSITION = (
    "global_rotation = log(R_rest @ R_y(yaw)); yaw about model +y is applied to the "
    "vertices before the remaining global components R_rest = exp([p0, 0, p1])"
)
SPLITS = ("train", "val", "test")
_MAX_REJECTION_ROUNDS = 64


class SamplingError(RuntimeError):
    pass


@dataclass(frozen=True)
class SampleSpec:
    sigma: float = defaults.SAMPLE_SIGMA
    clip: float = defaults.SAMPLE_CLIP
    yaw_min: float = defaults.YAW_RANGE_DEG[0]
    yaw_max: float = defaults.YAW_RANGE_DEG[1]
    shape_dim: int = defaults.SHAPE_DIM
    pose_dim: int = defaults.NON_YAW_POSE_DIM
    base_seed: int = defaults.TRAINING_SEED

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        if not self.clip > 0:
            raise ValueError("clip must be > 0")
        if not self.yaw_min < self.yaw_max:
            raise ValueError("yaw_min must be < yaw_max")
        if self.shape_dim < 1 or self.pose_dim < 2 or (self.pose_dim - 2) % 3:
            raise ValueError("shape_dim >= 1 and pose_dim = 2 + 3 * (joints - 1) required")

    @property
    def n_joints(self) -> int:
        return 1 + (self.pose_dim - 2) // 3

    def to_dict(self) -> dict:
        return {"sigma": self.sigma, "clip": self.clip, "yaw_min": self.yaw_min,
                "yaw_max": self.yaw_max, "shape_dim": self.shape_dim,
                "pose_dim": self.pose_dim, "base_seed": self.base_seed}

    @classmethod
    def for_joints(cls, n_joints: int, **kw) -> "SampleSpec":
        return cls(pose_dim=2 + 3 * (n_joints - 1), **kw)


@dataclass(frozen=True, eq=False)
class SampleRecord:
    id: int
    seed: int
    beta: np.ndarray
    theta: PoseParams
    yaw_deg: float
    split: str
    pose_scalars: np.ndarray  # the raw non-yaw draws, kept for auditing

    def to_dict(self) -> dict:
        return {
            "id": self.id, "seed": self.seed, "split": self.split,
            "yaw_deg": self.yaw_deg,
            "beta": [float(x) for x in self.beta],
            "theta": [float(x) for x in self.theta.as_vector()],
            "pose_scalars": [float(x) for x in self.pose_scalars],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SampleRecord":
        return cls(
            id=int(d["id"]), seed=int(d["seed"]), split=d.get("split", "train"),
            yaw_deg=float(d["yaw_deg"]),
            beta=np.asarray(d["beta"], dtype=np.float64),
            theta=PoseParams.from_vector(d["theta"]),
            pose_scalars=np.asarray(d.get("pose_scalars", []), dtype=np.float64),
        )


def sample_seed(base_seed: int, sample_id: int) -> int:
    """63-bit per-sample seed hashed from (base_seed, id)."""
    state = np.random.SeedSequence([int(base_seed), int(sample_id)]).generate_state(2, np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1])) & ((1 << 63) - 1)


def generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed))


def truncated_normal(rng: np.random.Generator, size: int, sigma: float, clip: float) -> np.ndarray:
    """N(0, sigma^2) restricted to [-clip, clip] by rejection (no clamping)."""
    out = np.empty(size)
    filled = 0
    for _ in range(_MAX_REJECTION_ROUNDS):
        if filled == size:
            return out
        need = size - filled
        draw = sigma * rng.standard_normal(need + need // 8 + 4)
        draw = draw[np.abs(draw) <= clip][:need]
        out[filled:filled + len(draw)] = draw
        filled += len(draw)
    if filled == size:
        return out
    raise SamplingError(
        f"rejection sampling gave up after {_MAX_REJECTION_ROUNDS} rounds "
        f"(clip/sigma = {clip / sigma:.3g})")


def truncated_normal_std(sigma: float, clip: float) -> float:
    """Closed-form standard deviation of N(0, sigma^2) truncated to [-clip, clip]."""
    a = clip / sigma
    pdf = math.exp(-0.5 * a * a) / math.sqrt(2.0 * math.pi)
    mass = math.erf(a / math.sqrt(2.0))
    return sigma * math.sqrt(1.0 - 2.0 * a * pdf / mass)


def compose_global(yaw_deg: float, rest: np.ndarray) -> np.ndarray:
    r_yaw = rodrigues(np.array([0.0, math.radians(yaw_deg), 0.0]))
    r_rest = rodrigues(np.array([rest[0], 0.0, rest[1]]))
    return rotation_to_axis_angle(r_rest @ r_yaw)


def assign_split(sample_id: int, sizes=defaults.SPLIT_SIZES) -> str:
    """Contiguous id ranges: first train, then val, then test."""
    total = int(sum(sizes))
    if not 0 <= sample_id < total:
        raise IndexError(f"sample id {sample_id} outside [0, {total})")
    if sample_id < sizes[0]:
        return "train"
    if sample_id < sizes[0] + sizes[1]:
        return "val"
    return "test"


def split_sizes(count: int, proportions=defaults.SPLIT_PROPORTIONS) -> tuple[int, int, int]:
    """Scale the split proportions to `count` samples."""
    train = int(round(proportions[0] * count))
    val = int(round(proportions[1] * count))
    val = min(val, count - train)
    return train, val, count - train - val


def sample_record(spec: SampleSpec, sample_id: int, sizes=None) -> SampleRecord:
    seed = sample_seed(spec.base_seed, sample_id)
    rng = generator(seed)
    beta = truncated_normal(rng, spec.shape_dim, spec.sigma, spec.clip)
    yaw = float(rng.uniform(spec.yaw_min, spec.yaw_max))
    scalars = truncated_normal(rng, spec.pose_dim, spec.sigma, spec.clip)
    glob = compose_global(yaw, scalars[:2])
    joints = canonical_axis_angle(scalars[2:].reshape(-1, 3))
    split = assign_split(sample_id, sizes) if sizes is not None else "train"
    return SampleRecord(sample_id, seed, beta, PoseParams(glob, joints), yaw, split, scalars)


def yaw_of(theta: PoseParams) -> float:
    """Yaw (degrees) of the global rotation: heading of the rotated +z axis about +y."""
    fwd = rodrigues(theta.global_rotation) @ np.array([0.0, 0.0, 1.0])
    return math.degrees(math.atan2(fwd[0], fwd[2]))
