"""BEV-space paste augmentation and its parameter samplers.

Pasting adds one frame's pooled semantic-aware grid onto another's and
unions their detection targets; because pooling is additive over disjoint
point sets, this equals pooling the union of both frames' virtual points.
To avoid duplicating data, the pasted frame first gets an extra geometric
augmentation (scale/flip/rotate about the ego origin) applied to its
virtual points and ground truth, never to the pooled grid itself: moving
points before pooling needs no resampling and stays exact.

Transform composition order is fixed as scale -> flip -> rotate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Boxes3D
from .pooling import VirtualPoints

__all__ = [
    "BdaParams",
    "ImageAugParams",
    "PastePlan",
    "BDA_SCALE_RANGE",
    "BDA_ROTATION_RANGE",
    "IMAGE_SCALE_RANGE",
    "IMAGE_ROTATION_RANGE",
    "sample_bda",
    "sample_image_aug",
    "apply_bda_points",
    "apply_bda_boxes",
    "sample_paste_plan",
    "bev_paste",
]

BDA_SCALE_RANGE = (0.95, 1.05)
BDA_ROTATION_RANGE = (-np.pi / 8.0, np.pi / 8.0)   # +/- 22.5 degrees
IMAGE_SCALE_RANGE = (0.94, 1.11)
IMAGE_ROTATION_RANGE = (-np.deg2rad(5.4), np.deg2rad(5.4))
FLIP_PROBABILITY = 0.5


@dataclass(frozen=True)
class BdaParams:
    """One draw of BEV-space augmentation: uniform scale, axis flips, and
    rotation about the ego z axis.

    The sampler stays inside the documented ranges; the transform itself
    accepts any values (tests use e.g. 90-degree rotations).
    """

    scale: float = 1.0
    flip_x: bool = False
    flip_y: bool = False
    rotation: float = 0.0

    @classmethod
    def identity(cls) -> "BdaParams":
        return cls()


@dataclass(frozen=True)
class ImageAugParams:
    """One draw of image-space augmentation parameters.

    Only the sampler lives here: this package has no real pixels, so the
    params would be composed into the projection (scaled intrinsics,
    shifted principal point) by a consumer rather than applied to images.
    """

    scale: float = 1.0
    rotation: float = 0.0
    flip: bool = False
    crop_u: int = 0
    crop_v: int = 0


def sample_bda(rng: np.random.Generator) -> BdaParams:
    """Draw BDA params: scale ~ U[0.95, 1.05], rotation ~ U[-22.5deg,
    22.5deg], independent 0.5-probability x/y flips. Deterministic under a
    seeded generator (fixed draw order: scale, rotation, flip_x, flip_y)."""
    scale = float(rng.uniform(*BDA_SCALE_RANGE))
    rotation = float(rng.uniform(*BDA_ROTATION_RANGE))
    flip_x = bool(rng.random() < FLIP_PROBABILITY)
    flip_y = bool(rng.random() < FLIP_PROBABILITY)
    return BdaParams(scale=scale, flip_x=flip_x, flip_y=flip_y, rotation=rotation)


def sample_image_aug(rng: np.random.Generator, max_crop=(0, 0)) -> ImageAugParams:
    """Draw image-aug params: scale ~ U[0.94, 1.11], rotation ~ U[-5.4deg,
    5.4deg], 0.5-probability horizontal flip, integer crop offsets uniform
    in [0, max_crop]."""
    scale = float(rng.uniform(*IMAGE_SCALE_RANGE))
    rotation = float(rng.uniform(*IMAGE_ROTATION_RANGE))
    flip = bool(rng.random() < FLIP_PROBABILITY)
    crop_u = int(rng.integers(0, int(max_crop[0]) + 1))
    crop_v = int(rng.integers(0, int(max_crop[1]) + 1))
    return ImageAugParams(scale=scale, rotation=rotation, flip=flip,
                          crop_u=crop_u, crop_v=crop_v)


def _transform_xyz(xyz: np.ndarray, p: BdaParams) -> np.ndarray:
    """Scale -> flip -> rotate about the ego origin in the XY plane; z is
    scaled only."""
    out = np.asarray(xyz, dtype=np.float64).reshape(-1, 3) * p.scale
    if p.flip_x:
        out[:, 0] = -out[:, 0]
    if p.flip_y:
        out[:, 1] = -out[:, 1]
    c, s = np.cos(p.rotation), np.sin(p.rotation)
    x = c * out[:, 0] - s * out[:, 1]
    y = s * out[:, 0] + c * out[:, 1]
    out[:, 0] = x
    out[:, 1] = y
    return out


def apply_bda_points(points: VirtualPoints, p: BdaParams) -> VirtualPoints:
    """Transform virtual-point positions; scores and features unchanged."""
    return points.with_positions(_transform_xyz(points.positions, p))


def _wrap_angle(a: np.ndarray) -> np.ndarray:
    """Wrap angles to (-pi, pi]; values already in range pass through
    untouched so identity transforms stay exact."""
    arr = np.asarray(a, dtype=np.float64)
    outside = (arr > np.pi) | (arr <= -np.pi)
    wrapped = np.mod(arr + np.pi, 2.0 * np.pi) - np.pi
    wrapped = np.where(wrapped == -np.pi, np.pi, wrapped)
    return np.where(outside, wrapped, arr)


def apply_bda_boxes(targets: Boxes3D, p: BdaParams) -> Boxes3D:
    """Transform boxes exactly like points: centers via the point
    transform, sizes scaled, yaw flipped/rotated and wrapped to (-pi, pi]."""
    yaw = targets.yaws.copy()
    if p.flip_x:
        yaw = np.pi - yaw
    if p.flip_y:
        yaw = -yaw
    yaw = yaw + p.rotation
    return Boxes3D(
        centers=_transform_xyz(targets.centers, p),
        sizes=targets.sizes * p.scale,
        yaws=_wrap_angle(yaw),
        classes=targets.classes,
    )


@dataclass(frozen=True)
class PastePlan:
    """Which frames get pasted onto each original frame, with the params
    for each paste. ``entries[i]`` is a tuple of (source index, BdaParams)
    pairs for frame i."""

    entries: tuple
    expected_pastes: float

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(tuple(e) for e in self.entries))
        for i, frame in enumerate(self.entries):
            for src, _ in frame:
                if src == i and len(self.entries) > 1:
                    raise ValueError(f"frame {i} pastes itself")

    def to_text(self) -> str:
        """Human-readable dump for reproducibility logs."""
        lines = [f"expected pastes per frame: {self.expected_pastes}"]
        for i, frame in enumerate(self.entries):
            if not frame:
                lines.append(f"frame {i}: no pastes")
            for src, p in frame:
                lines.append(
                    f"frame {i}: paste frame {src} scale={p.scale:.6f} "
                    f"flip_x={p.flip_x} flip_y={p.flip_y} rotation={p.rotation:.6f}")
        return "\n".join(lines) + "\n"


def sample_paste_plan(batch_size, n_p, rng: np.random.Generator,
                      extra_bda=True) -> PastePlan:
    """Assign pasted frames to each frame of a batch.

    For integer ``n_p`` every frame receives n_p pastes; a fractional part
    f adds one more paste with probability f. Sources are drawn uniformly
    from the batch excluding the frame itself, with replacement. With
    ``extra_bda`` off, every paste uses identity params.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if n_p < 0:
        raise ValueError("expected paste count must be nonnegative")
    if batch_size == 1 and n_p > 0:
        raise ValueError("degenerate batch: no distinct frame to paste from")
    base = int(np.floor(n_p))
    frac = float(n_p) - base
    entries = []
    for i in range(batch_size):
        count = base
        if frac > 0 and rng.random() < frac:
            count += 1
        pastes = []
        for _ in range(count):
            src = int(rng.integers(0, batch_size - 1))
            if src >= i:
                src += 1
            params = sample_bda(rng) if extra_bda else BdaParams.identity()
            pastes.append((src, params))
        entries.append(tuple(pastes))
    return PastePlan(entries=tuple(entries), expected_pastes=float(n_p))


def bev_paste(grid_original, grid_pasted, targets_original: Boxes3D,
              targets_pasted: Boxes3D):
    """Elementwise grid addition plus target union (no deduplication and no
    occlusion reasoning between pasted and original objects).

    Returns (grid, targets).
    """
    a = np.asarray(grid_original)
    b = np.asarray(grid_pasted)
    if a.shape != b.shape:
        raise ValueError(f"grid shapes differ: {a.shape} vs {b.shape}")
    return a + b, Boxes3D.concatenate([targets_original, targets_pasted])
