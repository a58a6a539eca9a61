"""Depth-distribution and semantic-map math for the two-stage BEV head.

Feature maps are plain float arrays shaped (channels, H, W). Depth
distributions are (n_bins, H, W) with each spatial cell summing to one;
semantic maps are (H, W) foreground probabilities in [0, 1].

The cross-task fusion here follows the gated-injection pattern: a task
branch keeps its own feature and receives the other branch's feature
through a learned 1x1 transform, modulated elementwise by a sigmoid gate
computed from the receiving branch. The same gating form merges upsampled
coarse features with the finer-scale image feature. Everything is forward
math over supplied weights; no training happens in this package.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .geometry import Boxes3D, Camera, DepthBins

__all__ = [
    "ConvWeights",
    "BranchWeights",
    "LossWeights",
    "LabelMaps",
    "softmax_over_depth",
    "sigmoid_gate",
    "mtd_fuse",
    "upsample_fuse",
    "nearest_upsample2x",
    "depth_labels_from_points",
    "seg_labels_from_points",
    "depth_loss",
    "seg_loss",
    "total_loss",
]

# Probability floor inside the depth cross-entropy: keeps the loss finite
# when a hard one-hot prediction misses the labeled bin.
_DEPTH_PROB_FLOOR = 1e-12
_SEG_PROB_CLAMP = 1e-7


def softmax_over_depth(logits) -> np.ndarray:
    """Per-cell softmax across the depth-bin axis of an (n_bins, H, W) map.

    Numerically stabilized by subtracting the per-cell max before
    exponentiation, so the result is invariant to per-cell logit shifts.
    """
    arr = np.asarray(logits, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"expected (n_bins, H, W) logits, got shape {arr.shape}")
    if np.isnan(arr).any():
        raise ValueError("logits contain NaN")
    shifted = arr - arr.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=0, keepdims=True)


@dataclass(frozen=True, eq=False)
class ConvWeights:
    """A 1x1 convolution: (out, in) weight matrix plus per-channel bias."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2:
            raise ValueError(f"weight must be (out, in), got shape {w.shape}")
        if b.shape != (w.shape[0],):
            raise ValueError(f"bias shape {b.shape} does not match {w.shape[0]} outputs")
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise ValueError("conv weights must be finite")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @classmethod
    def zeros(cls, out_channels, in_channels) -> "ConvWeights":
        return cls(np.zeros((out_channels, in_channels)), np.zeros(out_channels))

    def apply(self, fmap) -> np.ndarray:
        """Apply the 1x1 convolution to a (in, H, W) feature map."""
        f = np.asarray(fmap, dtype=np.float64)
        if f.ndim != 3 or f.shape[0] != self.weight.shape[1]:
            raise ValueError(
                f"feature map shape {f.shape} incompatible with weight {self.weight.shape}")
        return np.einsum("oi,ihw->ohw", self.weight, f) + self.bias[:, None, None]


@dataclass(frozen=True)
class BranchWeights:
    """Gate and task convolutions for one fusion site.

    Every fusion site gets its own independent instance; sharing weights
    across sites would couple unrelated branches.
    """

    gate: ConvWeights
    task: ConvWeights


def sigmoid_gate(fmap, gate_weights: ConvWeights) -> np.ndarray:
    """Gate map sigma(W_G f) computed per cell, values in (0, 1).

    In float64 the sigmoid saturates to exactly 0.0/1.0 for pre-activation
    magnitudes beyond ~36.7; strict openness holds on the non-saturating
    range.
    """
    return expit(gate_weights.apply(fmap))


def mtd_fuse(f_depth, f_sem, depth_branch: BranchWeights, sem_branch: BranchWeights):
    """Cross-inject task features between the depth and semantic branches.

    Each branch keeps its own feature and adds the other branch's feature
    after a 1x1 transform, gated elementwise by a sigmoid of the receiving
    branch:

        fused_depth = f_depth + gate(f_depth) * task(f_sem)
        fused_sem   = f_sem   + gate(f_sem)   * task(f_depth)

    Returns (fused_depth, fused_sem).
    """
    fd = np.asarray(f_depth, dtype=np.float64)
    fs = np.asarray(f_sem, dtype=np.float64)
    if fd.shape != fs.shape:
        raise ValueError(f"branch features must share a shape, got {fd.shape} vs {fs.shape}")
    fused_depth = fd + sigmoid_gate(fd, depth_branch.gate) * depth_branch.task.apply(fs)
    fused_sem = fs + sigmoid_gate(fs, sem_branch.gate) * sem_branch.task.apply(fd)
    return fused_depth, fused_sem


def nearest_upsample2x(fmap) -> np.ndarray:
    """Nearest-neighbor 2x upsampling of a (C, H, W) map: each cell becomes
    a constant 2x2 block."""
    f = np.asarray(fmap, dtype=np.float64)
    if f.ndim != 3:
        raise ValueError(f"expected (C, H, W), got shape {f.shape}")
    return np.repeat(np.repeat(f, 2, axis=1), 2, axis=2)


def upsample_fuse(f_coarse, f_image, branch: BranchWeights) -> np.ndarray:
    """Merge an upsampled coarse feature with the finer-scale image feature.

    result = up2x(f_coarse) + gate(f_image) * task(f_image)

    ``f_image`` must be exactly twice the coarse feature's spatial size.
    Called once per task branch with that branch's own weights.
    """
    fc = np.asarray(f_coarse, dtype=np.float64)
    fi = np.asarray(f_image, dtype=np.float64)
    if fc.ndim != 3 or fi.ndim != 3:
        raise ValueError("expected (C, H, W) feature maps")
    if fi.shape[1:] != (2 * fc.shape[1], 2 * fc.shape[2]):
        raise ValueError(
            f"image feature spatial dims {fi.shape[1:]} are not 2x the coarse dims {fc.shape[1:]}")
    up = nearest_upsample2x(fc)
    injected = sigmoid_gate(fi, branch.gate) * branch.task.apply(fi)
    if injected.shape != up.shape:
        raise ValueError(
            f"injected channels {injected.shape[0]} do not match coarse channels {up.shape[0]}")
    return up + injected


@dataclass(frozen=True, eq=False)
class LabelMaps:
    """Per-cell supervision produced by projecting a point cloud.

    ``depth`` holds the minimum camera depth of the points landing in each
    cell (meaningful only where ``valid``); ``foreground`` marks cells
    whose minimum-depth point lies inside a box.
    """

    depth: np.ndarray       # (H, W) float64 meters
    foreground: np.ndarray  # (H, W) bool
    valid: np.ndarray       # (H, W) bool

    def __post_init__(self):
        d = np.asarray(self.depth, dtype=np.float64)
        fg = np.asarray(self.foreground, dtype=bool)
        va = np.asarray(self.valid, dtype=bool)
        if not (d.shape == fg.shape == va.shape):
            raise ValueError("label maps must share one shape")
        if np.any(fg & ~va):
            raise ValueError("foreground set on cells without a valid label")
        if va.any() and not np.all(d[va] > 0):
            raise ValueError("depth labels must be positive where valid")
        object.__setattr__(self, "depth", d)
        object.__setattr__(self, "foreground", fg)
        object.__setattr__(self, "valid", va)


def _min_depth_projection(points, cam: Camera, feature_shape, stride):
    """Project points and pick, per feature cell, the nearest one.

    Returns (depth_map, valid, winner) where winner[i, j] is the original
    index of the minimum-depth point landing in cell (i, j) (ties broken
    by lowest original index), or -1 where no point lands.
    """
    hf, wf = feature_shape
    depth_map = np.zeros((hf, wf), dtype=np.float64)
    valid = np.zeros((hf, wf), dtype=bool)
    winner = np.full((hf, wf), -1, dtype=np.int64)
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if pts.shape[0] == 0:
        return depth_map, valid, winner

    rel = pts - cam.translation
    cam_pts = rel @ cam.rotation  # rows: R^T (p - t)
    z = cam_pts[:, 2]
    front = z > 0
    u = np.full(pts.shape[0], -1.0)
    v = np.full(pts.shape[0], -1.0)
    u[front] = cam.fx * cam_pts[front, 0] / z[front] + cam.cx
    v[front] = cam.fy * cam_pts[front, 1] / z[front] + cam.cy
    col = np.floor(u / stride).astype(np.int64)
    row = np.floor(v / stride).astype(np.int64)
    ok = front & (row >= 0) & (row < hf) & (col >= 0) & (col < wf)
    if not ok.any():
        return depth_map, valid, winner

    idx = np.flatnonzero(ok)
    flat = row[idx] * wf + col[idx]
    order = np.lexsort((idx, z[idx], flat))
    flat_sorted = flat[order]
    first = np.r_[True, flat_sorted[1:] != flat_sorted[:-1]]
    cells = flat_sorted[first]
    winners = idx[order][first]
    depth_map.flat[cells] = z[winners]
    valid.flat[cells] = True
    winner.flat[cells] = winners
    return depth_map, valid, winner


def depth_labels_from_points(points, cam: Camera, feature_shape, stride) -> LabelMaps:
    """Depth labels: per-cell minimum camera depth among projected points.

    Points behind the camera or off the image are skipped; cells nobody
    hits stay unlabeled.
    """
    depth_map, valid, _ = _min_depth_projection(points, cam, feature_shape, stride)
    return LabelMaps(depth=depth_map, foreground=np.zeros_like(valid), valid=valid)


def seg_labels_from_points(points, boxes: Boxes3D, cam: Camera, feature_shape, stride) -> LabelMaps:
    """Foreground labels: a labeled cell is foreground iff the point that
    supplied its minimum-depth label lies inside any box."""
    depth_map, valid, winner = _min_depth_projection(points, cam, feature_shape, stride)
    foreground = np.zeros_like(valid)
    if valid.any() and len(boxes):
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        win_idx = winner[valid]
        foreground[valid] = boxes.contains(pts[win_idx])
    return LabelMaps(depth=depth_map, foreground=foreground, valid=valid)


def depth_loss(pred, labels: LabelMaps, bins: DepthBins) -> float:
    """Mean one-hot cross-entropy of a depth distribution on labeled cells.

    Labels are binned by ``bins``; cells whose label falls outside the bin
    range are excluded. Returns 0.0 when nothing is labeled.
    """
    p = np.asarray(pred, dtype=np.float64)
    if p.ndim != 3 or p.shape[1:] != labels.valid.shape:
        raise ValueError(f"prediction shape {p.shape} does not match labels {labels.valid.shape}")
    if not labels.valid.any():
        return 0.0
    cell_idx = np.flatnonzero(labels.valid.ravel())
    b = bins.bin_of(labels.depth.ravel()[cell_idx])
    in_bins = (b >= 0) & (b < p.shape[0])
    if not in_bins.any():
        return 0.0
    cell_idx = cell_idx[in_bins]
    b = b[in_bins]
    probs = p.reshape(p.shape[0], -1)[b, cell_idx]
    return float(np.mean(-np.log(np.maximum(probs, _DEPTH_PROB_FLOOR))))


def seg_loss(pred, labels: LabelMaps) -> float:
    """Mean binary cross-entropy of foreground scores on labeled cells,
    probabilities clamped to [1e-7, 1 - 1e-7]. Returns 0.0 when nothing
    is labeled."""
    p = np.asarray(pred, dtype=np.float64)
    if p.shape != labels.valid.shape:
        raise ValueError(f"prediction shape {p.shape} does not match labels {labels.valid.shape}")
    if not labels.valid.any():
        return 0.0
    probs = np.clip(p[labels.valid], _SEG_PROB_CLAMP, 1.0 - _SEG_PROB_CLAMP)
    y = labels.foreground[labels.valid].astype(np.float64)
    return float(np.mean(-(y * np.log(probs) + (1.0 - y) * np.log(1.0 - probs))))


@dataclass(frozen=True)
class LossWeights:
    """Weights for the semantic and depth supervision terms."""

    lambda_semantic: float = 1.0
    lambda_depth: float = 1.0

    def __post_init__(self):
        if self.lambda_semantic < 0 or self.lambda_depth < 0:
            raise ValueError("loss weights must be nonnegative")


def total_loss(l_det, l_sem16, l_sem8, l_depth16, l_depth8, weights: LossWeights) -> float:
    """Detection loss plus half-weighted two-scale supervision terms:

    total = l_det + (lambda_semantic/2)(l_sem16 + l_sem8)
                  + (lambda_depth/2)(l_depth16 + l_depth8)
    """
    terms = (l_det, l_sem16, l_sem8, l_depth16, l_depth8)
    if not all(np.isfinite(t) for t in terms):
        raise ValueError("loss terms must be finite")
    return float(l_det
                 + 0.5 * weights.lambda_semantic * (l_sem16 + l_sem8)
                 + 0.5 * weights.lambda_depth * (l_depth16 + l_depth8))
