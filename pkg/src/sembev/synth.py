"""Synthetic scenes with exact ground truth for every pipeline stage.

A scene is a set of non-overlapping oriented boxes resting on a ground
plane. Rendering casts one ray per feature cell and records the nearest
box/ground intersection, which yields oracle inputs in closed form: a
one-hot depth distribution at the hit's bin, a binary foreground map, and
a deterministic context feature. Point clouds sampled from box surfaces
and the ground plane feed the label-generation ops with exactly known
inside/outside tags.

Distances are camera-frame depths (the z coordinate along the optical
axis), matching how depth bins parameterize the lift step; rays are cast
with an unnormalized direction whose camera-z component is 1 so the ray
parameter is the depth itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Boxes3D, Camera, CameraRig, DepthBins

__all__ = [
    "ScenePlacementError",
    "SceneSpec",
    "RenderedView",
    "gen_scene",
    "render_views",
    "sample_point_cloud",
]

# Uniform size ranges for generated boxes: length, width, height (m).
BOX_LENGTH_RANGE = (1.5, 5.0)
BOX_WIDTH_RANGE = (1.5, 2.5)
BOX_HEIGHT_RANGE = (1.0, 2.0)
_PLACEMENT_RETRIES = 100
_CLASS_EMBED_SEED = 9973


class ScenePlacementError(RuntimeError):
    """Raised when a box cannot be placed without overlap."""


@dataclass(frozen=True)
class SceneSpec:
    """Boxes plus a ground plane, confined to a square of side ``extent``
    centered on the ego origin."""

    boxes: Boxes3D
    ground_z: float = 0.0
    extent: float = 80.0
    seed: int = -1

    def __post_init__(self):
        if self.extent <= 0:
            raise ValueError("extent must be positive")
        if len(self.boxes):
            half = self.extent / 2.0
            xy = self.boxes.centers[:, :2]
            if np.any(np.abs(xy) > half):
                raise ValueError("box centers must lie within the scene extent")


def _footprints_overlap(corners_a, corners_b) -> bool:
    """Separating-axis test for two convex BEV footprints (strict overlap:
    touching edges do not count)."""
    for quad in (corners_a, corners_b):
        edges = np.roll(quad, -1, axis=0) - quad
        for ex, ey in edges:
            axis = np.array([-ey, ex])
            pa = corners_a @ axis
            pb = corners_b @ axis
            if pa.max() <= pb.min() or pb.max() <= pa.min():
                return False
    return True


def gen_scene(rng, n_objects, extent, ground_z=0.0) -> SceneSpec:
    """Generate ``n_objects`` non-overlapping boxes resting on the ground.

    ``rng`` may be an int seed or a numpy Generator. Centers are uniform
    in the extent square (z set so boxes sit on the plane), sizes uniform
    in the documented ranges, yaws uniform. Each box gets up to 100
    placement retries before a ScenePlacementError.
    """
    seed = int(rng) if isinstance(rng, (int, np.integer)) else -1
    gen = np.random.default_rng(rng)
    if n_objects < 0:
        raise ValueError("n_objects must be >= 0")
    half = extent / 2.0
    centers, sizes, yaws = [], [], []
    accepted_corners = []
    for _ in range(n_objects):
        for attempt in range(_PLACEMENT_RETRIES + 1):
            if attempt == _PLACEMENT_RETRIES:
                raise ScenePlacementError(
                    f"could not place box {len(centers)} after {_PLACEMENT_RETRIES} retries")
            size = np.array([gen.uniform(*BOX_LENGTH_RANGE),
                             gen.uniform(*BOX_WIDTH_RANGE),
                             gen.uniform(*BOX_HEIGHT_RANGE)])
            center = np.array([gen.uniform(-half, half),
                               gen.uniform(-half, half),
                               ground_z + size[2] / 2.0])
            yaw = gen.uniform(-np.pi, np.pi)
            cand = Boxes3D(centers=center[None], sizes=size[None],
                           yaws=np.array([yaw]), classes=np.zeros(1, dtype=np.int64))
            corners = cand.bev_corners()[0]
            if not any(_footprints_overlap(corners, c) for c in accepted_corners):
                centers.append(center)
                sizes.append(size)
                yaws.append(yaw)
                accepted_corners.append(corners)
                break
    if centers:
        boxes = Boxes3D(centers=np.array(centers), sizes=np.array(sizes),
                        yaws=np.array(yaws), classes=np.arange(len(centers), dtype=np.int64) % 8)
    else:
        boxes = Boxes3D.empty()
    return SceneSpec(boxes=boxes, ground_z=ground_z, extent=extent, seed=seed)


@dataclass(frozen=True, eq=False)
class RenderedView:
    """Oracle per-camera inputs: one-hot depth distribution, binary
    foreground map, synthetic context feature, and raw hit depths
    (+inf where the ray hits nothing)."""

    depth_dist: np.ndarray    # (n_bins, Hf, Wf) one-hot float32
    semantic: np.ndarray      # (Hf, Wf) float32 in {0, 1}
    context: np.ndarray       # (C, Hf, Wf) float32
    hit_distance: np.ndarray  # (Hf, Wf) float64, camera depth

    def __post_init__(self):
        sums = self.depth_dist.sum(axis=0)
        if not np.allclose(sums, 1.0, atol=1e-6):
            raise ValueError("depth distribution cells must sum to 1")
        if not np.isin(self.semantic, (0.0, 1.0)).all():
            raise ValueError("semantic map must be binary")


def _class_embedding(class_id, dim) -> np.ndarray:
    if dim == 0:
        return np.zeros(0, dtype=np.float64)
    gen = np.random.default_rng(_CLASS_EMBED_SEED + int(class_id))
    return gen.standard_normal(dim)


def _ray_box_depths(origin, dirs, box_center, box_size, box_yaw):
    """Smallest positive ray parameter hitting an oriented box, or +inf.

    The test runs in the box's local frame (rotate by -yaw), where the box
    is the axis-aligned slab product [-size/2, size/2]^3.
    """
    c, s = np.cos(box_yaw), np.sin(box_yaw)
    rot = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])  # world -> local
    o = rot @ (origin - box_center)
    d = dirs @ rot.T
    half = box_size / 2.0

    tmin = np.full(dirs.shape[0], -np.inf)
    tmax = np.full(dirs.shape[0], np.inf)
    alive = np.ones(dirs.shape[0], dtype=bool)
    for a in range(3):
        da = d[:, a]
        parallel = np.abs(da) < 1e-12
        alive &= ~(parallel & (np.abs(o[a]) > half[a]))
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (-half[a] - o[a]) / da
            t2 = (half[a] - o[a]) / da
        lo = np.minimum(t1, t2)
        hi = np.maximum(t1, t2)
        use = ~parallel
        tmin = np.where(use, np.maximum(tmin, lo), tmin)
        tmax = np.where(use, np.minimum(tmax, hi), tmax)
    hit = alive & (tmax >= np.maximum(tmin, 0.0)) & (tmax > 0.0)
    depth = np.where(tmin > 0.0, tmin, tmax)
    return np.where(hit, depth, np.inf)


def render_views(scene: SceneSpec, rig: CameraRig, feature_shape, stride,
                 bins: DepthBins, channels=8):
    """Cast one ray per feature cell of every camera and build oracle maps.

    The nearest intersection among boxes and the ground plane sets the hit
    depth; the depth distribution is one-hot at the bin containing it
    (clipped into range; no-hit cells use the farthest bin), the semantic
    value is 1 iff the nearest hit is a box, and the context feature is a
    fixed per-class embedding over the first ``channels - 1`` channels plus
    a hit-depth channel (depth clipped to the bin range so it stays
    finite). Returns one RenderedView per camera, in rig order.
    """
    hf, wf = feature_shape
    if channels < 1:
        raise ValueError("channels must be >= 1")
    views = []
    for cam in rig:
        us = (np.arange(wf) + 0.5) * float(stride)
        vs = (np.arange(hf) + 0.5) * float(stride)
        v, u = np.meshgrid(vs, us, indexing="ij")
        dirs_cam = np.stack([(u.ravel() - cam.cx) / cam.fx,
                             (v.ravel() - cam.cy) / cam.fy,
                             np.ones(hf * wf)], axis=1)
        dirs = dirs_cam @ cam.rotation.T
        origin = cam.translation

        best = np.full(hf * wf, np.inf)
        best_class = np.full(hf * wf, -2, dtype=np.int64)  # -2: sky, -1: ground
        boxes = scene.boxes
        for i in range(len(boxes)):
            depth = _ray_box_depths(origin, dirs, boxes.centers[i], boxes.sizes[i],
                                    boxes.yaws[i])
            closer = depth < best
            best = np.where(closer, depth, best)
            best_class = np.where(closer, boxes.classes[i], best_class)
        dz = dirs[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            ground_depth = (scene.ground_z - origin[2]) / dz
        ground_hit = (np.abs(dz) > 1e-12) & (ground_depth > 0.0) & (ground_depth < best)
        best = np.where(ground_hit, ground_depth, best)
        best_class = np.where(ground_hit, -1, best_class)

        semantic = (best_class >= 0).astype(np.float32)
        finite = np.isfinite(best)
        hit_bin = np.full(best.shape, bins.n_bins - 1, dtype=np.int64)
        hit_bin[finite] = np.clip(bins.bin_of(best[finite]), 0, bins.n_bins - 1)
        depth_dist = np.zeros((bins.n_bins, hf * wf), dtype=np.float32)
        depth_dist[hit_bin, np.arange(hf * wf)] = 1.0

        context = np.zeros((channels, hf * wf), dtype=np.float32)
        for cls in np.unique(best_class):
            mask = best_class == cls
            context[:-1, mask] = _class_embedding(cls, channels - 1)[:, None]
        context[-1] = np.minimum(best, bins.max_depth)
        views.append(RenderedView(
            depth_dist=depth_dist.reshape(bins.n_bins, hf, wf),
            semantic=semantic.reshape(hf, wf),
            context=context.reshape(channels, hf, wf),
            hit_distance=best.reshape(hf, wf),
        ))
    return views


def sample_point_cloud(scene: SceneSpec, rng, n_points, bg_ratio=0.5):
    """Sample an ego-frame point cloud with exact inside-box tags.

    (1 - bg_ratio) of the points lie uniformly (by area) on box surfaces
    and test inside their source box; the rest lie on the ground plane,
    rejection-sampled to fall outside every box footprint, so they always
    test outside. Returns (points (n, 3), inside (n,) bool, source (n,)
    int) where source is the originating box index, -1 for ground points.
    """
    gen = np.random.default_rng(rng)
    if n_points < 0:
        raise ValueError("n_points must be >= 0")
    if n_points == 0:
        return np.zeros((0, 3)), np.zeros(0, dtype=bool), np.zeros(0, dtype=np.int64)
    boxes = scene.boxes
    n_bg = int(round(n_points * float(bg_ratio)))
    n_fg = n_points - n_bg
    if len(boxes) == 0:
        n_bg, n_fg = n_points, 0

    pts = []
    sources = []
    if n_fg:
        sizes = boxes.sizes
        face_areas = np.stack([
            sizes[:, 1] * sizes[:, 2], sizes[:, 1] * sizes[:, 2],  # +/- x
            sizes[:, 0] * sizes[:, 2], sizes[:, 0] * sizes[:, 2],  # +/- y
            sizes[:, 0] * sizes[:, 1], sizes[:, 0] * sizes[:, 1],  # +/- z
        ], axis=1)
        probs = (face_areas / face_areas.sum()).ravel()
        draws = gen.choice(face_areas.size, size=n_fg, p=probs)
        box_idx = draws // 6
        face = draws % 6
        locals_ = gen.uniform(-0.5, 0.5, size=(n_fg, 3)) * boxes.sizes[box_idx]
        axis = face // 2
        sign = np.where(face % 2 == 0, 1.0, -1.0)
        locals_[np.arange(n_fg), axis] = sign * boxes.sizes[box_idx, axis] / 2.0
        c, s = np.cos(boxes.yaws[box_idx]), np.sin(boxes.yaws[box_idx])
        world = np.empty_like(locals_)
        world[:, 0] = c * locals_[:, 0] - s * locals_[:, 1]
        world[:, 1] = s * locals_[:, 0] + c * locals_[:, 1]
        world[:, 2] = locals_[:, 2]
        pts.append(world + boxes.centers[box_idx])
        sources.append(box_idx.astype(np.int64))
    if n_bg:
        half = scene.extent / 2.0
        remaining = n_bg
        collected = []
        while remaining:
            cand = np.column_stack([gen.uniform(-half, half, remaining),
                                    gen.uniform(-half, half, remaining),
                                    np.full(remaining, scene.ground_z)])
            bad = boxes.contains(cand) if len(boxes) else np.zeros(remaining, dtype=bool)
            good = cand[~bad]
            collected.append(good)
            remaining -= good.shape[0]
        pts.append(np.concatenate(collected))
        sources.append(np.full(n_bg, -1, dtype=np.int64))
    points = np.concatenate(pts) if pts else np.zeros((0, 3))
    source = np.concatenate(sources) if sources else np.zeros(0, dtype=np.int64)
    inside = boxes.contains(points) if len(boxes) else np.zeros(n_points, dtype=bool)
    return points, inside, source
