"""Camera models, frustum lattices, oriented boxes, and BEV pillar indexing.

Conventions used throughout the package:

* Ego frame: right-handed, z up, meters. All cameras project into it.
* Camera frame: x right, y down, z forward (optical axis). Depth is the
  camera-frame z coordinate.
* Image coordinates: (u, v) in pixels, origin at the top-left corner.
* Feature cells: the image downsampled by an integer ``stride``; cell
  (i, j) covers pixels [j*stride, (j+1)*stride) x [i*stride, (i+1)*stride)
  and its center sits at u = (j + 0.5)*stride, v = (i + 0.5)*stride.

All functions are pure and safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Camera",
    "CameraRig",
    "DepthBins",
    "BevConfig",
    "Boxes3D",
    "build_frustum",
    "cam_to_ego",
    "pillar_of",
    "pillar_indices",
    "flat_pillar_ids",
    "ring_rig",
]

_ORTHONORMAL_TOL = 1e-9
_VALID_STRIDES = (8, 16)


def _as_readonly(arr, dtype, shape=None):
    out = np.array(arr, dtype=dtype)
    if shape is not None and out.shape != shape:
        raise ValueError(f"expected shape {shape}, got {out.shape}")
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Camera:
    """Pinhole camera plus a rigid camera-to-ego transform.

    ``rotation`` and ``translation`` map camera-frame points into the ego
    frame: p_ego = rotation @ p_cam + translation. The rotation fully
    encodes the camera-axis-to-ego-axis convention; no implicit axis swap
    happens anywhere else.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray        # (3, 3) orthonormal, camera-to-ego
    translation: np.ndarray     # (3,) meters
    image_size: tuple[int, int]  # (width, height) pixels
    stride: int                  # pixels per feature cell

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")
        rot = _as_readonly(self.rotation, np.float64, (3, 3))
        err = np.abs(rot.T @ rot - np.eye(3)).max()
        if err > _ORTHONORMAL_TOL:
            raise ValueError(f"rotation is not orthonormal (|R^T R - I| = {err:.3e})")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", _as_readonly(self.translation, np.float64, (3,)))
        if self.stride not in _VALID_STRIDES:
            raise ValueError(f"stride must be one of {_VALID_STRIDES}, got {self.stride}")
        w, h = self.image_size
        if w <= 0 or h <= 0 or w % self.stride or h % self.stride:
            raise ValueError(f"image size {self.image_size} not divisible by stride {self.stride}")

    @property
    def feature_shape(self) -> tuple[int, int]:
        """(Hf, Wf) of the feature grid this camera produces."""
        w, h = self.image_size
        return h // self.stride, w // self.stride


@dataclass(frozen=True)
class CameraRig:
    """An ordered collection of cameras sharing one ego frame."""

    cameras: tuple[Camera, ...]

    def __post_init__(self):
        object.__setattr__(self, "cameras", tuple(self.cameras))
        if not self.cameras:
            raise ValueError("rig needs at least one camera")

    def __len__(self):
        return len(self.cameras)

    def __iter__(self):
        return iter(self.cameras)

    def __getitem__(self, i):
        return self.cameras[i]


def ring_rig(n_cameras=6, image_size=(704, 256), stride=16, fx=350.0, fy=350.0,
             height=1.5, radius=0.0, yaw_offset=0.0):
    """Build a rig of cameras on a horizontal ring, facing outward.

    Camera i sits at yaw ``yaw_offset + i * 2*pi/n``, level with the
    horizon, ``height`` meters above the ego origin and ``radius`` meters
    from it. Principal point defaults to the image center.
    """
    if n_cameras < 1:
        raise ValueError("n_cameras must be >= 1")
    w, h = image_size
    cams = []
    for i in range(n_cameras):
        yaw = yaw_offset + 2.0 * np.pi * i / n_cameras
        forward = np.array([np.cos(yaw), np.sin(yaw), 0.0])
        down = np.array([0.0, 0.0, -1.0])
        right = np.cross(down, forward)
        rot = np.stack([right, down, forward], axis=1)
        t = np.array([radius * np.cos(yaw), radius * np.sin(yaw), height])
        cams.append(Camera(fx=fx, fy=fy, cx=w / 2.0, cy=h / 2.0,
                           rotation=rot, translation=t,
                           image_size=image_size, stride=stride))
    return CameraRig(tuple(cams))


@dataclass(frozen=True)
class DepthBins:
    """Uniform discretization of camera depth into ``n_bins`` intervals.

    Bin i covers [min_depth + i*bin_width, min_depth + (i+1)*bin_width)
    and its center is min_depth + (i + 0.5)*bin_width.
    """

    min_depth: float = 1.0
    bin_width: float = 1.0
    n_bins: int = 59

    def __post_init__(self):
        if self.min_depth <= 0:
            raise ValueError(f"min_depth must be positive, got {self.min_depth}")
        if self.bin_width <= 0:
            raise ValueError(f"bin_width must be positive, got {self.bin_width}")
        if self.n_bins < 1:
            raise ValueError(f"n_bins must be >= 1, got {self.n_bins}")

    @property
    def centers(self) -> np.ndarray:
        return self.min_depth + (np.arange(self.n_bins) + 0.5) * self.bin_width

    @property
    def max_depth(self) -> float:
        return self.min_depth + self.n_bins * self.bin_width

    def bin_of(self, depths):
        """Bin index of each depth (unclamped; may fall outside [0, n_bins))."""
        d = np.asarray(depths, dtype=np.float64)
        return np.floor((d - self.min_depth) / self.bin_width).astype(np.int64)


@dataclass(frozen=True)
class BevConfig:
    """Pillarized BEV grid over the ego frame.

    The x/y ranges must be whole multiples of the pillar footprint; the
    derived grid is nx x ny cells of ``channels`` features each. Pillars
    span the whole z range (dz equals the z extent).
    """

    x_range: tuple[float, float] = (-51.2, 51.2)
    y_range: tuple[float, float] = (-51.2, 51.2)
    z_range: tuple[float, float] = (-5.0, 3.0)
    pillar: tuple[float, float, float] = (0.8, 0.8, 8.0)
    channels: int = 64

    def __post_init__(self):
        for name, (lo, hi) in (("x", self.x_range), ("y", self.y_range), ("z", self.z_range)):
            if not hi > lo:
                raise ValueError(f"{name}_range must be increasing, got ({lo}, {hi})")
        if self.channels < 1:
            raise ValueError("channels must be >= 1")
        for name, span, step in (("x", self.x_range[1] - self.x_range[0], self.pillar[0]),
                                 ("y", self.y_range[1] - self.y_range[0], self.pillar[1]),
                                 ("z", self.z_range[1] - self.z_range[0], self.pillar[2])):
            if step <= 0:
                raise ValueError(f"pillar {name} size must be positive")
            n = span / step
            if abs(n - round(n)) > 1e-6:
                raise ValueError(f"{name} range {span} is not a whole multiple of pillar size {step}")

    @property
    def nx(self) -> int:
        return round((self.x_range[1] - self.x_range[0]) / self.pillar[0])

    @property
    def ny(self) -> int:
        return round((self.y_range[1] - self.y_range[0]) / self.pillar[1])

    @property
    def n_pillars(self) -> int:
        return self.nx * self.ny

    def pillar_center(self, ix, iy):
        """Ego-frame (x, y) center of pillar (ix, iy)."""
        x = self.x_range[0] + (np.asarray(ix) + 0.5) * self.pillar[0]
        y = self.y_range[0] + (np.asarray(iy) + 0.5) * self.pillar[1]
        return x, y


def build_frustum(feature_shape, stride, bins: DepthBins) -> np.ndarray:
    """Virtual-point lattice (u, v, d) for one camera's feature grid.

    One point per (feature cell, depth bin): (u, v) at the cell center in
    original-image pixels, d at the bin center. Output shape is
    (Hf*Wf*n_bins, 3), ordered cell-major with depth innermost:
    index = (i*Wf + j)*n_bins + k.
    """
    hf, wf = feature_shape
    if hf < 1 or wf < 1:
        raise ValueError(f"feature shape must be at least 1x1, got {feature_shape}")
    us = (np.arange(wf) + 0.5) * float(stride)
    vs = (np.arange(hf) + 0.5) * float(stride)
    v, u, d = np.meshgrid(vs, us, bins.centers, indexing="ij")
    return np.stack([u.ravel(), v.ravel(), d.ravel()], axis=1)


def cam_to_ego(uvd, cam: Camera) -> np.ndarray:
    """Unproject pixel/depth triples into ego-frame points.

    p_cam = d * ((u - cx)/fx, (v - cy)/fy, 1), then
    p_ego = rotation @ p_cam + translation. Accepts a single (3,) triple
    or an (n, 3) batch; the result matches the input's arity.
    """
    arr = np.asarray(uvd, dtype=np.float64)
    single = arr.ndim == 1
    pts = np.atleast_2d(arr)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"expected (n, 3) triples, got shape {arr.shape}")
    d = pts[:, 2]
    if np.any(d <= 0):
        raise ValueError("depth must be positive for unprojection")
    cam_pts = np.empty_like(pts)
    cam_pts[:, 0] = (pts[:, 0] - cam.cx) / cam.fx * d
    cam_pts[:, 1] = (pts[:, 1] - cam.cy) / cam.fy * d
    cam_pts[:, 2] = d
    ego = cam_pts @ cam.rotation.T + cam.translation
    return ego[0] if single else ego


def pillar_indices(points, cfg: BevConfig):
    """Vectorized pillar lookup.

    Returns (ix, iy, in_range) for an (n, 3) batch of ego points. Indices
    are floor((coord - lo)/step); ``in_range`` is True where the point
    falls inside the configured x/y/z ranges (lower edges inclusive,
    upper exclusive). ix/iy are only meaningful where in_range holds.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    ix = np.floor((pts[:, 0] - cfg.x_range[0]) / cfg.pillar[0]).astype(np.int64)
    iy = np.floor((pts[:, 1] - cfg.y_range[0]) / cfg.pillar[1]).astype(np.int64)
    z = pts[:, 2]
    in_range = ((ix >= 0) & (ix < cfg.nx)
                & (iy >= 0) & (iy < cfg.ny)
                & (z >= cfg.z_range[0]) & (z < cfg.z_range[1]))
    return ix, iy, in_range


def pillar_of(p, cfg: BevConfig):
    """Pillar (ix, iy) containing a single ego point, or None if out of range."""
    ix, iy, ok = pillar_indices(np.asarray(p, dtype=np.float64).reshape(1, 3), cfg)
    if not ok[0]:
        return None
    return int(ix[0]), int(iy[0])


def flat_pillar_ids(ix, iy, cfg: BevConfig) -> np.ndarray:
    """Flatten (ix, iy) into a single pillar id: ix * ny + iy."""
    return np.asarray(ix, dtype=np.int64) * cfg.ny + np.asarray(iy, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class Boxes3D:
    """Oriented 3D boxes with class labels, usable as detection targets.

    centers (n, 3) are box centers in the ego frame; sizes (n, 3) are full
    extents (length along the box x axis, width along y, height along z);
    yaws rotate the box about the ego z axis.
    """

    centers: np.ndarray   # (n, 3)
    sizes: np.ndarray     # (n, 3), positive
    yaws: np.ndarray      # (n,) radians
    classes: np.ndarray   # (n,) int

    def __post_init__(self):
        n = np.asarray(self.centers).reshape(-1, 3).shape[0]
        object.__setattr__(self, "centers", _as_readonly(np.asarray(self.centers).reshape(-1, 3), np.float64))
        object.__setattr__(self, "sizes", _as_readonly(np.asarray(self.sizes).reshape(-1, 3), np.float64))
        object.__setattr__(self, "yaws", _as_readonly(np.asarray(self.yaws).reshape(-1), np.float64))
        object.__setattr__(self, "classes", _as_readonly(np.asarray(self.classes).reshape(-1), np.int64))
        if not (self.sizes.shape[0] == n and self.yaws.shape[0] == n and self.classes.shape[0] == n):
            raise ValueError("centers, sizes, yaws, classes must agree in length")
        if n and not np.all(self.sizes > 0):
            raise ValueError("box sizes must be positive")

    def __len__(self):
        return self.centers.shape[0]

    @classmethod
    def empty(cls) -> "Boxes3D":
        z = np.zeros((0, 3))
        return cls(centers=z, sizes=z, yaws=np.zeros(0), classes=np.zeros(0, dtype=np.int64))

    @classmethod
    def concatenate(cls, parts) -> "Boxes3D":
        parts = list(parts)
        if not parts:
            return cls.empty()
        return cls(centers=np.concatenate([p.centers for p in parts]),
                   sizes=np.concatenate([p.sizes for p in parts]),
                   yaws=np.concatenate([p.yaws for p in parts]),
                   classes=np.concatenate([p.classes for p in parts]))

    def to_local(self, i, points):
        """Express ego points in box i's frame (translate, rotate by -yaw)."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        rel = pts - self.centers[i]
        c, s = np.cos(self.yaws[i]), np.sin(self.yaws[i])
        local = np.empty_like(rel)
        local[:, 0] = c * rel[:, 0] + s * rel[:, 1]
        local[:, 1] = -s * rel[:, 0] + c * rel[:, 1]
        local[:, 2] = rel[:, 2]
        return local

    def contains(self, points, atol=1e-9) -> np.ndarray:
        """Boundary-inclusive membership of each point in any box."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        inside = np.zeros(pts.shape[0], dtype=bool)
        for i in range(len(self)):
            local = self.to_local(i, pts)
            half = self.sizes[i] / 2.0
            inside |= np.all(np.abs(local) <= half + atol, axis=1)
        return inside

    def bev_corners(self) -> np.ndarray:
        """(n, 4, 2) xy footprint corners, counter-clockwise."""
        half_l = self.sizes[:, 0] / 2.0
        half_w = self.sizes[:, 1] / 2.0
        corners = np.stack([
            np.stack([half_l, half_w], axis=1),
            np.stack([-half_l, half_w], axis=1),
            np.stack([-half_l, -half_w], axis=1),
            np.stack([half_l, -half_w], axis=1),
        ], axis=1)  # (n, 4, 2) local
        c, s = np.cos(self.yaws), np.sin(self.yaws)
        rot = np.stack([np.stack([c, -s], axis=1), np.stack([s, c], axis=1)], axis=1)  # (n, 2, 2)
        return np.einsum("nij,nkj->nki", rot, corners) + self.centers[:, None, :2]
