"""Sectioned key-value run configuration.

The format is an INI-style text file with the sections rig, bev, bins,
pool, paste, scene, loss, and output; every section and key is optional
and falls back to a documented default, but unknown sections or keys are
rejected so typos fail loudly. The scene can either be generated from a
seed or spelled out as explicit boxes (one ``x y z l w h yaw class`` line
per box), which makes failing cases replayable.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import BevConfig, Boxes3D, CameraRig, DepthBins, ring_rig
from .pooling import PoolConfig
from .scoring import LossWeights
from .synth import SceneSpec, gen_scene

__all__ = ["ConfigError", "RunConfig", "load_config", "scene_section_text",
           "DEFAULT_CONFIG_TEXT"]


class ConfigError(Exception):
    """A config file could not be parsed or validated."""


_KNOWN_KEYS = {
    "rig": {"cameras", "image_width", "image_height", "stride", "fx", "fy",
            "height", "radius", "yaw_offset"},
    "bev": {"x_min", "x_max", "y_min", "y_max", "z_min", "z_max",
            "pillar_x", "pillar_y", "pillar_z", "channels"},
    "bins": {"min_depth", "bin_width", "n_bins"},
    "pool": {"t_depth", "t_semantic"},
    "paste": {"enabled", "n_p", "extra_bda"},
    "scene": {"seed", "n_objects", "extent", "ground_z", "boxes",
              "n_cloud_points", "bg_ratio"},
    "loss": {"lambda_semantic", "lambda_depth"},
    "output": {"dir"},
}

DEFAULT_CONFIG_TEXT = """\
[rig]
cameras = 6
image_width = 704
image_height = 256
stride = 16
fx = 350.0
fy = 350.0
height = 1.5
radius = 0.0
yaw_offset = 0.0

[bev]
x_min = -51.2
x_max = 51.2
y_min = -51.2
y_max = 51.2
z_min = -5.0
z_max = 3.0
pillar_x = 0.8
pillar_y = 0.8
pillar_z = 8.0
channels = 8

[bins]
min_depth = 1.0
bin_width = 1.0
n_bins = 59

[pool]
t_depth = 0.0085
t_semantic = 0.25

[paste]
enabled = false
n_p = 1.0
extra_bda = true

[scene]
seed = 0
n_objects = 8
extent = 60.0
ground_z = 0.0
n_cloud_points = 0
bg_ratio = 0.5

[loss]
lambda_semantic = 1.0
lambda_depth = 1.0

[output]
dir = sembev_out
"""


@dataclass(frozen=True)
class RunConfig:
    """Parsed, validated pipeline configuration."""

    rig: CameraRig
    bev: BevConfig
    bins: DepthBins
    pool: PoolConfig
    paste_enabled: bool
    n_p: float
    extra_bda: bool
    scene_seed: int
    scene_n_objects: int
    scene_extent: float
    scene_ground_z: float
    scene_boxes: Boxes3D | None
    n_cloud_points: int
    bg_ratio: float
    loss: LossWeights
    outdir: Path

    def scene_spec(self, seed_offset=0) -> SceneSpec:
        """Materialize the scene: explicit boxes if given, else generated
        from the seed (plus an offset so one config can drive several
        distinct frames)."""
        if self.scene_boxes is not None:
            return SceneSpec(boxes=self.scene_boxes, ground_z=self.scene_ground_z,
                             extent=self.scene_extent, seed=self.scene_seed)
        return gen_scene(self.scene_seed + seed_offset, self.scene_n_objects,
                         self.scene_extent, ground_z=self.scene_ground_z)


class _Section:
    """Typed accessors over one config section with key-level diagnostics."""

    def __init__(self, parser, name):
        self._name = name
        self._data = dict(parser[name]) if parser.has_section(name) else {}

    def _get(self, key, default, convert, kind):
        if key not in self._data:
            return default
        raw = self._data[key]
        try:
            return convert(raw)
        except ValueError as exc:
            raise ConfigError(f"[{self._name}] {key} = {raw!r}: not a valid {kind}") from exc

    def get_float(self, key, default):
        return self._get(key, default, float, "number")

    def get_int(self, key, default):
        return self._get(key, default, int, "integer")

    def get_bool(self, key, default):
        def conv(raw):
            low = raw.strip().lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        return self._get(key, default, conv, "boolean")

    def get_str(self, key, default):
        return self._get(key, default, str, "string")


def _parse_boxes(raw, section="scene") -> Boxes3D:
    rows = []
    for lineno, line in enumerate(raw.strip().splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 8:
            raise ConfigError(
                f"[{section}] boxes line {lineno}: expected 8 fields "
                f"(x y z l w h yaw class), got {len(parts)}")
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            raise ConfigError(f"[{section}] boxes line {lineno}: non-numeric field")
        rows.append(vals)
    if not rows:
        return Boxes3D.empty()
    arr = np.array(rows)
    return Boxes3D(centers=arr[:, 0:3], sizes=arr[:, 3:6], yaws=arr[:, 6],
                   classes=arr[:, 7].astype(np.int64))


def scene_section_text(scene: SceneSpec) -> str:
    """Render a scene as a config [scene] section with explicit boxes, so a
    failing case can be replayed from its config file."""
    lines = ["[scene]",
             f"extent = {scene.extent!r}",
             f"ground_z = {scene.ground_z!r}",
             f"seed = {scene.seed}"]
    if len(scene.boxes):
        lines.append("boxes =")
        b = scene.boxes
        for i in range(len(b)):
            vals = [*b.centers[i], *b.sizes[i], b.yaws[i]]
            row = " ".join(repr(float(v)) for v in vals)
            lines.append(f"    {row} {int(b.classes[i])}")
    return "\n".join(lines) + "\n"


def load_config(path) -> RunConfig:
    """Parse and validate a config file into a RunConfig.

    Raises ConfigError with section/key (or line) diagnostics on any
    problem.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh, source=str(path))
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    for section in parser.sections():
        if section not in _KNOWN_KEYS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key in parser[section]:
            if key not in _KNOWN_KEYS[section]:
                raise ConfigError(f"{path}: unknown key '{key}' in [{section}]")

    rig_s = _Section(parser, "rig")
    bev_s = _Section(parser, "bev")
    bins_s = _Section(parser, "bins")
    pool_s = _Section(parser, "pool")
    paste_s = _Section(parser, "paste")
    scene_s = _Section(parser, "scene")
    loss_s = _Section(parser, "loss")
    out_s = _Section(parser, "output")

    try:
        rig = ring_rig(
            n_cameras=rig_s.get_int("cameras", 6),
            image_size=(rig_s.get_int("image_width", 704), rig_s.get_int("image_height", 256)),
            stride=rig_s.get_int("stride", 16),
            fx=rig_s.get_float("fx", 350.0),
            fy=rig_s.get_float("fy", 350.0),
            height=rig_s.get_float("height", 1.5),
            radius=rig_s.get_float("radius", 0.0),
            yaw_offset=rig_s.get_float("yaw_offset", 0.0),
        )
        bev = BevConfig(
            x_range=(bev_s.get_float("x_min", -51.2), bev_s.get_float("x_max", 51.2)),
            y_range=(bev_s.get_float("y_min", -51.2), bev_s.get_float("y_max", 51.2)),
            z_range=(bev_s.get_float("z_min", -5.0), bev_s.get_float("z_max", 3.0)),
            pillar=(bev_s.get_float("pillar_x", 0.8), bev_s.get_float("pillar_y", 0.8),
                    bev_s.get_float("pillar_z", 8.0)),
            channels=bev_s.get_int("channels", 8),
        )
        bins = DepthBins(
            min_depth=bins_s.get_float("min_depth", 1.0),
            bin_width=bins_s.get_float("bin_width", 1.0),
            n_bins=bins_s.get_int("n_bins", 59),
        )
        pool = PoolConfig(
            bev=bev,
            t_depth=pool_s.get_float("t_depth", 0.0085),
            t_semantic=pool_s.get_float("t_semantic", 0.25),
        )
        loss = LossWeights(
            lambda_semantic=loss_s.get_float("lambda_semantic", 1.0),
            lambda_depth=loss_s.get_float("lambda_depth", 1.0),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    boxes_raw = scene_s.get_str("boxes", "")
    scene_boxes = _parse_boxes(boxes_raw) if boxes_raw.strip() else None

    return RunConfig(
        rig=rig,
        bev=bev,
        bins=bins,
        pool=pool,
        paste_enabled=paste_s.get_bool("enabled", False),
        n_p=paste_s.get_float("n_p", 1.0),
        extra_bda=paste_s.get_bool("extra_bda", True),
        scene_seed=scene_s.get_int("seed", 0),
        scene_n_objects=scene_s.get_int("n_objects", 8),
        scene_extent=scene_s.get_float("extent", 60.0),
        scene_ground_z=scene_s.get_float("ground_z", 0.0),
        scene_boxes=scene_boxes,
        n_cloud_points=scene_s.get_int("n_cloud_points", 0),
        bg_ratio=scene_s.get_float("bg_ratio", 0.5),
        loss=loss,
        outdir=Path(out_s.get_str("dir", "sembev_out")),
    )
