"""Procedural RGB-D scenes.

Flat 2D shapes stand in for rendered meshes: each object gets a footprint,
a texture and a single depth, and overlapping footprints are resolved with a
z-buffer where the object nearest the hologram wins.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .fields import ConfigError, OpticalConfig, RgbdFrame, compute_z_max

__all__ = ["SceneParams", "ParamsError", "compute_z_max", "synthesize_scene", "render_objects"]

SHAPES = ("rectangle", "ellipse", "textured-patch")
TEXTURE_FLOOR = 0.2


class ParamsError(ValueError):
    """Scene parameters are inconsistent."""


@dataclass(frozen=True)
class SceneParams:
    grid_rows: int = 3
    grid_cols: int = 3
    n_objects: int = 6
    scale_range: tuple[float, float] = (0.20, 0.30)
    # (near, far] in meters; None means (0, depth_range]
    z_range: tuple[float, float] | None = None
    shapes: tuple[str, ...] = SHAPES
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "scale_range", tuple(float(s) for s in self.scale_range))
        object.__setattr__(self, "shapes", tuple(self.shapes))
        if self.z_range is not None:
            object.__setattr__(self, "z_range", tuple(float(z) for z in self.z_range))
        lo, hi = self.scale_range
        if not 0 < lo <= hi < 1:
            raise ParamsError(f"scale_range {self.scale_range} must lie inside (0, 1)")
        if self.grid_rows < 1 or self.grid_cols < 1:
            raise ParamsError("grid must have at least one cell")
        if not 0 <= self.n_objects <= self.grid_rows * self.grid_cols:
            raise ParamsError(
                f"{self.n_objects} objects do not fit a {self.grid_rows}x{self.grid_cols} grid"
            )
        unknown = set(self.shapes) - set(SHAPES)
        if unknown or not self.shapes:
            raise ParamsError(f"unknown shapes {sorted(unknown)}")
        if self.z_range is not None and not 0 <= self.z_range[0] <= self.z_range[1]:
            raise ParamsError(f"z_range {self.z_range} must satisfy 0 <= near <= far")

    def replace(self, **changes) -> SceneParams:
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["scale_range"] = list(self.scale_range)
        d["z_range"] = None if self.z_range is None else list(self.z_range)
        d["shapes"] = list(self.shapes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> SceneParams:
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ParamsError(f"unknown scene keys: {sorted(unknown)}")
        d = dict(d)
        for key in ("scale_range", "z_range", "shapes"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass
class SceneObject:
    footprint: np.ndarray
    colors: np.ndarray
    depth: float


def _sample_depth(rng: np.random.Generator, near: float, far: float) -> float:
    # uniform on (near, far]
    return far - rng.uniform(0.0, far - near)


def _texture(rng, shape, yy, xx, n_channels, textured: bool) -> np.ndarray:
    base = rng.uniform(TEXTURE_FLOOR, 1.0, size=n_channels)
    if textured:
        fy, fx = rng.uniform(0.02, 0.15, size=2)
        ph = rng.uniform(0, 2 * np.pi, size=n_channels)
        pattern = 0.5 + 0.5 * np.sin(2 * np.pi * (fy * yy + fx * xx)[None] + ph[:, None, None])
    elif rng.uniform() < 0.5:
        # linear gradient across the object
        angle = rng.uniform(0, 2 * np.pi)
        g = np.cos(angle) * xx + np.sin(angle) * yy
        g = (g - g.min()) / max(np.ptp(g), 1e-12)
        pattern = np.broadcast_to(g, (n_channels,) + shape)
    else:
        pattern = np.ones((n_channels,) + shape)
    top = base[:, None, None]
    return TEXTURE_FLOOR + (top - TEXTURE_FLOOR) * pattern


def _make_object(rng, config: OpticalConfig, params: SceneParams, center, near, far):
    h, w = config.shape
    size = rng.uniform(*params.scale_range) * w
    kind = params.shapes[rng.integers(len(params.shapes))]
    angle = rng.uniform(-2 * np.pi, 2 * np.pi)
    aspect = rng.uniform(0.6, 1.0)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dy, dx = yy - center[0], xx - center[1]
    # rotate into the object frame
    u = np.cos(angle) * dx + np.sin(angle) * dy
    v = -np.sin(angle) * dx + np.cos(angle) * dy
    a, b = size / 2, aspect * size / 2
    if kind == "ellipse":
        footprint = (u / a) ** 2 + (v / b) ** 2 <= 1
    else:
        footprint = (np.abs(u) <= a) & (np.abs(v) <= b)
    colors = _texture(rng, (h, w), yy, xx, config.n_channels, kind == "textured-patch")
    return SceneObject(footprint, colors, _sample_depth(rng, near, far))


def render_objects(objects: list[SceneObject], config: OpticalConfig) -> RgbdFrame:
    """Orthographic z-buffer composite; nearest depth wins on overlap."""
    h, w = config.shape
    zbuf = np.full((h, w), np.inf)
    intensity = np.zeros((config.n_channels, h, w))
    for obj in objects:
        win = obj.footprint & (obj.depth < zbuf)
        zbuf[win] = obj.depth
        intensity[:, win] = obj.colors[:, win]
    validity = np.isfinite(zbuf)
    depth = np.where(validity, zbuf / config.depth_range, 1.0)
    return RgbdFrame(np.clip(intensity, 0, 1), np.clip(depth, 0, 1), validity, config)


def synthesize_scene(params: SceneParams, config: OpticalConfig) -> RgbdFrame:
    """Random scene fully determined by ``params.seed``."""
    near, far = params.z_range if params.z_range is not None else (0.0, config.depth_range)
    if far > config.depth_range:
        raise ConfigError(f"z_range far end {far:g} m exceeds depth_range {config.depth_range:g} m")
    rng = np.random.default_rng(params.seed)
    h, w = config.shape
    cell_h, cell_w = h / params.grid_rows, w / params.grid_cols
    n_cells = params.grid_rows * params.grid_cols
    cells = rng.choice(n_cells, size=params.n_objects, replace=False)
    objects = []
    for cell in cells:
        r, c = divmod(int(cell), params.grid_cols)
        jitter = rng.uniform(-0.25, 0.25, size=2)
        center = ((r + 0.5 + jitter[0]) * cell_h, (c + 0.5 + jitter[1]) * cell_w)
        objects.append(_make_object(rng, config, params, center, near, far))
    return render_objects(objects, config)
