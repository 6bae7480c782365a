"""Depth discretization and per-layer occupancy masks.

Layer 0 is the farthest plane, at the scene's maximum depth; layer
``n - 1`` is the nearest. Layer ``i`` owns the half-open depth band
``(max_depth - (i + 1) dz, max_depth - i dz]``, and the nearest band is
closed at zero so that every valid pixel falls in exactly one layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import OpticalConfig, RgbdFrame


class SceneError(ValueError):
    """The scene has no usable content."""


@dataclass(frozen=True)
class LayerGrid:
    n_layers: int
    delta_z: float
    max_depth: float

    def z_of(self, i: int) -> float:
        self._check_index(i)
        return self.max_depth - i * self.delta_z

    def z_values(self) -> np.ndarray:
        return self.max_depth - np.arange(self.n_layers) * self.delta_z

    def _check_index(self, i: int) -> None:
        if not 0 <= i < self.n_layers:
            raise IndexError(f"layer {i} outside [0, {self.n_layers})")


def build_layer_grid(depth, config: OpticalConfig, validity=None, n_layers: int | None = None) -> LayerGrid:
    """Layer grid spanning the deepest valid pixel of ``depth`` (meters)."""
    depth = np.asarray(depth, dtype=np.float64)
    validity = np.ones(depth.shape, bool) if validity is None else np.asarray(validity, bool)
    if not validity.any():
        raise SceneError("validity mask is empty")
    n = config.n_layers if n_layers is None else int(n_layers)
    max_depth = float(depth[validity].max())
    if max_depth == 0:
        # everything sits on the hologram plane; one layer, nominal spacing
        return LayerGrid(1, config.depth_range / n, 0.0)
    return LayerGrid(n, max_depth / n, max_depth)


def frame_layer_grid(frame: RgbdFrame, n_layers: int | None = None) -> LayerGrid:
    return build_layer_grid(frame.depth_m, frame.config, frame.validity, n_layers)


def _band_index(depth: np.ndarray, grid: LayerGrid) -> np.ndarray:
    """Layer index owning each depth value.

    Pixel ``p`` belongs to layer ``j`` when ``t_j >= depth[p] > t_{j+1}`` with
    ``t_j = max_depth - j dz``; the far end is open above ``t_0`` and the
    near end is closed below ``t_n`` so the bands tile every depth.
    """
    n = grid.n_layers
    if n == 1:
        return np.zeros(np.shape(depth), dtype=np.int64)
    # t_1 .. t_{n-1}, ascending
    inner = (grid.max_depth - np.arange(1, n) * grid.delta_z)[::-1]
    below = np.searchsorted(inner, depth, side="left")
    return (n - 1) - below


def band_mask(depth, grid: LayerGrid, i: int, k: int = 1, validity=None) -> np.ndarray:
    """Pixels whose depth lies in bands ``i .. i + k - 1``."""
    grid._check_index(i)
    if k < 1:
        raise ValueError("band width k must be >= 1")
    depth = np.asarray(depth, dtype=np.float64)
    idx = _band_index(depth, grid)
    mask = (idx >= i) & (idx < i + k)
    if validity is not None:
        mask &= np.asarray(validity, bool)
    return mask


def one_sided_mask(depth, grid: LayerGrid, i: int, k: int = 1, validity=None) -> np.ndarray:
    """Pixels at or behind band ``i + k - 1`` (no near-side bound)."""
    grid._check_index(i)
    if k < 1:
        raise ValueError("band width k must be >= 1")
    depth = np.asarray(depth, dtype=np.float64)
    idx = _band_index(depth, grid)
    mask = idx < i + k
    if validity is not None:
        mask &= np.asarray(validity, bool)
    return mask


def frame_band_mask(frame: RgbdFrame, grid: LayerGrid, i: int, k: int = 1) -> np.ndarray:
    return band_mask(frame.depth_m, grid, i, k, frame.validity)


def frame_one_sided_mask(frame: RgbdFrame, grid: LayerGrid, i: int, k: int = 1) -> np.ndarray:
    return one_sided_mask(frame.depth_m, grid, i, k, frame.validity)


def layer_index_map(frame: RgbdFrame, grid: LayerGrid) -> np.ndarray:
    """Band index of every valid pixel, -1 for empty pixels."""
    idx = _band_index(frame.depth_m, grid)
    return np.where(frame.validity, idx, -1)
