"""Layer-based hologram synthesis from RGB-D frames.

Three generators share one far-to-near recurrence. Starting at the farthest
layer, each step propagates the running wavefield ``-dz`` toward the
hologram, blocks it with an occlusion mask and stamps in the image content of
the current layer:

* ``sm``: silhouette masking. The propagated field is blocked wherever an
  object at or behind the current layer sits.
* ``adv``: bidirectional masking. Content and blocking both use a two-layer
  band around the current layer.
* ``ap``: ``adv`` followed by an amplitude projection sweep that walks the
  hologram back out to each layer and replaces the amplitude inside the
  layer's band with the target image, keeping the propagated phase.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .fields import (
    ComplexField,
    LayerPhaseMode,
    OpticalConfig,
    RgbdFrame,
    complement,
    hadamard,
    phase_of,
)
from .layering import LayerGrid, frame_layer_grid, layer_index_map
from .propagation import DEFAULT_OPTIONS, PropagationOptions, propagate


class Method(str, Enum):
    SM = "sm"
    ADV = "adv"
    AP = "ap"


class StateError(ValueError):
    """A field is not on the plane an operation expects."""


@dataclass
class LayerStep:
    """Snapshot handed to an observer after each layer update.

    ``propagated`` is the incoming field after the ``-dz`` hop (``None`` for
    the farthest layer of a generation pass), ``mask`` is the region written
    with image content and ``blocked`` the region where propagated light was
    discarded.
    """

    stage: str
    layer: int
    plane_z: float
    propagated: Optional[ComplexField]
    mask: np.ndarray
    blocked: np.ndarray
    result: ComplexField


Observer = Callable[[LayerStep], None]


def layer_phase(grid: LayerGrid, i: int, config: OpticalConfig, channel: int) -> complex:
    z = grid.z_of(i)
    mode = config.layer_phase_mode
    if mode is LayerPhaseMode.ZERO:
        return 1.0 + 0j
    if mode is LayerPhaseMode.LITERAL_Z:
        return complex(np.exp(-1j * z))
    k = 2 * np.pi / config.wavelengths[channel]
    return complex(np.exp(-1j * k * z))


class _Layers:
    """Per-frame masks, computed once from the band index map."""

    def __init__(self, frame: RgbdFrame, grid: LayerGrid):
        self.grid = grid
        self.index = layer_index_map(frame, grid)
        self.validity = frame.validity

    def band(self, i: int, k: int = 1) -> np.ndarray:
        return (self.index >= i) & (self.index < i + k)

    def behind(self, i: int, k: int = 1) -> np.ndarray:
        return self.validity & (self.index < i + k)


def _to_hologram_plane(u: ComplexField, config, channel, options) -> ComplexField:
    if u.plane_z == 0:
        return u
    out = propagate(u, -u.plane_z, config, channel, options)
    return ComplexField(out.data, 0.0)


def _layered(
    frame: RgbdFrame,
    channel: int,
    k: int,
    bidirectional: bool,
    options: PropagationOptions,
    observer: Observer | None,
) -> ComplexField:
    config = frame.config
    grid = frame_layer_grid(frame)
    layers = _Layers(frame, grid)
    image = frame.intensity[channel]

    def stamp(i: int) -> ComplexField:
        content = image * layers.band(i, k) * layer_phase(grid, i, config, channel)
        return ComplexField(content, grid.z_of(i))

    u = stamp(0)
    if observer is not None:
        mask = layers.band(0, k)
        observer(LayerStep("generate", 0, u.plane_z, None, mask, np.zeros_like(mask), u))
    for i in range(1, grid.n_layers):
        moved = propagate(u, -grid.delta_z, config, channel, options)
        if bidirectional:
            blocked = layers.band(i, k)
        else:
            blocked = layers.behind(i, k)
        kept = hadamard(moved, complement(blocked))
        u = ComplexField(stamp(i).data + kept.data, grid.z_of(i))
        if observer is not None:
            observer(LayerStep("generate", i, u.plane_z, moved, layers.band(i, k), blocked, u))
    return _to_hologram_plane(u, config, channel, options)


def generate_smlbm(
    frame: RgbdFrame,
    channel: int,
    options: PropagationOptions = DEFAULT_OPTIONS,
    observer: Observer | None = None,
) -> ComplexField:
    """Silhouette-masking layer-based hologram of one color channel.

    At layer ``i`` propagated light is discarded on every object pixel at or
    behind layer ``i``; only light passing beside nearer geometry or empty
    space survives.
    """
    return _layered(frame, channel, 1, False, options, observer)


def generate_advlbm(
    frame: RgbdFrame,
    channel: int,
    options: PropagationOptions = DEFAULT_OPTIONS,
    observer: Observer | None = None,
) -> ComplexField:
    """Bidirectional-masking layer-based hologram (two-layer bands)."""
    return _layered(frame, channel, 2, True, options, observer)


def amplitude_projection_refine(
    hologram: ComplexField,
    frame: RgbdFrame,
    channel: int,
    options: PropagationOptions = DEFAULT_OPTIONS,
    observer: Observer | None = None,
    sweeps: int | None = None,
) -> ComplexField:
    """Project the target image onto the wavefield amplitude at every layer.

    The hologram is propagated out to the farthest layer; there and at each
    nearer layer the amplitude inside the layer's band is replaced by the
    image while the phase of the propagated field is kept. The result is
    brought back to the hologram plane.
    """
    if hologram.plane_z != 0:
        raise StateError(f"hologram must be on plane 0, got {hologram.plane_z}")
    config = frame.config
    grid = frame_layer_grid(frame)
    layers = _Layers(frame, grid)
    image = frame.intensity[channel]
    sweeps = config.projection_sweeps if sweeps is None else sweeps

    def project(moved: ComplexField, i: int) -> ComplexField:
        mask = layers.band(i)
        projected = np.where(mask, image * np.exp(1j * phase_of(moved)), moved.data)
        u = ComplexField(projected, grid.z_of(i))
        if observer is not None:
            observer(LayerStep("project", i, u.plane_z, moved, mask, mask, u))
        return u

    h = hologram
    for _ in range(sweeps):
        u = project(propagate(h, grid.z_of(0), config, channel, options), 0)
        for i in range(1, grid.n_layers):
            u = project(propagate(u, -grid.delta_z, config, channel, options), i)
        h = _to_hologram_plane(u, config, channel, options)
    return h


def generate_aplbm(
    frame: RgbdFrame,
    channel: int,
    options: PropagationOptions = DEFAULT_OPTIONS,
    observer: Observer | None = None,
) -> ComplexField:
    hologram = generate_advlbm(frame, channel, options, observer)
    return amplitude_projection_refine(hologram, frame, channel, options, observer)


GENERATORS = {
    Method.SM: generate_smlbm,
    Method.ADV: generate_advlbm,
    Method.AP: generate_aplbm,
}


@dataclass
class HologramSample:
    """Per-channel holograms of one frame plus provenance."""

    holograms: list[ComplexField]
    method: Method
    config: OpticalConfig
    n_layers: int
    seed: int | None = None
    sample_id: str | None = None
    created: float = field(default_factory=time.time)

    def stacked(self) -> np.ndarray:
        return np.stack([h.data for h in self.holograms])


def generate_color(
    frame: RgbdFrame,
    method: Method | str,
    options: PropagationOptions = DEFAULT_OPTIONS,
    workers: int = 1,
    seed: int | None = None,
    sample_id: str | None = None,
) -> HologramSample:
    """Run one generator independently on every wavelength channel."""
    method = Method(method)
    generator = GENERATORS[method]
    channels = range(frame.config.n_channels)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            holograms = list(pool.map(lambda c: generator(frame, c, options), channels))
    else:
        holograms = [generator(frame, c, options) for c in channels]
    grid = frame_layer_grid(frame)
    return HologramSample(holograms, method, frame.config, grid.n_layers, seed, sample_id)
