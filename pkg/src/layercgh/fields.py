"""Value types and elementwise algebra for complex wavefields.

Scalar images and binary masks are plain 2D numpy arrays (``float64`` and
``bool``); only the complex wavefield carries extra state (the plane it lives
on), so it is the one wrapped in a dataclass.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class DimensionError(ValueError):
    """Array shapes do not agree."""


class DomainError(ValueError):
    """A value lies outside the domain of an operation."""


class ConfigError(ValueError):
    """Invalid optical or run configuration."""


@dataclass(frozen=True)
class ComplexField:
    """Monochromatic complex wavefront sampled on a regular grid.

    ``data`` has shape ``(height, width)`` and dtype ``complex128``.
    ``plane_z`` is the distance in meters from the hologram plane; positive
    values point into the scene.
    """

    data: np.ndarray
    plane_z: float = 0.0

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.complex128, copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionError(f"field must be a non-empty 2D grid, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DomainError("field contains NaN or Inf")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "plane_z", float(self.plane_z))

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def with_data(self, data: np.ndarray, plane_z: float | None = None) -> ComplexField:
        return ComplexField(data, self.plane_z if plane_z is None else plane_z)

    def __add__(self, other: ComplexField) -> ComplexField:
        _check_shapes(self.data, other.data)
        return ComplexField(self.data + other.data, self.plane_z)

    def __mul__(self, scalar: complex) -> ComplexField:
        return ComplexField(self.data * scalar, self.plane_z)

    __rmul__ = __mul__


def _check_shapes(*arrays: np.ndarray) -> None:
    shapes = {np.shape(a) for a in arrays}
    if len(shapes) != 1:
        raise DimensionError(f"shape mismatch: {sorted(shapes)}")


def as_mask(mask) -> np.ndarray:
    return np.asarray(mask, dtype=bool)


def hadamard(field: ComplexField, mask) -> ComplexField:
    """Keep ``field`` where ``mask`` is set and zero it elsewhere."""
    mask = as_mask(mask)
    _check_shapes(field.data, mask)
    return ComplexField(np.where(mask, field.data, 0), field.plane_z)


def complement(mask) -> np.ndarray:
    return ~as_mask(mask)


def amplitude_of(field: ComplexField | np.ndarray) -> np.ndarray:
    data = field.data if isinstance(field, ComplexField) else np.asarray(field)
    return np.abs(data)


def phase_of(field: ComplexField | np.ndarray) -> np.ndarray:
    """Argument in (-pi, pi]; zero-valued samples map to 0."""
    data = field.data if isinstance(field, ComplexField) else np.asarray(field)
    phase = np.angle(data)
    # angle(-x - 0j) is -pi; fold it onto the closed end of the interval
    return np.where(phase == -np.pi, np.pi, phase)


def from_amplitude_phase(amp, phase, plane_z: float = 0.0) -> ComplexField:
    amp = np.asarray(amp, dtype=np.float64)
    phase = np.asarray(phase, dtype=np.float64)
    _check_shapes(amp, phase)
    if np.any(amp < 0):
        raise DomainError("amplitude must be non-negative")
    return ComplexField(amp * np.exp(1j * phase), plane_z)


def wrap_phase(phase) -> np.ndarray:
    """Wrap angles onto (-pi, pi]."""
    phase = np.asarray(phase, dtype=np.float64)
    return phase - 2 * np.pi * np.ceil((phase - np.pi) / (2 * np.pi))


class LayerPhaseMode(str, Enum):
    ZERO = "zero"
    LITERAL_Z = "literal_z"
    WAVENUMBER_SCALED = "wavenumber_scaled"


DEFAULT_PIXEL_PITCH = 3.6e-6
DEFAULT_WAVELENGTHS = (638e-9, 532e-9, 450e-9)
# depth extent of the 512 x 512 volume; other resolutions scale linearly
_DEPTH_RANGE_512 = 20.3336e-3


def table_depth_range(resolution: int) -> float:
    """Published depth range for a square hologram of ``resolution`` pixels."""
    return _DEPTH_RANGE_512 * resolution / 512


def compute_z_max(config: OpticalConfig, channel: int) -> float:
    """Longest alias-free angular spectrum distance for one color channel.

    ``N * dx * sqrt(4 (dx / wavelength)^2 - 1)`` with ``N`` the larger grid
    dimension.
    """
    wavelength = config.wavelengths[channel]
    dx = config.pixel_pitch
    radicand = 4 * (dx / wavelength) ** 2 - 1
    if radicand <= 0:
        raise ConfigError(
            f"pixel pitch {dx:g} m is not larger than half the wavelength {wavelength:g} m"
        )
    n = max(config.width, config.height)
    return n * dx * math.sqrt(radicand)


@dataclass(frozen=True)
class OpticalConfig:
    width: int = 512
    height: int = 512
    pixel_pitch: float = DEFAULT_PIXEL_PITCH
    wavelengths: tuple[float, ...] = DEFAULT_WAVELENGTHS
    depth_range: float = _DEPTH_RANGE_512
    n_layers: int = 32
    layer_phase_mode: LayerPhaseMode = LayerPhaseMode.WAVENUMBER_SCALED
    allow_beyond_zmax: bool = False
    projection_sweeps: int = 1

    def __post_init__(self):
        object.__setattr__(self, "wavelengths", tuple(float(w) for w in self.wavelengths))
        object.__setattr__(self, "layer_phase_mode", LayerPhaseMode(self.layer_phase_mode))
        if self.width < 1 or self.height < 1:
            raise ConfigError("resolution must be positive")
        if self.pixel_pitch <= 0:
            raise ConfigError("pixel_pitch must be positive")
        if not self.wavelengths or any(w <= 0 for w in self.wavelengths):
            raise ConfigError("wavelengths must be positive")
        if self.depth_range <= 0:
            raise ConfigError("depth_range must be positive")
        if self.n_layers < 1:
            raise ConfigError("n_layers must be at least 1")
        if self.projection_sweeps < 1:
            raise ConfigError("projection_sweeps must be at least 1")
        if not self.allow_beyond_zmax:
            limit = self.min_z_max()
            if self.depth_range > limit:
                raise ConfigError(
                    f"depth_range {self.depth_range:g} m exceeds z_max {limit:g} m "
                    "(set allow_beyond_zmax to override)"
                )

    @classmethod
    def for_resolution(cls, resolution: int, **kwargs) -> OpticalConfig:
        kwargs.setdefault("depth_range", table_depth_range(resolution))
        return cls(width=resolution, height=resolution, **kwargs)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def n_channels(self) -> int:
        return len(self.wavelengths)

    def min_z_max(self) -> float:
        return min(compute_z_max(self, c) for c in range(self.n_channels))

    def replace(self, **changes) -> OpticalConfig:
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["wavelengths"] = list(self.wavelengths)
        d["layer_phase_mode"] = self.layer_phase_mode.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> OpticalConfig:
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown optical config keys: {sorted(unknown)}")
        return cls(**d)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class RgbdFrame:
    """Co-registered color intensities, normalized depth and validity.

    ``intensity`` has shape ``(channels, height, width)`` with values in
    [0, 1]. ``depth`` is normalized so 1 is the far end of the configured
    depth range and 0 the hologram plane.
    """

    intensity: np.ndarray
    depth: np.ndarray
    validity: np.ndarray
    config: OpticalConfig = field(default_factory=OpticalConfig)

    def __post_init__(self):
        intensity = np.array(self.intensity, dtype=np.float64)
        if intensity.ndim == 2:
            intensity = intensity[None]
        depth = np.array(self.depth, dtype=np.float64)
        validity = np.array(self.validity, dtype=bool)
        if depth.shape != validity.shape or intensity.shape[1:] != depth.shape:
            raise DimensionError(
                f"frame shapes disagree: {intensity.shape}, {depth.shape}, {validity.shape}"
            )
        if depth.shape != self.config.shape:
            raise DimensionError(f"frame shape {depth.shape} != config {self.config.shape}")
        if intensity.shape[0] != self.config.n_channels:
            raise DimensionError(
                f"{intensity.shape[0]} intensity channels for {self.config.n_channels} wavelengths"
            )
        for name, arr in (("intensity", intensity), ("depth", depth)):
            if not np.all(np.isfinite(arr)) or arr.min() < 0 or arr.max() > 1:
                raise DomainError(f"{name} must be finite and within [0, 1]")
        for arr in (intensity, depth, validity):
            arr.flags.writeable = False
        object.__setattr__(self, "intensity", intensity)
        object.__setattr__(self, "depth", depth)
        object.__setattr__(self, "validity", validity)

    @property
    def depth_m(self) -> np.ndarray:
        """Depth in meters from the hologram plane."""
        return self.depth * self.config.depth_range

    def with_config(self, config: OpticalConfig) -> RgbdFrame:
        return RgbdFrame(self.intensity, self.depth, self.validity, config)
