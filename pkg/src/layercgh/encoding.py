"""Double-phase amplitude coding of complex holograms.

A normalized complex value ``A exp(i phi)`` with ``A <= 1`` equals the mean
of the two unit phasors at ``phi +/- arccos(A)``. The two phases are laid out
on a checkerboard: ``phi + arccos(A)`` where ``x + y`` is even, the other
where it is odd.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fields import ComplexField, ConfigError, DomainError, OpticalConfig, phase_of, wrap_phase


@dataclass(frozen=True)
class PhaseOnlyHologram:
    phase: np.ndarray
    normalization: float
    carrier_angle_deg: float = 0.0
    carrier_axis: str = "x"

    def __post_init__(self):
        if not (math.isfinite(self.normalization) and self.normalization > 0):
            raise DomainError("normalization factor must be finite and positive")


def checkerboard(shape: tuple[int, int]) -> np.ndarray:
    """True on even ``x + y`` parity."""
    yy, xx = np.indices(shape)
    return (yy + xx) % 2 == 0


def max_carrier_angle(config: OpticalConfig, channel: int) -> float:
    """Largest tilt in degrees the pixel grid can sample for this channel."""
    return math.degrees(math.asin(min(1.0, config.wavelengths[channel] / (2 * config.pixel_pitch))))


def off_axis_ramp(config: OpticalConfig, channel: int, angle_deg: float, axis: str = "x") -> np.ndarray:
    """Wrapped linear phase of a plane wave tilted by ``angle_deg``."""
    if abs(angle_deg) >= max_carrier_angle(config, channel):
        raise ConfigError(
            f"carrier angle {angle_deg} deg exceeds the sampling limit "
            f"{max_carrier_angle(config, channel):.3f} deg"
        )
    if axis not in ("x", "y"):
        raise ConfigError(f"carrier axis must be 'x' or 'y', got {axis!r}")
    step = 2 * np.pi * math.sin(math.radians(angle_deg)) * config.pixel_pitch / config.wavelengths[channel]
    yy, xx = np.indices(config.shape)
    coord = xx if axis == "x" else yy
    return wrap_phase(step * coord)


def dpac_encode(
    field: ComplexField | np.ndarray,
    carrier: np.ndarray | None = None,
    carrier_angle_deg: float = 0.0,
    carrier_axis: str = "x",
) -> PhaseOnlyHologram:
    data = field.data if isinstance(field, ComplexField) else np.asarray(field, np.complex128)
    amp = np.abs(data)
    peak = float(amp.max())
    if peak == 0:
        raise DomainError("cannot encode an all-zero field")
    amp = np.clip(amp / peak, 0.0, 1.0)
    phi = phase_of(data)
    if carrier is not None:
        phi = phi + carrier
    offset = np.arccos(amp)
    theta = np.where(checkerboard(data.shape), phi + offset, phi - offset)
    return PhaseOnlyHologram(wrap_phase(theta), peak, carrier_angle_deg, carrier_axis)


def dpac_decode(hologram: PhaseOnlyHologram) -> ComplexField:
    """Average the unit phasors of each 2x2 cell and restore the scale.

    Every pixel of a cell receives the cell average; odd edges are padded by
    replication.
    """
    phasor = np.exp(1j * hologram.phase)
    h, w = phasor.shape
    padded = np.pad(phasor, ((0, h % 2), (0, w % 2)), mode="edge")
    ph, pw = padded.shape
    cells = padded.reshape(ph // 2, 2, pw // 2, 2).mean(axis=(1, 3))
    full = np.repeat(np.repeat(cells, 2, axis=0), 2, axis=1)[:h, :w]
    return ComplexField(full * hologram.normalization)


PNG_LEVELS = 65535


def phase_to_uint16(phase: np.ndarray) -> np.ndarray:
    """Map (-pi, pi] linearly onto 0..65535: ``round((phase + pi) / 2pi * 65535)``."""
    scaled = (np.asarray(phase, np.float64) + np.pi) / (2 * np.pi) * PNG_LEVELS
    return np.clip(np.rint(scaled), 0, PNG_LEVELS).astype(np.uint16)


def uint16_to_phase(levels: np.ndarray) -> np.ndarray:
    return np.asarray(levels, np.float64) / PNG_LEVELS * 2 * np.pi - np.pi


def write_phase_png(path, hologram: PhaseOnlyHologram) -> None:
    from PIL import Image

    Image.fromarray(phase_to_uint16(hologram.phase)).save(path, format="PNG")


def read_phase_png(path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as img:
        return uint16_to_phase(np.array(img))
