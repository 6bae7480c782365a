"""Angular spectrum propagation between parallel planes."""

from __future__ import annotations

import functools
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.fft as sfft

from .fields import ComplexField, ConfigError, DimensionError, OpticalConfig, compute_z_max

PAD_FACTOR = 2
RINGING_EPS = 1e-6


class Padding(str, Enum):
    ZERO = "zero"
    EDGE = "edge"
    # no padding; circular convolution on the input grid
    NONE = "none"


@dataclass(frozen=True)
class PropagationOptions:
    padding: Padding = Padding.ZERO
    band_limited: bool = True
    ringing_correction: bool = False
    fft_shift: bool = True

    def __post_init__(self):
        object.__setattr__(self, "padding", Padding(self.padding))


DEFAULT_OPTIONS = PropagationOptions()


@dataclass(frozen=True)
class TransferFunction:
    data: np.ndarray
    z: float
    wavelength: float
    pixel_pitch: float
    centered: bool

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


def padded_shape(shape: tuple[int, int], options: PropagationOptions) -> tuple[int, int]:
    if options.padding is Padding.NONE:
        return tuple(shape)
    return tuple(PAD_FACTOR * n for n in shape)


def frequency_axis(n: int, pitch: float, centered: bool) -> np.ndarray:
    """Spatial frequencies ``m / (n * pitch)`` for ``m`` in ``[-n/2, n/2)``."""
    freqs = sfft.fftfreq(n, d=pitch)
    return sfft.fftshift(freqs) if centered else freqs


@functools.lru_cache(maxsize=32)
def _transfer_cached(
    shape: tuple[int, int],
    wavelength: float,
    pitch: float,
    z: float,
    band_limited: bool,
    centered: bool,
) -> np.ndarray:
    ny, nx = shape
    fy = frequency_axis(ny, pitch, centered)[:, None]
    fx = frequency_axis(nx, pitch, centered)[None, :]
    radicand = 1.0 / wavelength**2 - fx**2 - fy**2
    propagating = radicand >= 0
    kz = np.sqrt(np.where(propagating, radicand, 0.0))
    h = np.where(propagating, np.exp(2j * np.pi * z * kz), 0)
    if band_limited:
        # local-frequency bound per axis, rectangular window
        fx_lim = 1.0 / (wavelength * np.sqrt((2 * z / (nx * pitch)) ** 2 + 1))
        fy_lim = 1.0 / (wavelength * np.sqrt((2 * z / (ny * pitch)) ** 2 + 1))
        h = np.where((np.abs(fx) <= fx_lim) & (np.abs(fy) <= fy_lim), h, 0)
    h = h.astype(np.complex128)
    h.flags.writeable = False
    return h


def make_transfer_function(
    config: OpticalConfig,
    channel: int,
    shape: tuple[int, int],
    z: float,
    options: PropagationOptions = DEFAULT_OPTIONS,
) -> TransferFunction:
    """Angular spectrum kernel ``exp(2 pi i z sqrt(1/lambda^2 - fx^2 - fy^2))``.

    Evanescent frequencies are zeroed. With ``options.band_limited`` the
    kernel is further restricted to ``|f| <= 1 / (lambda sqrt((2 df z)^2 + 1))``
    along each axis. The grid is centered (DC in the middle) when
    ``options.fft_shift`` is set, otherwise in FFT order.
    """
    wavelength = config.wavelengths[channel]
    if wavelength <= 0:
        raise ConfigError("wavelength must be positive")
    shape = tuple(int(n) for n in shape)
    if options.padding is not Padding.NONE and any(n % 2 for n in shape):
        raise DimensionError(f"padded shape must be even, got {shape}")
    if not config.allow_beyond_zmax and abs(z) > compute_z_max(config, channel):
        warnings.warn(
            f"propagation distance {z:g} m exceeds z_max for channel {channel}",
            stacklevel=2,
        )
    data = _transfer_cached(
        shape, wavelength, config.pixel_pitch, float(z), options.band_limited, options.fft_shift
    )
    return TransferFunction(data, float(z), wavelength, config.pixel_pitch, options.fft_shift)


def apply_padding(data: np.ndarray, options: PropagationOptions = DEFAULT_OPTIONS) -> np.ndarray:
    """Center ``data`` in a grid twice as large, filled with zeros or edge values."""
    if options.padding is Padding.NONE:
        return np.asarray(data)
    ny, nx = np.shape(data)
    py, px = (PAD_FACTOR - 1) * ny, (PAD_FACTOR - 1) * nx
    pad = ((py // 2, py - py // 2), (px // 2, px - px // 2))
    mode = "constant" if options.padding is Padding.ZERO else "edge"
    return np.pad(data, pad, mode=mode)


def crop(data: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Inverse of :func:`apply_padding`: take the centered ``shape`` window."""
    ny, nx = shape
    py, px = data.shape[0] - ny, data.shape[1] - nx
    return data[py // 2 : py // 2 + ny, px // 2 : px // 2 + nx]


def apply_transfer(data: np.ndarray, h: TransferFunction) -> np.ndarray:
    """Filter an already padded grid by ``h`` in the frequency domain."""
    if data.shape != h.shape:
        raise DimensionError(f"grid {data.shape} does not match transfer function {h.shape}")
    if h.centered:
        spectrum = sfft.fftshift(sfft.fft2(data))
        return sfft.ifft2(sfft.ifftshift(spectrum * h.data))
    return sfft.ifft2(sfft.fft2(data) * h.data)


def _propagate_array(data, z, config, channel, options):
    shape = data.shape
    padded = apply_padding(data, options)
    h = make_transfer_function(config, channel, padded.shape, z, options)
    return crop(apply_transfer(padded, h), shape)


def propagate(
    field: ComplexField,
    z: float,
    config: OpticalConfig,
    channel: int,
    options: PropagationOptions = DEFAULT_OPTIONS,
) -> ComplexField:
    """Propagate ``field`` by ``z`` meters (positive is toward the scene)."""
    if field.shape != config.shape:
        raise DimensionError(f"field shape {field.shape} != config {config.shape}")
    out = _propagate_array(field.data, z, config, channel, options)
    if options.ringing_correction:
        ref = ringing_reference(config, channel, float(z), options)
        # polar division keeps x / x == 1 exact
        out = (np.abs(out) / np.abs(ref)) * np.exp(1j * (np.angle(out) - np.angle(ref)))
    return ComplexField(out, field.plane_z + z)


@functools.lru_cache(maxsize=32)
def _ringing_reference_cached(config, channel, z, options):
    ref = _propagate_array(np.ones(config.shape, np.complex128), z, config, channel, options)
    # leave the numerator unchanged where the reference nearly vanishes
    ref = np.where(np.abs(ref) < RINGING_EPS, 1.0, ref)
    ref.flags.writeable = False
    return ref


def ringing_reference(config, channel, z, options=DEFAULT_OPTIONS) -> np.ndarray:
    """Propagated uniform field used to divide out boundary ringing."""
    return _ringing_reference_cached(config, channel, float(z), options)
