"""Numerical reconstruction, focal image projection and image metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .fields import ComplexField, DimensionError, OpticalConfig, RgbdFrame, amplitude_of
from .generation import HologramSample
from .layering import frame_layer_grid, layer_index_map
from .propagation import DEFAULT_OPTIONS, PropagationOptions, propagate

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def reconstruct_at(
    hologram: ComplexField,
    z: float,
    config: OpticalConfig,
    channel: int,
    options: PropagationOptions = DEFAULT_OPTIONS,
) -> np.ndarray:
    """Amplitude of the hologram propagated ``z`` meters into the scene."""
    if z == 0:
        return amplitude_of(hologram)
    return amplitude_of(propagate(hologram, z, config, channel, options))


def focal_stack(hologram, z_list, config, channel, options=DEFAULT_OPTIONS) -> list[np.ndarray]:
    return [reconstruct_at(hologram, z, config, channel, options) for z in z_list]


def focal_image_projection(
    hologram: ComplexField,
    frame: RgbdFrame,
    n_fip_layers: int | None,
    channel: int,
    options: PropagationOptions = DEFAULT_OPTIONS,
) -> np.ndarray:
    """Composite of in-focus amplitudes.

    The scene depth is cut into ``n_fip_layers`` bands; each valid pixel
    takes its amplitude from the reconstruction at its own band's plane.
    Empty pixels are 0.
    """
    if n_fip_layers is not None and n_fip_layers < 1:
        raise ValueError("n_fip_layers must be >= 1")
    grid = frame_layer_grid(frame, n_fip_layers)
    index = layer_index_map(frame, grid)
    fip = np.zeros(frame.config.shape)
    for i in np.unique(index[index >= 0]):
        mask = index == i
        fip[mask] = reconstruct_at(hologram, grid.z_of(int(i)), frame.config, channel, options)[mask]
    return fip


def psnr(a, b, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``math.inf`` for identical inputs."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return math.inf
    return float(10 * np.log10(peak**2 / mse))


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r**2) / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(a, b, data_range: float = 1.0) -> float:
    """Mean structural similarity over all fully covered 11x11 windows.

    Gaussian window with sigma 1.5, K1 = 0.01, K2 = 0.03.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim != 2 or min(a.shape) < SSIM_WINDOW:
        raise DimensionError(f"image {a.shape} smaller than the {SSIM_WINDOW}px window")
    w = _gaussian_window()

    def filt(x):
        return signal.fftconvolve(x, w, mode="valid")

    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a**2
    var_b = filt(b * b) - mu_b**2
    cov = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


@dataclass
class MetricsRecord:
    psnr_fip: list[float]
    ssim_fip: list[float]
    method: str
    n_fip_layers: int
    config: OpticalConfig
    sample_id: str | None = None
    fip: list[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def psnr_mean(self) -> float:
        return float(np.mean(self.psnr_fip))

    @property
    def ssim_mean(self) -> float:
        return float(np.mean(self.ssim_fip))

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "method": self.method,
            "n_fip_layers": self.n_fip_layers,
            "psnr_fip": [format_metric(v) for v in self.psnr_fip],
            "psnr_fip_mean": format_metric(self.psnr_mean),
            "ssim_fip": list(self.ssim_fip),
            "ssim_fip_mean": self.ssim_mean,
            "config_hash": self.config.config_hash(),
        }


def format_metric(value: float):
    """JSON/CSV-safe metric: infinities become the string ``"inf"``."""
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return float(value)


def evaluate_sample(
    sample: HologramSample,
    frame: RgbdFrame,
    n_fip_layers: int | None = None,
    options: PropagationOptions = DEFAULT_OPTIONS,
    keep_fip: bool = False,
) -> MetricsRecord:
    """Score every channel's FIP against the frame intensities."""
    n_fip = sample.n_layers if n_fip_layers is None else n_fip_layers
    psnrs, ssims, fips = [], [], []
    for channel, hologram in enumerate(sample.holograms):
        fip = focal_image_projection(hologram, frame, n_fip, channel, options)
        target = frame.intensity[channel]
        psnrs.append(psnr(fip, target))
        ssims.append(ssim(fip, target))
        if keep_fip:
            fips.append(fip)
    return MetricsRecord(
        psnrs, ssims, _method_tag(sample.method), frame_layer_grid(frame, n_fip).n_layers,
        sample.config, sample.sample_id, fips,
    )


def _method_tag(method) -> str:
    return getattr(method, "value", str(method))
