"""Layer-based computer-generated holography with amplitude projection."""

from .fields import (
    ComplexField,
    OpticalConfig,
    RgbdFrame,
    amplitude_of,
    complement,
    compute_z_max,
    from_amplitude_phase,
    hadamard,
    phase_of,
)
from .generation import (
    HologramSample,
    Method,
    amplitude_projection_refine,
    generate_advlbm,
    generate_aplbm,
    generate_color,
    generate_smlbm,
)
from .propagation import PropagationOptions, propagate
from .quality import evaluate_sample, focal_image_projection, psnr, ssim
from .scenes import SceneParams, synthesize_scene

__version__ = "0.1.0"
