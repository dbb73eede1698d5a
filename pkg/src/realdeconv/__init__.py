"""Non-blind deconvolution with camera-pipeline-aware data terms."""

from .energy import EnergyConfig, EnergyState, apply_mutation, delta_energy, total_energy
from .forward import DegradationParams, degrade
from .imaging import convolve_valid, load_image, load_kernel, save_image
from .solver import SolverConfig, SolverReport, solve

__version__ = "0.1.0"
