"""Camera-pipeline degradations: saturation, gamma, noise, quantization.

The full pipeline implemented by :func:`degrade` is::

    v = Q_q( clip01( S_c(u * k) ** (1/gamma) + n ) )

with the stages applied in this fixed order: valid convolution, saturation,
gamma compression, additive Gaussian noise, clamp to [0, 1] (sensor readout),
quantization. Any stage whose parameter is ``None`` (or ``gamma == 1``,
``sigma == 0``) is skipped.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import Optional

import numpy as np

from .imaging import convolve_valid

__all__ = [
    "DegradationParams",
    "saturate",
    "quantize",
    "round_half_away",
    "gamma_compress",
    "gamma_expand",
    "add_noise",
    "degrade",
    "DEFAULT_GAMMA",
    "REALISTIC_SIGMA",
]

DEFAULT_GAMMA = 2.2
#: sigma^2 = 5 on the 0-255 scale, expressed in [0, 1] units
REALISTIC_SIGMA = math.sqrt(5.0) / 255.0


@dataclass(frozen=True)
class DegradationParams:
    """Parameters of the forward model.

    ``c`` and ``q`` may be ``None`` to disable saturation or quantization.
    """

    c: Optional[float] = None
    q: Optional[float] = None
    gamma: float = 1.0
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.c is not None and not 0 < self.c <= 1:
            raise ValueError(f"c must be in (0, 1], got {self.c}")
        if self.q is not None and not 0 < self.q < 1:
            raise ValueError(f"q must be in (0, 1), got {self.q}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")

    def replace(self, **changes) -> "DegradationParams":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return asdict(self)


def saturate(img, c: float) -> np.ndarray:
    """Pixelwise ``min(c, img)``."""
    if not 0 < c <= 1:
        raise ValueError(f"c must be in (0, 1], got {c}")
    return np.minimum(np.asarray(img, dtype=np.float64), c)


def round_half_away(x):
    """Round to nearest integer, ties away from zero (unlike ``np.round``)."""
    x = np.asarray(x, dtype=np.float64)
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


def quantize(img, q: float) -> np.ndarray:
    """``q * round(img / q)`` with ties rounded away from zero."""
    if not 0 < q < 1:
        raise ValueError(f"q must be in (0, 1), got {q}")
    return q * round_half_away(np.asarray(img, dtype=np.float64) / q)


def gamma_compress(img, gamma: float) -> np.ndarray:
    """Apply ``x ** (1/gamma)``; negative values are clamped to 0 first."""
    x = np.maximum(np.asarray(img, dtype=np.float64), 0.0)
    if gamma == 1:
        return x
    return x ** (1.0 / gamma)


def gamma_expand(img, gamma: float) -> np.ndarray:
    """Apply ``x ** gamma``; negative values are clamped to 0 first."""
    x = np.maximum(np.asarray(img, dtype=np.float64), 0.0)
    if gamma == 1:
        return x
    return x ** gamma


def add_noise(img, sigma: float, seed: int) -> np.ndarray:
    """Add i.i.d. zero-mean Gaussian noise. The result is not clamped."""
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    img = np.asarray(img, dtype=np.float64)
    if sigma == 0:
        return img.copy()
    rng = np.random.default_rng(seed)
    return img + rng.normal(0.0, sigma, size=img.shape)


def degrade(u, k, p: DegradationParams) -> np.ndarray:
    """Simulate an observation of the latent image `u` through the camera pipeline.

    Parameters
    ----------
    u : ndarray
        Linear-space latent image on the padded domain.
    k : ndarray
        Normalized blur kernel.
    p : DegradationParams
        Stage parameters; the noise realisation is fixed by ``p.seed``.

    Returns
    -------
    ndarray
        Observation of extent ``u.shape - k.shape + 1``.

    Notes
    -----
    Noise is added after the gamma curve, an approximation of true sensor
    noise. Values are clamped to [0, 1] after noise and before quantization;
    with everything disabled the result is exactly ``convolve_valid(u, k)``.
    """
    v = convolve_valid(u, k)
    if p.c is not None:
        v = saturate(v, p.c)
    if p.gamma != 1:
        v = gamma_compress(v, p.gamma)
    if p.sigma > 0:
        v = add_noise(v, p.sigma, p.seed)
    if p.q is not None or p.sigma > 0 or p.gamma != 1 or p.c is not None:
        v = np.clip(v, 0.0, 1.0)
    if p.q is not None:
        v = quantize(v, p.q)
    return v
