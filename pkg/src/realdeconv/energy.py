"""Deconvolution energies ``E(u) = D(u; v) + lam * R(u)``.

Data terms (``b = u * k`` over valid pixels, ``v`` the observation):

===============  ==========================================================
simple           ``sum (b - v)^2``
saturation       ``sum (min(c, b) - v)^2``
quant_forward    ``sum (Q_q(b) - v)^2``
quant_convex     ``sum ((|b - v| - q/2)_+)^2``
gamma_inverse    ``sum (b - v^gamma)^2``
gamma            ``sum (b_+^(1/gamma) - v)^2``
full             ``sum ((|min(c, b)_+^(1/gamma) - v| - q/2)_+)^2``
===============  ==========================================================

Regularizers are the isotropic total variation ``tv`` (forward differences,
replicate boundary) and ``tv_gamma``, the total variation of the
gamma-compressed latent.

Two evaluation paths exist. The functions ``data_*``/``reg_*`` and
:func:`total_energy` recompute everything with vectorized numpy. The
:class:`EnergyState` keeps per-pixel caches so that :func:`delta_energy` and
:func:`apply_mutation` cost O(kernel area) through compiled per-pixel kernels;
the solver loop calls the same kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .forward import DegradationParams, gamma_compress, gamma_expand, round_half_away
from .imaging import as_kernel, convolve_valid

__all__ = [
    "DATA_TERMS",
    "REGULARIZERS",
    "LINEAR_TERMS",
    "EnergyConfig",
    "EnergyState",
    "data_simple",
    "data_saturation",
    "data_quant_forward",
    "data_quant_convex",
    "data_gamma_inverse",
    "data_gamma",
    "data_full",
    "data_term",
    "data_contributions",
    "reg_tv",
    "reg_tv_gamma",
    "regularizer",
    "total_energy",
    "delta_energy",
    "apply_mutation",
]

DATA_TERMS = ("simple", "saturation", "quant_forward", "quant_convex", "gamma_inverse", "gamma", "full")
REGULARIZERS = ("tv", "tv_gamma")
#: data terms whose latent variable lives in linear (pre-gamma) space
LINEAR_TERMS = ("gamma_inverse", "gamma", "full")

_SIMPLE, _SATURATION, _QFWD, _QCVX, _GINV, _GAMMA, _FULL = range(7)


@dataclass(frozen=True)
class EnergyConfig:
    """Selects the data term, the regularizer and the weight ``lam``.

    The terms read ``c``, ``q`` and ``gamma`` from `params`. For ``full``
    a missing ``c`` or ``q`` disables that stage (``q=None`` gives the
    saturation + gamma combination).
    """

    data_term: str = "simple"
    regularizer: str = "tv"
    lam: float = 0.0
    params: DegradationParams = field(default_factory=DegradationParams)

    def __post_init__(self):
        if self.data_term not in DATA_TERMS:
            raise ValueError(f"unknown data_term {self.data_term!r}; choose from {DATA_TERMS}")
        if self.regularizer not in REGULARIZERS:
            raise ValueError(f"unknown regularizer {self.regularizer!r}; choose from {REGULARIZERS}")
        if not self.lam >= 0:
            raise ValueError(f"lam must be non-negative, got {self.lam}")
        if self.data_term == "saturation" and self.params.c is None:
            raise ValueError("data_term 'saturation' requires params.c")
        if self.data_term in ("quant_forward", "quant_convex") and self.params.q is None:
            raise ValueError(f"data_term {self.data_term!r} requires params.q")

    @property
    def linear_latent(self) -> bool:
        """True when the latent image is meant to live in linear space."""
        return self.data_term in LINEAR_TERMS or self.regularizer == "tv_gamma"

    @property
    def label(self) -> str:
        return f"{self.data_term}+{self.regularizer}"

    def with_lam(self, lam: float) -> "EnergyConfig":
        return EnergyConfig(self.data_term, self.regularizer, lam, self.params)


# --------------------------------------------------------------------------
# vectorized full evaluation

def _sq(x):
    return float(np.sum(np.square(x)))


def data_simple(b, v) -> float:
    return _sq(np.asarray(b) - v)


def data_saturation(b, v, c: float) -> float:
    return _sq(np.minimum(c, b) - v)


def data_quant_forward(b, v, q: float) -> float:
    return _sq(q * round_half_away(np.asarray(b) / q) - v)


def data_quant_convex(b, v, q: float) -> float:
    return _sq(np.maximum(np.abs(np.asarray(b) - v) - q / 2, 0.0))


def data_gamma_inverse(b, v, gamma: float) -> float:
    return _sq(np.asarray(b) - gamma_expand(v, gamma))


def data_gamma(b, v, gamma: float) -> float:
    return _sq(gamma_compress(b, gamma) - v)


def data_full(b, v, p: DegradationParams) -> float:
    """Composite saturation, gamma and convexified quantization term."""
    s = np.asarray(b, dtype=np.float64)
    if p.c is not None:
        s = np.minimum(p.c, s)
    s = gamma_compress(s, p.gamma)
    half_q = 0.0 if p.q is None else p.q / 2
    return _sq(np.maximum(np.abs(s - v) - half_q, 0.0))


def data_term(b, v, cfg: EnergyConfig) -> float:
    """Evaluate the data term selected by `cfg` on a blurred estimate `b`."""
    p = cfg.params
    name = cfg.data_term
    if name == "simple":
        return data_simple(b, v)
    if name == "saturation":
        return data_saturation(b, v, p.c)
    if name == "quant_forward":
        return data_quant_forward(b, v, p.q)
    if name == "quant_convex":
        return data_quant_convex(b, v, p.q)
    if name == "gamma_inverse":
        return data_gamma_inverse(b, v, p.gamma)
    if name == "gamma":
        return data_gamma(b, v, p.gamma)
    return data_full(b, v, p)


def _tv_magnitudes(u) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    dx = np.zeros_like(u)
    dy = np.zeros_like(u)
    dx[:, :-1] = u[:, 1:] - u[:, :-1]
    dy[:-1, :] = u[1:, :] - u[:-1, :]
    return np.sqrt(dx * dx + dy * dy)


def reg_tv(u) -> float:
    """Isotropic TV with forward differences; differences across the last row/column are 0."""
    return float(np.sum(_tv_magnitudes(u)))


def reg_tv_gamma(u, gamma: float) -> float:
    """TV of the gamma-compressed image ``max(u, 0) ** (1/gamma)``."""
    return reg_tv(gamma_compress(u, gamma))


def regularizer(u, cfg: EnergyConfig) -> float:
    if cfg.regularizer == "tv_gamma":
        return reg_tv_gamma(u, cfg.params.gamma)
    return reg_tv(u)


# --------------------------------------------------------------------------
# compiled per-pixel kernels

@numba.njit(cache=True, inline="always")
def _pixel_data(term, b, t, c, q, ig):
    if term == _SIMPLE or term == _GINV:
        r = b - t
    elif term == _SATURATION:
        r = min(c, b) - t
    elif term == _QFWD:
        x = b / q
        r = q * math.copysign(math.floor(abs(x) + 0.5), x) - t
    elif term == _QCVX:
        r = max(abs(b - t) - 0.5 * q, 0.0)
    elif term == _GAMMA:
        r = max(b, 0.0) ** ig - t
    else:
        s = max(min(c, b), 0.0)
        if ig != 1.0:
            s = s ** ig
        r = max(abs(s - t) - 0.5 * q, 0.0)
    return r * r


@numba.njit(cache=True, inline="always")
def _tv_at(g, i, j):
    H, W = g.shape
    gij = g[i, j]
    dx = g[i, j + 1] - gij if j + 1 < W else 0.0
    dy = g[i + 1, j] - gij if i + 1 < H else 0.0
    return math.sqrt(dx * dx + dy * dy)


@numba.njit(cache=True)
def _fill_caches(b, t, dc, g, tc, term, c, q, ig):
    h, w = b.shape
    for i in range(h):
        for j in range(w):
            dc[i, j] = _pixel_data(term, b[i, j], t[i, j], c, q, ig)
    H, W = g.shape
    for i in range(H):
        for j in range(W):
            tc[i, j] = _tv_at(g, i, j)


@numba.njit(cache=True, inline="always")
def _reg_value(u, reg, ig):
    if reg == 1 and ig != 1.0:
        return max(u, 0.0) ** ig
    if reg == 1:
        return max(u, 0.0)
    return u


@numba.njit(cache=True)
def _delta(u, b, dc, t, g, tc, kf, term, reg, c, q, ig, lam, p, r, s):
    """Energy change from ``u[p, r] += s``; touches only the footprint and TV stencil."""
    kh, kw = kf.shape
    h, w = b.shape
    d_data = 0.0
    i0 = max(0, p - kh + 1)
    i1 = min(h - 1, p)
    j0 = max(0, r - kw + 1)
    j1 = min(w - 1, r)
    for i in range(i0, i1 + 1):
        a = p - i
        for j in range(j0, j1 + 1):
            wgt = kf[a, r - j]
            if wgt != 0.0:
                d_data += _pixel_data(term, b[i, j] + s * wgt, t[i, j], c, q, ig) - dc[i, j]
    if lam == 0.0:
        return d_data
    old = g[p, r]
    g[p, r] = _reg_value(u[p, r] + s, reg, ig)
    d_reg = _tv_at(g, p, r) - tc[p, r]
    if p > 0:
        d_reg += _tv_at(g, p - 1, r) - tc[p - 1, r]
    if r > 0:
        d_reg += _tv_at(g, p, r - 1) - tc[p, r - 1]
    g[p, r] = old
    return d_data + lam * d_reg


@numba.njit(cache=True)
def _apply(u, b, dc, t, g, tc, kf, term, reg, c, q, ig, p, r, s):
    kh, kw = kf.shape
    h, w = b.shape
    u[p, r] += s
    for i in range(max(0, p - kh + 1), min(h - 1, p) + 1):
        a = p - i
        for j in range(max(0, r - kw + 1), min(w - 1, r) + 1):
            wgt = kf[a, r - j]
            if wgt != 0.0:
                b[i, j] += s * wgt
                dc[i, j] = _pixel_data(term, b[i, j], t[i, j], c, q, ig)
    g[p, r] = _reg_value(u[p, r], reg, ig)
    tc[p, r] = _tv_at(g, p, r)
    if p > 0:
        tc[p - 1, r] = _tv_at(g, p - 1, r)
    if r > 0:
        tc[p, r - 1] = _tv_at(g, p, r - 1)


# --------------------------------------------------------------------------
# cached state

class EnergyState:
    """Latent estimate plus the caches needed for O(kernel) energy updates.

    Attributes
    ----------
    u : ndarray
        Latent image on the padded domain (observation + kernel - 1).
    b : ndarray
        Cached ``convolve_valid(u, k)``.
    dc, tc : ndarray
        Per-pixel data-term and TV contributions.
    g : ndarray
        Values the regularizer differentiates: ``u`` for tv, the
        gamma-compressed ``u`` for tv_gamma.
    energy : float
        Running total, updated by :func:`apply_mutation`.

    A state is single-writer; do not mutate it from several threads.
    """

    def __init__(self, u, v, k, cfg: EnergyConfig):
        self.k = as_kernel(k, normalize=False)
        self.v = np.asarray(v, dtype=np.float64)
        self.cfg = cfg
        self.u = np.array(u, dtype=np.float64)
        if self.u.ndim != 2 or self.v.ndim != 2:
            raise ValueError("EnergyState works on single-channel images")
        kh, kw = self.k.shape
        expected = (self.v.shape[0] + kh - 1, self.v.shape[1] + kw - 1)
        if self.u.shape != expected:
            raise ValueError(f"latent shape {self.u.shape} does not match observation+kernel {expected}")
        self.kf = np.ascontiguousarray(self.k[::-1, ::-1])
        p = cfg.params
        self.term = DATA_TERMS.index(cfg.data_term)
        self.reg = REGULARIZERS.index(cfg.regularizer)
        self.c = math.inf if p.c is None else float(p.c)
        self.q = 0.0 if p.q is None else float(p.q)
        self.ig = 1.0 / float(p.gamma)
        self.lam = float(cfg.lam)
        # gamma_inverse fits b against v**gamma, precomputed once
        self.t = gamma_expand(self.v, p.gamma) if cfg.data_term == "gamma_inverse" else self.v.copy()
        self.rebuild()

    @property
    def shape(self):
        return self.u.shape

    def rebuild(self) -> None:
        """Recompute every cache from ``u``."""
        self.b = convolve_valid(self.u, self.k)
        self.g = gamma_compress(self.u, self.cfg.params.gamma) if self.reg == 1 else self.u.copy()
        self.dc = np.empty_like(self.b)
        self.tc = np.empty_like(self.g)
        _fill_caches(self.b, self.t, self.dc, self.g, self.tc, self.term, self.c, self.q, self.ig)
        self.energy = self.cached_energy()

    def cached_energy(self) -> float:
        """Sum of the cached per-pixel contributions."""
        return float(math.fsum(self.dc.ravel()) + self.lam * math.fsum(self.tc.ravel()))

    def kernel_args(self):
        return (self.u, self.b, self.dc, self.t, self.g, self.tc, self.kf,
                self.term, self.reg, self.c, self.q, self.ig)

    def _check(self, x):
        p, r = int(x[0]), int(x[1])
        if not (0 <= p < self.u.shape[0] and 0 <= r < self.u.shape[1]):
            raise ValueError(f"position {tuple(x)} outside latent domain {self.u.shape}")
        return p, r


def data_contributions(state: EnergyState) -> float:
    """Data term from the cached per-pixel contributions."""
    return float(math.fsum(state.dc.ravel()))


def total_energy(state: EnergyState) -> float:
    """Recompute ``D(u) + lam * R(u)`` from scratch (ignores the caches)."""
    b = convolve_valid(state.u, state.k)
    return data_term(b, state.v, state.cfg) + state.cfg.lam * regularizer(state.u, state.cfg)


def delta_energy(state: EnergyState, x, step: float) -> float:
    """Energy change if ``u[x]`` were increased by `step`; the state is not modified."""
    p, r = state._check(x)
    if step == 0:
        return 0.0
    return _delta(*state.kernel_args(), state.lam, p, r, float(step))


def apply_mutation(state: EnergyState, x, step: float) -> EnergyState:
    """Commit ``u[x] += step`` and update every cache in place."""
    p, r = state._check(x)
    d = _delta(*state.kernel_args(), state.lam, p, r, float(step))
    _apply(*state.kernel_args(), p, r, float(step))
    state.energy += d
    return state
