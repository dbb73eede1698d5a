"""Stochastic coordinate-descent deconvolution.

Each step draws one latent pixel, evaluates the energy change of ``+delta``
and ``-delta`` at that pixel, and keeps the better one only if it lowers the
energy (ties between two improving moves go to ``+delta``). Pixels are drawn
near the last accepted position with probability ``p_chain``, otherwise
uniformly over the latent domain. Every ``accept_window`` steps the
acceptance rate is checked and ``delta`` is multiplied by ``anneal_factor``
if it fell below ``accept_threshold``; the run stops once ``delta`` drops
below ``delta_min`` or after ``max_iters`` steps.

Random numbers come from a splitmix64 counter stored in the sampler, so the
Python-level :func:`step` and the compiled loop inside :func:`solve` follow
exactly the same sequence for a given seed.
"""

from __future__ import annotations

import configparser
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numba
import numpy as np

from .energy import EnergyConfig, EnergyState, _apply, _delta
from .forward import gamma_expand
from .imaging import as_image, as_kernel, interior, pad_latent

__all__ = ["SolverConfig", "SolverReport", "Sampler", "initialize", "step", "solve"]


@dataclass(frozen=True)
class SolverConfig:
    """Sampler and annealing parameters.

    ``accept_window=None`` means ten sweeps, i.e. 10 x (number of latent pixels).
    """

    delta_init: float = 0.1
    delta_min: float = 1.0 / 512
    anneal_factor: float = 0.5
    accept_window: Optional[int] = None
    accept_threshold: float = 0.05
    p_chain: float = 0.5
    chain_radius: int = 2
    max_iters: int = 50_000_000
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.delta_min < self.delta_init:
            raise ValueError("need 0 < delta_min < delta_init")
        if not 0 < self.anneal_factor < 1:
            raise ValueError("anneal_factor must be in (0, 1)")
        if not 0 <= self.p_chain <= 1:
            raise ValueError("p_chain must be in [0, 1]")
        if self.chain_radius < 1:
            raise ValueError("chain_radius must be >= 1")
        if self.accept_window is not None and self.accept_window < 1:
            raise ValueError("accept_window must be >= 1")
        if not 0 <= self.accept_threshold <= 1:
            raise ValueError("accept_threshold must be in [0, 1]")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")

    def window(self, n_pixels: int) -> int:
        return self.accept_window if self.accept_window is not None else 10 * n_pixels


@dataclass
class SolverReport:
    iterations: int = 0
    accepted: int = 0
    initial_energy: float = 0.0
    final_energy: float = 0.0
    final_delta: float = 0.0
    duration: float = 0.0
    trace: List[float] = field(default_factory=list)
    trace_every: int = 0

    def write(self, path) -> None:
        """Write as an INI-style key/value file (section ``[report]``)."""
        cp = configparser.ConfigParser()
        cp["report"] = {
            "iterations": str(self.iterations),
            "accepted": str(self.accepted),
            "initial_energy": repr(self.initial_energy),
            "final_energy": repr(self.final_energy),
            "final_delta": repr(self.final_delta),
            "duration": f"{self.duration:.6f}",
            "trace_every": str(self.trace_every),
            "trace": ", ".join(repr(e) for e in self.trace),
        }
        with open(path, "w") as fh:
            cp.write(fh)

    @classmethod
    def read(cls, path) -> "SolverReport":
        cp = configparser.ConfigParser()
        if not cp.read(path):
            raise OSError(f"{path}: cannot read solver report")
        s = cp["report"]
        trace = [float(x) for x in s.get("trace", "").split(",") if x.strip()]
        return cls(
            iterations=s.getint("iterations"),
            accepted=s.getint("accepted"),
            initial_energy=s.getfloat("initial_energy"),
            final_energy=s.getfloat("final_energy"),
            final_delta=s.getfloat("final_delta"),
            duration=s.getfloat("duration"),
            trace=trace,
            trace_every=s.getint("trace_every"),
        )


# --------------------------------------------------------------------------
# sampling

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


@numba.njit(cache=True, inline="always")
def _uniform(rng):
    rng[0] += _GOLDEN
    z = rng[0]
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@numba.njit(cache=True, inline="always")
def _randint(rng, n):
    k = int(_uniform(rng) * n)
    return k if k < n else n - 1


@numba.njit(cache=True)
def _step(u, b, dc, t, g, tc, kf, term, reg, c, q, ig, lam, rng, anchor, delta, p_chain, radius):
    H, W = u.shape
    if anchor[0] >= 0 and _uniform(rng) < p_chain:
        span = 2 * radius + 1
        p = min(max(anchor[0] + _randint(rng, span) - radius, 0), H - 1)
        r = min(max(anchor[1] + _randint(rng, span) - radius, 0), W - 1)
    else:
        p = _randint(rng, H)
        r = _randint(rng, W)
    d_plus = _delta(u, b, dc, t, g, tc, kf, term, reg, c, q, ig, lam, p, r, delta)
    d_minus = _delta(u, b, dc, t, g, tc, kf, term, reg, c, q, ig, lam, p, r, -delta)
    if d_plus <= d_minus:
        best, s = d_plus, delta
    else:
        best, s = d_minus, -delta
    if best < 0.0:
        _apply(u, b, dc, t, g, tc, kf, term, reg, c, q, ig, p, r, s)
        anchor[0] = p
        anchor[1] = r
        return True, p, r, best
    return False, p, r, best


@numba.njit(cache=True)
def _run(u, b, dc, t, g, tc, kf, term, reg, c, q, ig, lam, rng, anchor, delta, p_chain, radius, n):
    accepted = 0
    gain = 0.0
    for _ in range(n):
        ok, p, r, d = _step(u, b, dc, t, g, tc, kf, term, reg, c, q, ig, lam, rng, anchor, delta, p_chain, radius)
        if ok:
            accepted += 1
            gain += d
    return accepted, gain


class Sampler:
    """Pixel sampler state: RNG counter, chain anchor and current step size."""

    def __init__(self, seed: int = 0, delta: float = 0.1):
        self.rng = np.array([np.uint64(seed % (1 << 64))], dtype=np.uint64)
        self.anchor = np.array([-1, -1], dtype=np.int64)
        self.delta = float(delta)


# --------------------------------------------------------------------------

def initial_estimate(v, k_shape, cfg: EnergyConfig) -> np.ndarray:
    """Padded starting point: the observation, mapped to linear space when the energy needs it."""
    v = np.asarray(v, dtype=np.float64)
    u0 = gamma_expand(np.clip(v, 0.0, 1.0), cfg.params.gamma) if cfg.linear_latent else v
    return pad_latent(u0, k_shape)


def initialize(v, k, cfg: EnergyConfig) -> EnergyState:
    """Build a coherent :class:`EnergyState` for a single-channel observation."""
    v = as_image(v)
    if v.ndim != 2:
        raise ValueError("initialize expects a single-channel observation")
    k = as_kernel(k)
    return EnergyState(initial_estimate(v, k.shape, cfg), v, k, cfg)


def step(state: EnergyState, sampler: Sampler, cfg: SolverConfig):
    """Run one sampling step; returns ``(accepted, (row, col), delta_e)``.

    ``delta_e`` is the best of the two evaluated energy changes, applied only
    when negative.
    """
    ok, p, r, d = _step(*state.kernel_args(), state.lam, sampler.rng, sampler.anchor,
                        sampler.delta, cfg.p_chain, cfg.chain_radius)
    if ok:
        state.energy += d
    return bool(ok), (int(p), int(r)), float(d)


def solve_state(state: EnergyState, s_cfg: SolverConfig, seed: Optional[int] = None) -> SolverReport:
    """Minimize the energy held by `state` in place."""
    sampler = Sampler(s_cfg.seed if seed is None else seed, s_cfg.delta_init)
    window = s_cfg.window(state.u.size)
    report = SolverReport(initial_energy=state.energy, trace=[state.energy], trace_every=window)
    args = state.kernel_args()
    t0 = time.perf_counter()
    iters = 0
    while sampler.delta >= s_cfg.delta_min and iters < s_cfg.max_iters:
        n = min(window, s_cfg.max_iters - iters)
        accepted, gain = _run(*args, state.lam, sampler.rng, sampler.anchor, sampler.delta,
                              s_cfg.p_chain, s_cfg.chain_radius, n)
        iters += n
        report.accepted += accepted
        state.energy += gain
        report.trace.append(state.energy)
        if accepted < s_cfg.accept_threshold * n:
            sampler.delta *= s_cfg.anneal_factor
    report.iterations = iters
    report.final_energy = state.energy
    report.final_delta = sampler.delta
    report.duration = time.perf_counter() - t0
    return report


def solve(v, k, e_cfg: EnergyConfig, s_cfg: SolverConfig = SolverConfig()):
    """Deconvolve observation `v` with kernel `k`.

    Returns the restored image (observation extent, latent space, clamped to
    [0, 1]) and a :class:`SolverReport`. Colour images are solved channel by
    channel with seeds ``seed + channel``; the report then aggregates the
    channels (energies summed, traces summed sample by sample).
    """
    v = as_image(v)
    k = as_kernel(k)
    if v.ndim == 2:
        state = initialize(v, k, e_cfg)
        report = solve_state(state, s_cfg)
        return np.clip(interior(state.u, k.shape), 0.0, 1.0), report

    channels, reports = [], []
    for ch in range(v.shape[2]):
        state = initialize(v[..., ch], k, e_cfg)
        reports.append(solve_state(state, s_cfg, seed=s_cfg.seed + ch))
        channels.append(np.clip(interior(state.u, k.shape), 0.0, 1.0))
    n = max(len(r.trace) for r in reports)
    trace = [sum(r.trace[min(i, len(r.trace) - 1)] for r in reports) for i in range(n)]
    report = SolverReport(
        iterations=sum(r.iterations for r in reports),
        accepted=sum(r.accepted for r in reports),
        initial_energy=sum(r.initial_energy for r in reports),
        final_energy=sum(r.final_energy for r in reports),
        final_delta=max(r.final_delta for r in reports),
        duration=sum(r.duration for r in reports),
        trace=trace,
        trace_every=reports[0].trace_every,
    )
    return np.stack(channels, axis=-1), report
