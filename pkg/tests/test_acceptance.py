"""Acceptance suite.

Each test records a one-line PASS/FAIL verdict that pytest prints in an
``acceptance`` section of the terminal summary. The benchmark
reproductions (criteria 5 to 7) are marked ``slow``; they run by default
and can be deselected with ``-m "not slow"``.
"""
import itertools
import time

import numpy as np
import pytest

from realdeconv.benchmark import SweepSpec, psnr, run_sweep, summarize
from realdeconv.dataset import fixture_sources, make_dataset, motion_kernel, realistic_params
from realdeconv.energy import (
    DATA_TERMS,
    REGULARIZERS,
    EnergyConfig,
    EnergyState,
    data_full,
    data_gamma,
    data_gamma_inverse,
    data_quant_convex,
    data_saturation,
    data_simple,
    delta_energy,
    reg_tv,
    reg_tv_gamma,
    total_energy,
)
from realdeconv.forward import (
    DegradationParams,
    degrade,
    gamma_compress,
    gamma_expand,
    quantize,
    saturate,
)
from realdeconv.imaging import as_kernel, convolve_valid
from realdeconv.solver import SolverConfig, solve


def _instance(rng, size=16, ksize=5):
    k = as_kernel(rng.random((ksize, ksize)))
    u = rng.random((size, size))
    p = DegradationParams(c=rng.uniform(0.5, 0.95), q=1 / 32, gamma=2.2)
    v = np.clip(degrade(rng.random((size, size)), k, p) + rng.normal(0, 0.03, (size - ksize + 1,) * 2), 0, 1)
    return u, v, k, p


# ---- 1: incremental energy ------------------------------------------------

def test_delta_matches_recomputation(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(100)
    worst = 0.0
    for term, reg in itertools.product(DATA_TERMS, REGULARIZERS):
        for trial in range(100):
            u, v, k, p = _instance(rng)
            cfg = EnergyConfig(term, reg, rng.uniform(0.0, 0.1), p)
            state = EnergyState(u, v, k, cfg)
            x = (int(rng.integers(u.shape[0])), int(rng.integers(u.shape[1])))
            s = rng.choice([-1, 1]) * rng.uniform(1e-3, 0.2)
            before = total_energy(state)
            moved = u.copy()
            moved[x] += s
            ref = total_energy(EnergyState(moved, v, k, cfg)) - before
            d = delta_energy(state, x, s)
            # relative agreement, floored by the roundoff of the two full sums
            err = abs(d - ref) / (1e-9 * abs(ref) + 1e-13 * before)
            worst = max(worst, err)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1.0 and elapsed < 10
    verdict("1 incremental energy", ok, f"worst err/tol={worst:.3f}, {elapsed:.1f}s")
    assert ok


# ---- 2: zero-energy certificate -------------------------------------------

def test_zero_energy_certificate(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(200)
    ok = True
    for _ in range(10):
        size, ksize = int(rng.integers(12, 24)), int(rng.choice([3, 5, 7]))
        u = rng.random((size, size))
        k = as_kernel(rng.random((ksize, ksize)))
        p = DegradationParams(
            c=rng.uniform(0.4, 1.0), q=2.0 ** -int(rng.integers(3, 9)), gamma=rng.uniform(1.5, 2.6), sigma=0.0
        )
        v = degrade(u, k, p)
        lam = rng.uniform(1e-3, 1e-1)
        state = EnergyState(u, v, k, EnergyConfig("full", "tv_gamma", lam, p))
        d = data_full(convolve_valid(u, k), v, p)
        expected = lam * reg_tv_gamma(u, p.gamma)
        ok &= d == 0.0 and abs(total_energy(state) - expected) <= 1e-12
    elapsed = time.perf_counter() - t0
    ok = bool(ok) and elapsed < 5
    verdict("2 zero-energy certificate", ok, f"{elapsed:.1f}s")
    assert ok


# ---- 3: term reductions -----------------------------------------------------

def test_term_reductions(verdict):
    rng = np.random.default_rng(300)
    errs = {"gamma": 0.0, "gamma_inverse": 0.0, "tv_gamma": 0.0, "saturation": 0.0, "quant_convex": 0.0}
    for _ in range(20):
        b = rng.random((10, 10))
        v = rng.random((10, 10))
        u = rng.random((12, 12))
        ref = data_simple(b, v)
        errs["gamma"] = max(errs["gamma"], abs(data_gamma(b, v, 1.0) - ref))
        errs["gamma_inverse"] = max(errs["gamma_inverse"], abs(data_gamma_inverse(b, v, 1.0) - ref))
        errs["tv_gamma"] = max(errs["tv_gamma"], abs(reg_tv_gamma(u, 1.0) - reg_tv(u)))
        c = b.max() + rng.uniform(0.0, 1.0)
        errs["saturation"] = max(errs["saturation"], abs(data_saturation(b, v, c) - ref))
        q = rng.uniform(1e-4, 0.5)
        errs["quant_convex"] = max(errs["quant_convex"], data_quant_convex(b, v, q) - ref)
    ok = all(e <= 1e-10 for e in errs.values())
    verdict("3 term reductions", ok, ", ".join(f"{k}={v:.1e}" for k, v in errs.items()))
    assert ok


# ---- 4: solver monotonicity and determinism ----------------------------------

def test_solver_monotone_and_deterministic(verdict):
    pytest.importorskip("skimage")
    t0 = time.perf_counter()
    _, sources = fixture_sources(3, 72)
    cases = [
        ("simple", "tv", DegradationParams(q=1 / 256, sigma=0.005, seed=1)),
        ("saturation", "tv", DegradationParams(c=200 / 255, q=1 / 256, seed=2)),
        ("full", "tv_gamma", realistic_params(3).replace(c=0.8)),
    ]
    ok = True
    for src, (term, reg, p), kseed in zip(sources, cases, range(3)):
        k = motion_kernel(9, kseed)
        v = degrade(gamma_expand(src, p.gamma), k, p)
        assert v.shape == (64, 64)
        cfg = EnergyConfig(term, reg, 3e-3, p)
        s_cfg = SolverConfig(seed=kseed)
        out_a, rep_a = solve(v, k, cfg, s_cfg)
        out_b, rep_b = solve(v, k, cfg, s_cfg)
        trace = np.asarray(rep_a.trace)
        ok &= bool(np.all(np.diff(trace) <= 0)) and rep_a.final_energy <= rep_a.initial_energy
        ok &= np.array_equal(out_a, out_b) and rep_a.trace == rep_b.trace and rep_a.iterations == rep_b.iterations
    elapsed = time.perf_counter() - t0
    ok = bool(ok) and elapsed < 120
    verdict("4 solver monotone + deterministic", ok, f"{elapsed:.1f}s")
    assert ok


# ---- 5-7: benchmark reproductions ----------------------------------------------

LAMBDAS = list(np.geomspace(1e-5, 3e-2, 8))


def _sweep(out_dir, p, configs, lambdas, *, names=None, clip_percentile=None, s_cfg=SolverConfig(seed=1)):
    pytest.importorskip("skimage")
    kwargs = {"names": names} if names else {}
    src_names, sources = fixture_sources(4, 272, **kwargs)
    kernels = [motion_kernel(9, seed) for seed in range(4)]
    manifest = make_dataset(
        sources, kernels, p, out_dir, clip_percentile=clip_percentile, pairing="cycle", source_names=src_names
    )
    rows = run_sweep(SweepSpec(str(manifest.path), lambdas, configs, s_cfg))
    assert all(r.status == "ok" for r in rows)
    return manifest, rows, summarize(rows)


def _best_line(summary, configs, entries):
    return "; ".join(
        e.source + " " + "/".join(f"{summary.configs[c].best[e.id]:.2f}" for c in configs) for e in entries
    )


@pytest.mark.slow
def test_saturation_ordering(verdict, tmp_path):
    t0 = time.perf_counter()
    configs = ["simple+tv", "saturation+tv"]
    p = DegradationParams(c=200 / 255, q=1 / 256, gamma=1.0)
    manifest, rows, summary = _sweep(tmp_path, p, configs, LAMBDAS)
    margins = [summary.configs[configs[1]].best[e.id] - summary.configs[configs[0]].best[e.id] for e in manifest.entries]
    elapsed = time.perf_counter() - t0
    ok = min(margins) > 0 and np.median(margins) >= 1.0 and elapsed < 15 * 60
    verdict(
        "5 saturation ordering",
        ok,
        f"median margin {np.median(margins):.2f} dB, min {min(margins):.2f} dB, {elapsed:.0f}s "
        f"[{_best_line(summary, configs, manifest.entries)}]",
    )
    assert ok


@pytest.mark.slow
def test_quantization_stability(verdict, tmp_path):
    configs = ["simple+tv", "quant_convex+tv"]
    p = DegradationParams(q=1 / 16, gamma=1.0)
    manifest, rows, summary = _sweep(tmp_path, p, configs, LAMBDAS)
    spreads = {}
    for c in configs:
        for e in manifest.entries:
            vals = [v for _, v in summary.configs[c].series[e.id]]
            spreads[c, e.id] = max(vals) - min(vals)
    wins = sum(spreads[configs[1], e.id] < spreads[configs[0], e.id] for e in manifest.entries)
    ok = wins >= 3
    detail = "; ".join(
        f"{e.source} {spreads[configs[0], e.id]:.2f}/{spreads[configs[1], e.id]:.2f}" for e in manifest.entries
    )
    verdict("6 quantization stability", ok, f"{wins}/4 images with smaller spread [{detail}]")
    assert ok


# linear-space steps of 1/512 are several 8-bit display levels near black,
# so the gamma-aware energies get a finer stopping step here
REALISTIC_SOLVER = SolverConfig(seed=1, delta_min=1 / 8192)


@pytest.mark.slow
def test_realistic_ordering(verdict, tmp_path):
    t0 = time.perf_counter()
    configs = ["gamma_inverse+tv", "full+tv", "full+tv_gamma"]
    manifest, rows, summary = _sweep(
        tmp_path, realistic_params(0), configs, list(np.geomspace(1e-4, 3e-2, 8)),
        clip_percentile=98.0, s_cfg=REALISTIC_SOLVER,
    )
    med = {c: summary.configs[c].median for c in configs}
    elapsed = time.perf_counter() - t0
    ordered = med["full+tv_gamma"] > med["full+tv"] > med["gamma_inverse+tv"]
    margin = med["full+tv_gamma"] - med["gamma_inverse+tv"]
    ok = ordered and margin >= 0.5 and elapsed < 45 * 60
    verdict(
        "7 realistic ordering",
        ok,
        "medians " + " / ".join(f"{c} {m:.2f}" for c, m in med.items())
        + f", margin {margin:.2f} dB, {elapsed:.0f}s [{_best_line(summary, configs, manifest.entries)}]",
    )
    assert ok


# ---- 8: PSNR ---------------------------------------------------------------------

def test_psnr_uniform_residual(verdict):
    rng = np.random.default_rng(800)
    worst = 0.0
    for shape in [(1, 1), (7, 9), (32, 32), (5, 6, 3)]:
        a = rng.random(shape)
        for sign in (1, -1):
            worst = max(worst, abs(psnr(a + sign * 0.1, a) - 20.0))
    ok = worst <= 1e-9
    verdict("8 psnr uniform residual", ok, f"max |psnr - 20| = {worst:.1e}")
    assert ok


# ---- 9: forward model properties ------------------------------------------------

def test_forward_properties(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(900)
    checks = dict.fromkeys(["idempotent", "quant error", "gamma round trip", "saturate", "determinism"], True)
    for _ in range(200):
        x = rng.uniform(-0.5, 1.5, 64)
        q = rng.uniform(1e-3, 0.3)
        xq = quantize(x, q)
        checks["idempotent"] &= np.array_equal(quantize(xq, q), xq)
        checks["quant error"] &= bool(np.all(np.abs(xq - x) <= q / 2 * (1 + 1e-12)))
        g = rng.uniform(1.0, 3.0)
        y = rng.random(64)
        checks["gamma round trip"] &= bool(np.max(np.abs(gamma_compress(gamma_expand(y, g), g) - y)) <= 1e-12)
        checks["gamma round trip"] &= bool(np.max(np.abs(gamma_expand(gamma_compress(y, g), g) - y)) <= 1e-12)
        c = rng.uniform(0.1, 1.0)
        a, b = np.sort(rng.uniform(-1, 2, (2, 64)), axis=0)
        checks["saturate"] &= bool(np.all(saturate(a, c) <= saturate(b, c)))
        z = rng.uniform(-1, 2, 64)
        checks["saturate"] &= bool(np.all(np.abs(saturate(x, c) - saturate(z, c)) <= np.abs(x - z)))
    for seed in range(10):
        u = rng.random((20, 20))
        k = as_kernel(rng.random((5, 5)))
        p = DegradationParams(c=0.8, q=1 / 256, gamma=2.2, sigma=0.02, seed=seed)
        checks["determinism"] &= np.array_equal(degrade(u, k, p), degrade(u, k, p))
    elapsed = time.perf_counter() - t0
    ok = all(checks.values()) and elapsed < 5
    verdict("9 forward model properties", ok, ", ".join(k for k, v in checks.items() if not v) or f"{elapsed:.1f}s")
    assert ok
