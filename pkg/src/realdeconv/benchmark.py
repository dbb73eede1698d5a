"""PSNR sweeps over regularization weights and energy configurations.

Results file (``results.csv``) columns, one row per (entry, config, lam)::

    entry, config, lam, psnr, energy, runtime, seed, psnr_space, status

``psnr`` is ``inf`` when the restoration is identical to the ground truth.
``psnr_space`` is always ``display``: restorations from linear-latent
energies are gamma-compressed before comparison with the stored
display-space ground truth. ``status`` is ``ok`` or an error message; rows
with errors are retried on the next run.

Configuration ids are ``<data_term>+<regularizer>`` optionally followed by
parameter overrides, e.g. ``full+tv:q=none`` for saturation + gamma without
quantization.
"""

from __future__ import annotations

import csv
import math
import os
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .dataset import DatasetEntry, DatasetManifest
from .energy import EnergyConfig
from .forward import DegradationParams, gamma_compress
from .solver import SolverConfig, solve

__all__ = [
    "psnr",
    "SweepSpec",
    "ResultRow",
    "parse_config_id",
    "default_lambdas",
    "run_sweep",
    "read_rows",
    "summarize",
    "Summary",
    "restore_entry",
]

FIELDS = ("entry", "config", "lam", "psnr", "energy", "runtime", "seed", "psnr_space", "status")


def psnr(a, b, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` when the images are identical."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean(np.square(a - b)))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def default_lambdas(lo: float = 1e-4, hi: float = 3e-2, n: int = 8) -> List[float]:
    return [float(x) for x in np.geomspace(lo, hi, n)]


def parse_config_id(config_id: str, params: DegradationParams, lam: float = 0.0) -> EnergyConfig:
    """Build an :class:`EnergyConfig` from ``data+reg[:key=value,...]``.

    Overrides apply to the entry's degradation parameters (``c``, ``q``,
    ``gamma``); ``none`` disables a stage.
    """
    head, _, tail = config_id.partition(":")
    data_term, sep, reg = head.partition("+")
    if not sep:
        raise ValueError(f"config id {config_id!r} must look like 'data+regularizer'")
    overrides = {}
    for item in filter(None, (s.strip() for s in tail.split(","))):
        key, eq, val = item.partition("=")
        if not eq or key not in ("c", "q", "gamma"):
            raise ValueError(f"bad override {item!r} in config id {config_id!r}")
        overrides[key] = None if val.lower() == "none" else float(val)
    if overrides.get("gamma", 1.0) is None:
        overrides["gamma"] = 1.0
    return EnergyConfig(data_term, reg, lam, replace(params, **overrides))


@dataclass(frozen=True)
class ResultRow:
    entry: str
    config: str
    lam: float
    psnr: float
    energy: float
    runtime: float
    seed: int
    psnr_space: str = "display"
    status: str = "ok"

    @property
    def key(self):
        return (self.entry, self.config, repr(float(self.lam)))

    def as_record(self) -> dict:
        return {
            "entry": self.entry,
            "config": self.config,
            "lam": repr(float(self.lam)),
            "psnr": repr(float(self.psnr)),
            "energy": repr(float(self.energy)),
            "runtime": f"{self.runtime:.3f}",
            "seed": str(self.seed),
            "psnr_space": self.psnr_space,
            "status": self.status,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "ResultRow":
        return cls(
            rec["entry"], rec["config"], float(rec["lam"]), float(rec["psnr"]),
            float(rec["energy"]), float(rec["runtime"]), int(rec["seed"]),
            rec.get("psnr_space", "display"), rec.get("status", "ok"),
        )


@dataclass
class SweepSpec:
    """What to run: every entry x config x lambda."""

    manifest: str
    lambdas: List[float] = field(default_factory=default_lambdas)
    configs: List[str] = field(default_factory=lambda: ["simple+tv"])
    solver: SolverConfig = field(default_factory=SolverConfig)
    entries: Optional[List[str]] = None

    def __post_init__(self):
        self.lambdas = [float(x) for x in self.lambdas]
        if not self.lambdas or not self.configs:
            raise ValueError("sweep needs at least one lambda and one config")
        if any(x <= 0 for x in self.lambdas):
            raise ValueError("lambda values must be strictly positive")
        if self.lambdas != sorted(self.lambdas) or len(set(self.lambdas)) != len(self.lambdas):
            raise ValueError("lambda values must be strictly increasing")


def restore_entry(entry: DatasetEntry, config_id: str, lam: float, s_cfg: SolverConfig):
    """Deblur one dataset entry; returns ``(display_image, ground_truth, report)``."""
    gt, v, k = entry.load()
    cfg = parse_config_id(config_id, entry.params, lam)
    out, report = solve(v, k, cfg, s_cfg)
    if cfg.linear_latent:
        out = gamma_compress(out, cfg.params.gamma)
    return out, gt, report


def _run_one(entry: DatasetEntry, config_id: str, lam: float, s_cfg: SolverConfig) -> ResultRow:
    t0 = time.perf_counter()
    try:
        out, gt, report = restore_entry(entry, config_id, lam, s_cfg)
        value = psnr(out, gt)
        return ResultRow(entry.id, config_id, lam, value, report.final_energy,
                         time.perf_counter() - t0, s_cfg.seed)
    except (OSError, ValueError) as exc:
        return ResultRow(entry.id, config_id, lam, math.nan, math.nan,
                         time.perf_counter() - t0, s_cfg.seed, status=f"error: {exc}")


def read_rows(path) -> List[ResultRow]:
    with open(path, newline="") as fh:
        return [ResultRow.from_record(rec) for rec in csv.DictReader(fh)]


def run_sweep(spec: SweepSpec, out_path=None, jobs: int = 1) -> List[ResultRow]:
    """Run every (entry, config, lambda) combination.

    With `out_path`, rows are appended to that CSV as they finish and rows
    already present with status ``ok`` are skipped, so an interrupted sweep
    resumes where it stopped. Returns all rows for the spec, in spec order.
    """
    manifest = DatasetManifest.read(spec.manifest)
    entries = manifest.entries
    if spec.entries is not None:
        wanted = set(spec.entries)
        entries = [e for e in entries if e.id in wanted]
    if not entries:
        raise ValueError(f"{spec.manifest}: no dataset entries selected")
    for cid in spec.configs:
        parse_config_id(cid, entries[0].params)  # fail fast on malformed ids

    done: Dict[tuple, ResultRow] = {}
    if out_path is not None and Path(out_path).exists() and Path(out_path).stat().st_size > 0:
        done = {r.key: r for r in read_rows(out_path) if r.status == "ok"}

    tasks = [(e, cid, lam) for e in entries for cid in spec.configs for lam in spec.lambdas]
    todo = [t for t in tasks if (t[0].id, t[1], repr(t[2])) not in done]

    fh = writer = None
    if out_path is not None:
        new_file = not Path(out_path).exists() or Path(out_path).stat().st_size == 0
        fh = open(out_path, "a", newline="")
        writer = csv.DictWriter(fh, fieldnames=FIELDS)
        if new_file:
            writer.writeheader()
            fh.flush()

    def record(row: ResultRow):
        done[row.key] = row
        if writer is not None:
            writer.writerow(row.as_record())
            fh.flush()

    try:
        if jobs <= 1 or len(todo) <= 1:
            for e, cid, lam in todo:
                record(_run_one(e, cid, lam, spec.solver))
        else:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                futures = [pool.submit(_run_one, e, cid, lam, spec.solver) for e, cid, lam in todo]
                for fut in futures:
                    record(fut.result())
    finally:
        if fh is not None:
            fh.close()
    return [done[(e.id, cid, repr(lam))] for e, cid, lam in tasks]


@dataclass
class ConfigStats:
    config: str
    best: Dict[str, float]          # entry -> best-over-lambda PSNR
    best_lam: Dict[str, float]
    minimum: float
    median: float
    maximum: float
    series: Dict[str, List[tuple]]  # entry -> [(lam, psnr), ...]


@dataclass
class Summary:
    configs: Dict[str, ConfigStats]

    def table(self) -> str:
        """Comma-separated min/median/max of best-over-lambda PSNR per config."""
        lines = ["config,entries,min_psnr,median_psnr,max_psnr"]
        for cid, st in self.configs.items():
            lines.append(f"{cid},{len(st.best)},{st.minimum:.4f},{st.median:.4f},{st.maximum:.4f}")
        return "\n".join(lines) + "\n"

    def write(self, out_dir) -> List[Path]:
        """Write ``summary.csv``, ``best.csv`` and one ``series_<config>.csv`` per config."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = [out / "summary.csv", out / "best.csv"]
        written[0].write_text(self.table())
        with open(written[1], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["config", "entry", "best_lam", "best_psnr"])
            for cid, st in self.configs.items():
                for e in sorted(st.best):
                    w.writerow([cid, e, repr(st.best_lam[e]), repr(st.best[e])])
        for cid, st in self.configs.items():
            path = out / f"series_{_safe(cid)}.csv"
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["entry", "lam", "psnr"])
                for e in sorted(st.series):
                    for lam, val in st.series[e]:
                        w.writerow([e, repr(lam), repr(val)])
            written.append(path)
        return written

    def render(self, out_dir) -> List[Path]:
        """PSNR-vs-lambda lines and min/median/max bars as PNG files."""
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        fig, ax = plt.subplots(figsize=(6, 4))
        for cid, st in self.configs.items():
            lams = sorted({lam for s in st.series.values() for lam, _ in s})
            mean = [np.mean([v for s in st.series.values() for l, v in s if l == lam and np.isfinite(v)])
                    for lam in lams]
            ax.semilogx(lams, mean, marker="o", label=cid)
        ax.set_xlabel("lambda")
        ax.set_ylabel("PSNR (dB), mean over entries")
        ax.legend(fontsize=8)
        fig.tight_layout()
        lines_path = out / "psnr_vs_lambda.png"
        fig.savefig(lines_path, dpi=100)
        plt.close(fig)

        fig, ax = plt.subplots(figsize=(6, 4))
        for x, (cid, st) in enumerate(self.configs.items()):
            ax.vlines(x, st.minimum, st.maximum, color="k")
            ax.hlines([st.minimum, st.maximum], x - 0.15, x + 0.15, color="k")
            ax.hlines(st.median, x - 0.25, x + 0.25, color="tab:orange", linewidth=3)
        ax.set_xticks(range(len(self.configs)))
        ax.set_xticklabels(list(self.configs), rotation=20, fontsize=8)
        ax.set_ylabel("best PSNR over lambda (dB)")
        fig.tight_layout()
        bars_path = out / "psnr_range.png"
        fig.savefig(bars_path, dpi=100)
        plt.close(fig)
        return [lines_path, bars_path]


def _safe(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in name)


def summarize(rows: Sequence[ResultRow]) -> Summary:
    """Best-over-lambda PSNR per entry, then min/median/max across entries, per config."""
    rows = [r for r in rows if r.status == "ok"]
    if not rows:
        raise ValueError("no successful result rows to summarize")
    by_config: Dict[str, Dict[str, List[tuple]]] = {}
    for r in rows:
        by_config.setdefault(r.config, {}).setdefault(r.entry, []).append((r.lam, r.psnr))
    stats = {}
    for cid, per_entry in by_config.items():
        best, best_lam = {}, {}
        for e, pts in per_entry.items():
            pts.sort()
            lam, val = max(pts, key=lambda t: t[1])
            best[e], best_lam[e] = val, lam
        vals = list(best.values())
        stats[cid] = ConfigStats(cid, best, best_lam, min(vals), statistics.median(vals), max(vals), per_entry)
    return Summary(stats)


def default_jobs() -> int:
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1)
