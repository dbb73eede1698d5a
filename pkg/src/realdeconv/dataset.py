"""Ground-truth / observation pairs for benchmarking.

:func:`make_dataset` follows the realistic-degradation recipe: sources are
mapped to linear space, 2x box-downsampled, blurred, clipped at a per-image
percentile of the blurred linear image, gamma-compressed, corrupted with
Gaussian noise and quantized. Everything is written to one directory with an
INI manifest (``manifest.ini``)::

    [dataset]
    gamma = 2.2
    q = 0.00390625
    sigma = 0.008769...
    clip_percentile = 98.0
    downsample = 2
    seed = 0

    [entry.000]
    id = 000
    source = camera
    kernel_id = k00
    ground_truth = gt_000.pgm     # display space, latent interior, 16 bit
    observation = obs_000.pgm     # 16 bit so q = 1/256 levels survive
    kernel = k00.txt
    c = 0.61...                   # "none" when disabled
    q = 0.00390625
    gamma = 2.2
    sigma = 0.00876...
    seed = 0

Paths are relative to the manifest.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .forward import DEFAULT_GAMMA, REALISTIC_SIGMA, DegradationParams, degrade, gamma_compress, gamma_expand
from .imaging import as_image, as_kernel, convolve_valid, interior, load_image, load_kernel, save_image, save_kernel

__all__ = [
    "DatasetEntry",
    "DatasetManifest",
    "make_dataset",
    "realistic_params",
    "box_downsample",
    "motion_kernel",
    "box_kernel",
    "fixture_sources",
]


def realistic_params(seed: int = 0, gamma: float = DEFAULT_GAMMA) -> DegradationParams:
    """q = 1/256, sigma = sqrt(5)/255, gamma = 2.2; c is set per image."""
    return DegradationParams(c=None, q=1 / 256, gamma=gamma, sigma=REALISTIC_SIGMA, seed=seed)


def _opt(x) -> str:
    return "none" if x is None else repr(float(x))


def _parse_opt(s: str) -> Optional[float]:
    return None if s.strip().lower() == "none" else float(s)


@dataclass
class DatasetEntry:
    id: str
    source: str
    kernel_id: str
    ground_truth: str
    observation: str
    kernel: str
    params: DegradationParams
    root: Path = field(default=Path("."), repr=False, compare=False)

    def load(self):
        """Return ``(ground_truth, observation, kernel)`` arrays."""
        return (
            load_image(self.root / self.ground_truth),
            load_image(self.root / self.observation),
            load_kernel(self.root / self.kernel),
        )


@dataclass
class DatasetManifest:
    entries: List[DatasetEntry]
    settings: dict = field(default_factory=dict)
    path: Optional[Path] = None

    def write(self, path) -> None:
        path = Path(path)
        cp = configparser.ConfigParser()
        cp["dataset"] = {k: str(v) for k, v in self.settings.items()}
        for e in self.entries:
            p = e.params
            cp[f"entry.{e.id}"] = {
                "id": e.id,
                "source": e.source,
                "kernel_id": e.kernel_id,
                "ground_truth": e.ground_truth,
                "observation": e.observation,
                "kernel": e.kernel,
                "c": _opt(p.c),
                "q": _opt(p.q),
                "gamma": repr(float(p.gamma)),
                "sigma": repr(float(p.sigma)),
                "seed": str(p.seed),
            }
        with open(path, "w") as fh:
            cp.write(fh)
        self.path = path

    @classmethod
    def read(cls, path) -> "DatasetManifest":
        path = Path(path)
        cp = configparser.ConfigParser()
        if not cp.read(path):
            raise OSError(f"{path}: cannot read dataset manifest")
        entries = []
        for name in cp.sections():
            if not name.startswith("entry."):
                continue
            s = cp[name]
            params = DegradationParams(
                c=_parse_opt(s["c"]),
                q=_parse_opt(s["q"]),
                gamma=float(s["gamma"]),
                sigma=float(s["sigma"]),
                seed=int(s["seed"]),
            )
            entries.append(DatasetEntry(
                s["id"], s["source"], s["kernel_id"], s["ground_truth"],
                s["observation"], s["kernel"], params, root=path.parent,
            ))
        settings = dict(cp["dataset"]) if cp.has_section("dataset") else {}
        return cls(entries, settings, path)


def box_downsample(img, factor: int = 2) -> np.ndarray:
    """Average non-overlapping `factor` x `factor` blocks (trailing rows/cols dropped)."""
    img = np.asarray(img, dtype=np.float64)
    if factor == 1:
        return img.copy()
    h, w = img.shape[0] // factor, img.shape[1] // factor
    blocks = img[:h * factor, :w * factor].reshape(h, factor, w, factor, *img.shape[2:])
    return blocks.mean(axis=(1, 3))


def make_dataset(
    sources: Sequence,
    kernels: Sequence,
    p: DegradationParams,
    out_dir,
    *,
    clip_percentile: Optional[float] = 98.0,
    downsample: int = 2,
    pairing: str = "product",
    source_names: Optional[Sequence[str]] = None,
    kernel_names: Optional[Sequence[str]] = None,
) -> DatasetManifest:
    """Generate degraded observations and write them with a manifest.

    Parameters
    ----------
    sources : sequence of ndarray
        Sharp display-space images in [0, 1].
    kernels : sequence of ndarray
        Blur kernels (normalized on the way in).
    p : DegradationParams
        ``gamma``, ``q``, ``sigma`` and the base ``seed``. ``c`` is used as is
        when `clip_percentile` is None; otherwise each entry is clipped at that
        percentile of its blurred linear image.
    pairing : {"product", "cycle"}
        Every image with every kernel, or image ``i`` with kernel ``i mod K``.

    Entry ``n`` uses noise seed ``p.seed + n``.
    """
    if not sources or not kernels:
        raise ValueError("make_dataset needs at least one source image and one kernel")
    if pairing not in ("product", "cycle"):
        raise ValueError(f"pairing must be 'product' or 'cycle', got {pairing!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    kernels = [as_kernel(k) for k in kernels]
    source_names = list(source_names or [f"src{i:02d}" for i in range(len(sources))])
    kernel_names = list(kernel_names or [f"k{j:02d}" for j in range(len(kernels))])
    for name, k in zip(kernel_names, kernels):
        save_kernel(k, out / f"{name}.txt")

    if pairing == "product":
        pairs = [(i, j) for i in range(len(sources)) for j in range(len(kernels))]
    else:
        pairs = [(i, i % len(kernels)) for i in range(len(sources))]

    entries = []
    for n, (i, j) in enumerate(pairs):
        k = kernels[j]
        linear = box_downsample(gamma_expand(as_image(sources[i]), p.gamma), downsample)
        c = p.c
        if clip_percentile is not None:
            c = float(np.percentile(convolve_valid(linear, k), clip_percentile))
            c = min(max(c, np.finfo(float).tiny), 1.0)
        params = DegradationParams(c=c, q=p.q, gamma=p.gamma, sigma=p.sigma, seed=p.seed + n)
        v = degrade(linear, k, params)
        eid = f"{n:03d}"
        ext = "pgm" if v.ndim == 2 else "ppm"
        entry = DatasetEntry(
            eid, source_names[i], kernel_names[j], f"gt_{eid}.{ext}", f"obs_{eid}.{ext}",
            f"{kernel_names[j]}.txt", params, root=out,
        )
        save_image(gamma_compress(interior(linear, k.shape), p.gamma), out / entry.ground_truth, bits=16)
        save_image(v, out / entry.observation, bits=16)
        entries.append(entry)

    settings = {
        "gamma": repr(float(p.gamma)),
        "q": _opt(p.q),
        "sigma": repr(float(p.sigma)),
        "clip_percentile": _opt(clip_percentile),
        "downsample": str(downsample),
        "pairing": pairing,
        "seed": str(p.seed),
    }
    manifest = DatasetManifest(entries, settings)
    manifest.write(out / "manifest.ini")
    return manifest


# --------------------------------------------------------------------------
# synthetic kernels and bundled source images

def box_kernel(size: int) -> np.ndarray:
    return np.full((size, size), 1.0 / (size * size))


def motion_kernel(size: int = 9, seed: int = 0, steps: int = 200) -> np.ndarray:
    """Camera-shake-like kernel: a smooth random walk rasterized with bilinear splats.

    The trajectory is recentred on the kernel centroid so the blur does not
    shift the image.
    """
    if size % 2 == 0 or size < 3:
        raise ValueError("size must be odd and >= 3")
    rng = np.random.default_rng(seed)
    angle = rng.uniform(0, 2 * np.pi)
    turn = np.cumsum(rng.normal(0, 0.15, steps))
    velocity = np.stack([np.cos(angle + turn), np.sin(angle + turn)], axis=1)
    path = np.cumsum(velocity, axis=0)
    path -= path.mean(axis=0)
    extent = np.abs(path).max()
    path *= (size // 2 - 0.5) / max(extent, 1e-12)
    k = np.zeros((size, size))
    centre = size // 2
    for y, x in path + centre:
        y0, x0 = int(np.floor(y)), int(np.floor(x))
        fy, fx = y - y0, x - x0
        for dy, wy in ((0, 1 - fy), (1, fy)):
            for dx, wx in ((0, 1 - fx), (1, fx)):
                if 0 <= y0 + dy < size and 0 <= x0 + dx < size:
                    k[y0 + dy, x0 + dx] += wy * wx
    return as_kernel(k)


_FIXTURE_NAMES = ("camera", "astronaut", "coffee", "clock", "immunohistochemistry", "chelsea", "rocket", "coins")


def fixture_sources(n: int = 4, size: int = 128, names: Sequence[str] = _FIXTURE_NAMES):
    """Grayscale crops of scikit-image's bundled photographs, as ``(names, images)``.

    Each crop is `size` x `size`, taken from the image centre after resizing
    the shorter side to `size`; values are display-space in [0, 1].
    """
    from skimage import data
    from skimage.color import rgb2gray
    from skimage.transform import resize

    out_names, images = [], []
    for name in names[:n]:
        img = getattr(data, name)()
        img = rgb2gray(img) if img.ndim == 3 else img.astype(np.float64) / 255.0
        scale = size / min(img.shape)
        shape = (max(size, round(img.shape[0] * scale)), max(size, round(img.shape[1] * scale)))
        img = resize(img, shape, anti_aliasing=True)
        top = (img.shape[0] - size) // 2
        left = (img.shape[1] - size) // 2
        images.append(np.clip(img[top:top + size, left:left + size], 0.0, 1.0))
        out_names.append(name)
    return out_names, images
