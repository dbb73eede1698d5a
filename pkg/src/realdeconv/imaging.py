"""Image and kernel handling: validation, valid-region convolution, file I/O.

Images are plain ``float64`` numpy arrays of shape ``(H, W)`` or ``(H, W, C)``
with nominal range [0, 1]. Kernels are 2-D, odd-sized, non-negative and sum
to one.

Convolution is *true* convolution (the kernel is flipped), restricted to the
"valid" region: an ``(H, W)`` latent image blurred by a ``(kh, kw)`` kernel
gives an ``(H - kh + 1, W - kw + 1)`` observation.
"""

from __future__ import annotations

import os
import re
from pathlib import Path

import numpy as np
from scipy.signal import convolve2d

__all__ = [
    "KernelError",
    "as_image",
    "as_kernel",
    "convolve_valid",
    "blur_at",
    "pad_latent",
    "latent_shape",
    "interior",
    "load_image",
    "save_image",
    "load_kernel",
    "save_kernel",
]


class KernelError(ValueError):
    """Raised when kernel weights violate the kernel invariants."""


def as_image(img) -> np.ndarray:
    """Return `img` as a finite float64 array of shape (H, W) or (H, W, C)."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim not in (2, 3) or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"image must be (H, W) or (H, W, C), got shape {arr.shape}")
    if arr.ndim == 3 and arr.shape[2] not in (1, 3):
        raise ValueError(f"image must have 1 or 3 channels, got {arr.shape[2]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains NaN or Inf")
    return arr


def as_kernel(weights, normalize: bool = True) -> np.ndarray:
    """Validate kernel weights and return them as a float64 array.

    Parameters
    ----------
    weights : array_like
        2-D array of non-negative weights with odd dimensions.
    normalize : bool
        If True the weights are rescaled to sum to one. Otherwise the sum
        must already be one within 1e-9.
    """
    k = np.array(weights, dtype=np.float64)
    if k.ndim != 2:
        raise KernelError(f"kernel must be 2-D, got {k.ndim}-D")
    if k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0:
        raise KernelError(f"kernel dimensions must be odd, got {k.shape[0]}x{k.shape[1]}")
    if not np.all(np.isfinite(k)):
        raise KernelError("kernel contains NaN or Inf")
    if np.any(k < 0):
        raise KernelError("kernel has negative weights")
    total = k.sum()
    if total <= 0:
        raise KernelError("kernel weights have zero sum")
    if normalize:
        k /= total
    elif abs(total - 1.0) > 1e-9:
        raise KernelError(f"kernel weights sum to {total!r}, expected 1")
    return k


def convolve_valid(u, k) -> np.ndarray:
    """Valid-region true convolution ``u * k``.

    Multi-channel images are blurred channel by channel with the same kernel.

    >>> convolve_valid(np.full((5, 5), 0.4), np.full((3, 3), 1 / 9)).round(12)
    array([[0.4, 0.4, 0.4],
           [0.4, 0.4, 0.4],
           [0.4, 0.4, 0.4]])
    """
    u = np.asarray(u, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    if k.ndim != 2 or u.ndim not in (2, 3):
        raise ValueError(f"bad dimensions: image {u.shape}, kernel {k.shape}")
    if u.shape[0] < k.shape[0] or u.shape[1] < k.shape[1]:
        raise ValueError(f"image {u.shape[:2]} is smaller than kernel {k.shape}")
    if u.ndim == 3:
        return np.stack([convolve2d(u[..., c], k, mode="valid") for c in range(u.shape[2])], axis=-1)
    return convolve2d(u, k, mode="valid")


def blur_at(u, k, x) -> float:
    """Evaluate ``(u * k)`` at observation position `x` = (row, col).

    `u` must be 2-D; positions index the valid-region output.
    """
    u = np.asarray(u, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    kh, kw = k.shape
    i, j = x
    oh, ow = u.shape[0] - kh + 1, u.shape[1] - kw + 1
    if not (0 <= i < oh and 0 <= j < ow):
        raise ValueError(f"position {x} outside valid region {oh}x{ow}")
    return float(np.sum(u[i:i + kh, j:j + kw] * k[::-1, ::-1]))


def latent_shape(obs_shape, kernel_shape) -> tuple:
    """Shape of the padded latent domain for an observation of `obs_shape`."""
    kh, kw = kernel_shape
    return (obs_shape[0] + kh - 1, obs_shape[1] + kw - 1) + tuple(obs_shape[2:])


def pad_latent(v, kernel_shape) -> np.ndarray:
    """Extend an observation-sized image to the latent domain by edge replication."""
    kh, kw = kernel_shape
    pads = [(kh // 2, kh // 2), (kw // 2, kw // 2)] + [(0, 0)] * (np.ndim(v) - 2)
    return np.pad(np.asarray(v, dtype=np.float64), pads, mode="edge")


def interior(u, kernel_shape) -> np.ndarray:
    """Crop a latent-domain image back to the observation extent."""
    kh, kw = kernel_shape
    rh, rw = kh // 2, kw // 2
    return u[rh:u.shape[0] - rh, rw:u.shape[1] - rw]


# --------------------------------------------------------------------------
# file I/O

_NETPBM_SUFFIXES = {".pgm", ".ppm", ".pnm"}
_PIL_SUFFIXES = {".png", ".tif", ".tiff"}


def _read_netpbm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise OSError(f"{path}: unsupported netpbm variant {magic!r} (only binary P5/P6)")
    # header: magic, width, height, maxval separated by whitespace, '#' comments allowed
    fields = []
    pos = 2
    while len(fields) < 3:
        m = re.compile(rb"\s*(#[^\n]*\n\s*)*(\d+)").match(data, pos)
        if m is None:
            raise OSError(f"{path}: malformed netpbm header")
        fields.append(int(m.group(2)))
        pos = m.end()
    pos += 1  # single whitespace byte before the raster
    width, height, maxval = fields
    if not 0 < maxval < 65536:
        raise OSError(f"{path}: invalid maxval {maxval}")
    channels = 1 if magic == b"P5" else 3
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height * channels
    raw = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
    img = raw.reshape(height, width, channels).astype(np.float64) / maxval
    return img[..., 0] if channels == 1 else img


def _write_netpbm(img: np.ndarray, path: Path, bits: int) -> None:
    maxval = (1 << bits) - 1
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[..., 0]
    magic = b"P5" if img.ndim == 2 else b"P6"
    if magic == b"P5" and path.suffix.lower() == ".ppm":
        img = np.repeat(img[..., None], 3, axis=2)
        magic = b"P6"
    q = np.round(img * maxval)
    raster = q.astype(">u2" if bits == 16 else "u1").tobytes()
    header = b"%s\n%d %d\n%d\n" % (magic, img.shape[1], img.shape[0], maxval)
    path.write_bytes(header + raster)


def load_image(path) -> np.ndarray:
    """Load an image file as float64 in [0, 1].

    Binary PGM/PPM (8 or 16 bit) are parsed directly; PNG and TIFF go through
    Pillow. Raises ``OSError`` mentioning the path on any failure.
    """
    path = Path(path)
    suffix = path.suffix.lower()
    try:
        if suffix in _NETPBM_SUFFIXES:
            return _read_netpbm(path)
        if suffix in _PIL_SUFFIXES:
            from PIL import Image

            with Image.open(path) as im:
                arr = np.asarray(im)
                if arr.dtype == np.uint8:
                    maxval = 255.0
                elif arr.dtype in (np.uint16, np.int32) or im.mode.startswith("I"):
                    maxval = 65535.0
                elif arr.dtype == bool:
                    maxval = 1.0
                else:
                    raise OSError(f"{path}: unsupported pixel type {arr.dtype}")
                arr = arr.astype(np.float64) / maxval
                if arr.ndim == 3 and arr.shape[2] == 4:
                    arr = arr[..., :3]
                return arr
    except FileNotFoundError as exc:
        raise OSError(f"{path}: no such file") from exc
    except OSError as exc:
        if str(path) in str(exc):
            raise
        raise OSError(f"{path}: {exc}") from exc
    except ValueError as exc:
        raise OSError(f"{path}: corrupt image data ({exc})") from exc
    raise OSError(f"{path}: unsupported image format {suffix!r}")


def save_image(img, path, bits: int = 16) -> None:
    """Write `img` clamped to [0, 1] at 8- or 16-bit depth.

    The format follows the suffix: ``.pgm``/``.ppm``/``.pnm`` or ``.png``.
    """
    if bits not in (8, 16):
        raise ValueError(f"bits must be 8 or 16, got {bits}")
    path = Path(path)
    arr = np.clip(as_image(img), 0.0, 1.0)
    suffix = path.suffix.lower()
    if suffix in _NETPBM_SUFFIXES:
        _write_netpbm(arr, path, bits)
    elif suffix == ".png":
        from PIL import Image

        if arr.ndim == 3 and arr.shape[2] == 1:
            arr = arr[..., 0]
        if bits == 8:
            Image.fromarray(np.round(arr * 255).astype(np.uint8)).save(path)
        elif arr.ndim == 2:
            Image.fromarray(np.round(arr * 65535).astype(np.uint16)).save(path)
        else:
            raise OSError(f"{path}: 16-bit colour PNG is not supported, use .ppm")
    else:
        raise OSError(f"{path}: unsupported image format {suffix!r}")


def load_kernel(path) -> np.ndarray:
    """Read a kernel from a text matrix or a grayscale image.

    Text kernels are rows of whitespace-separated numbers; rows are split on
    newlines or semicolons. Weights are normalized to sum to one.
    """
    path = Path(path)
    if path.suffix.lower() in _NETPBM_SUFFIXES | _PIL_SUFFIXES:
        img = load_image(path)
        if img.ndim == 3:
            raise KernelError(f"{path}: kernel image must be grayscale")
        return as_kernel(img)
    try:
        text = path.read_text()
    except FileNotFoundError as exc:
        raise OSError(f"{path}: no such file") from exc
    except OSError as exc:
        raise OSError(f"{path}: {exc}") from exc
    rows = []
    for line in re.split(r"[;\n]", text):
        line = line.split("#", 1)[0].strip()
        if line:
            try:
                rows.append([float(tok) for tok in line.replace(",", " ").split()])
            except ValueError as exc:
                raise KernelError(f"{path}: non-numeric entry ({exc})") from None
    if not rows:
        raise KernelError(f"{path}: empty kernel file")
    if len({len(r) for r in rows}) != 1:
        raise KernelError(f"{path}: ragged rows")
    try:
        return as_kernel(rows)
    except KernelError as exc:
        raise KernelError(f"{path}: {exc}") from None


def save_kernel(k, path) -> None:
    """Write kernel weights as a plain-text matrix."""
    np.savetxt(os.fspath(path), np.asarray(k, dtype=np.float64), fmt="%.17g")
