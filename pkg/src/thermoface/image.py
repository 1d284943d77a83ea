"""Raster container, separable filtering, 2x resampling and image pyramids.

Images are stored planar (channel-major) as float64 arrays of shape
``(channels, height, width)``. Every filter uses replicate (clamp-to-edge)
borders.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

LUMA_WEIGHTS = (0.299, 0.587, 0.114)
BINOMIAL5 = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


class ImageError(ValueError):
    """Invalid image geometry or arguments."""


@dataclass(frozen=True)
class Image:
    """Planar float raster with 1 or 3 channels.

    ``data`` has shape ``(channels, height, width)``. Construction copies the
    samples into a read-only float64 array and rejects non-finite values.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3 or arr.shape[0] not in (1, 3):
            raise ImageError(f"expected (C, H, W) with C in (1, 3), got {arr.shape}")
        if arr.shape[1] < 1 or arr.shape[2] < 1:
            raise ImageError(f"empty image {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ImageError("image contains non-finite samples")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_hwc(cls, arr) -> "Image":
        """Build from an interleaved ``(H, W)`` or ``(H, W, C)`` array."""
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 2:
            return cls(arr[None])
        return cls(np.moveaxis(arr, -1, 0))

    def to_hwc(self) -> np.ndarray:
        return np.moveaxis(self.data, 0, -1).copy()

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def plane(self, c: int) -> np.ndarray:
        return self.data[c]


@dataclass(frozen=True)
class Kernel:
    """Filter kernel: a 1-D separable tap vector or a 2-D grid.

    A 1-D kernel is applied along rows and then along columns.
    """

    taps: np.ndarray
    separable: bool = field(default=True)

    def __post_init__(self):
        taps = np.array(self.taps, dtype=np.float64)
        if taps.ndim not in (1, 2):
            raise ImageError("kernel must be 1-D or 2-D")
        if any(n % 2 == 0 for n in taps.shape):
            raise ImageError(f"kernel sides must be odd, got {taps.shape}")
        if not np.all(np.isfinite(taps)):
            raise ImageError("kernel taps must be finite")
        taps.setflags(write=False)
        object.__setattr__(self, "taps", taps)
        object.__setattr__(self, "separable", taps.ndim == 1)

    @property
    def normalization(self) -> float:
        s = float(self.taps.sum())
        return s * s if self.separable else s

    def as_2d(self) -> np.ndarray:
        if self.separable:
            return np.outer(self.taps, self.taps)
        return self.taps.copy()


BINOMIAL = Kernel(BINOMIAL5)


def _as_planes(img) -> np.ndarray:
    if isinstance(img, Image):
        return img.data
    arr = np.asarray(img, dtype=np.float64)
    return arr[None] if arr.ndim == 2 else arr


def correlate1d(planes: np.ndarray, taps: np.ndarray, axis: int) -> np.ndarray:
    """Correlate ``(C, H, W)`` planes with ``taps`` along ``axis`` (1 or 2)."""
    r = len(taps) // 2
    pad = [(0, 0)] * planes.ndim
    pad[axis] = (r, r)
    padded = np.pad(planes, pad, mode="edge")
    n = planes.shape[axis]
    out = np.zeros_like(planes, dtype=np.float64)
    for i, t in enumerate(taps):
        if t == 0.0:
            continue
        out += t * np.take(padded, np.arange(i, i + n), axis=axis)
    return out


def filter_planes(planes: np.ndarray, k: Kernel) -> np.ndarray:
    """Apply ``k`` to raw ``(C, H, W)`` planes with replicate borders."""
    planes = np.asarray(planes, dtype=np.float64)
    if k.separable:
        return correlate1d(correlate1d(planes, k.taps, 2), k.taps, 1)
    kh, kw = k.taps.shape
    rh, rw = kh // 2, kw // 2
    padded = np.pad(planes, ((0, 0), (rh, rh), (rw, rw)), mode="edge")
    _, h, w = planes.shape
    out = np.zeros_like(planes)
    for dy in range(kh):
        for dx in range(kw):
            t = k.taps[dy, dx]
            if t != 0.0:
                out += t * padded[:, dy:dy + h, dx:dx + w]
    return out


def convolve(img: Image, k: Kernel) -> Image:
    """Filter ``img`` with ``k`` using replicate borders.

    Kernels are applied as correlations; every kernel used in this package is
    symmetric, so this coincides with convolution.
    """
    return Image(filter_planes(img.data, k))


def to_luminance(img: Image) -> Image:
    """Rec.601 luma for 3-channel input, a copy for 1-channel input."""
    if img.channels == 1:
        return Image(img.data)
    r, g, b = img.data
    return Image((LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b)[None])


def downsample2(img: Image) -> Image:
    """Binomial blur then keep even rows and columns (ceil halving)."""
    blurred = filter_planes(img.data, BINOMIAL)
    return Image(blurred[:, ::2, ::2])


def _expand_axis(planes: np.ndarray, target: int, axis: int) -> np.ndarray:
    # Zero-insert along `axis` and blur with the doubled binomial kernel. The
    # coarse samples are replicated past the border before insertion, so the
    # result preserves constants right up to the edge.
    n = planes.shape[axis]
    idx = np.arange(n)
    prev = np.take(planes, np.clip(idx - 1, 0, n - 1), axis=axis)
    cur = planes
    nxt = np.take(planes, np.clip(idx + 1, 0, n - 1), axis=axis)
    even = (prev + 6.0 * cur + nxt) / 8.0
    odd = (cur + nxt) / 2.0
    shape = list(planes.shape)
    shape[axis] = 2 * n
    out = np.empty(shape, dtype=np.float64)
    sl_even = [slice(None)] * planes.ndim
    sl_odd = [slice(None)] * planes.ndim
    sl_even[axis] = slice(0, None, 2)
    sl_odd[axis] = slice(1, None, 2)
    out[tuple(sl_even)] = even
    out[tuple(sl_odd)] = odd
    keep = [slice(None)] * planes.ndim
    keep[axis] = slice(0, target)
    return out[tuple(keep)]


def upsample2(img: Image, target_w: int, target_h: int) -> Image:
    """Expand ``img`` to ``target_w`` x ``target_h``.

    The target must be ``2w-1`` or ``2w`` wide and ``2h-1`` or ``2h`` tall.
    """
    if target_w not in (2 * img.width - 1, 2 * img.width) or target_h not in (
        2 * img.height - 1,
        2 * img.height,
    ):
        raise ImageError(
            f"cannot upsample {img.width}x{img.height} to {target_w}x{target_h}"
        )
    planes = _expand_axis(img.data, target_w, 2)
    return Image(_expand_axis(planes, target_h, 1))


@dataclass(frozen=True)
class PyramidStack:
    levels: tuple[Image, ...]
    kind: str

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, i) -> Image:
        return self.levels[i]


def max_levels(width: int, height: int) -> int:
    return int(math.floor(math.log2(min(width, height))))


def _check_levels(img: Image, levels: int) -> None:
    top = max_levels(img.width, img.height)
    if not 1 <= levels <= max(top, 1):
        raise ImageError(f"levels must be in [1, {top}] for {img.width}x{img.height}, got {levels}")


def gaussian_pyramid(img: Image, levels: int) -> PyramidStack:
    _check_levels(img, levels)
    out = [img]
    for _ in range(levels - 1):
        out.append(downsample2(out[-1]))
    return PyramidStack(tuple(out), "gaussian")


def laplacian_pyramid(img: Image, levels: int) -> PyramidStack:
    """Band-pass decomposition; the last level is the coarsest Gaussian level."""
    g = gaussian_pyramid(img, levels).levels
    out = []
    for fine, coarse in zip(g[:-1], g[1:]):
        up = upsample2(coarse, fine.width, fine.height)
        out.append(Image(fine.data - up.data))
    out.append(g[-1])
    return PyramidStack(tuple(out), "laplacian")


def collapse_laplacian(p: PyramidStack | Sequence[Image]) -> Image:
    levels = p.levels if isinstance(p, PyramidStack) else tuple(p)
    if not levels:
        raise ImageError("empty pyramid")
    acc = levels[-1]
    for band in reversed(levels[:-1]):
        up = upsample2(acc, band.width, band.height)
        acc = Image(band.data + up.data)
    return acc


def _resample_matrix(n: int, m: int) -> np.ndarray:
    # Tent filter widened by the shrink factor, so downscaling averages
    # instead of aliasing. Rows sum to one.
    support = max(1.0, n / m)
    centre = (np.arange(m) + 0.5) * n / m - 0.5
    w = np.clip(1.0 - np.abs(np.arange(n)[None, :] - centre[:, None]) / support, 0.0, None)
    return w / w.sum(axis=1, keepdims=True)


def resize(img: Image, width: int, height: int) -> Image:
    """Antialiased linear resampling to an arbitrary size (pixel-centre aligned)."""
    if width < 1 or height < 1:
        raise ImageError(f"invalid target size {width}x{height}")
    if (width, height) == (img.width, img.height):
        return Image(img.data)
    ry = _resample_matrix(img.height, height)
    rx = _resample_matrix(img.width, width)
    return Image(np.einsum("yh,chw,xw->cyx", ry, img.data, rx))


def stretch(img: Image) -> Image:
    """Map the sample range onto [0, 1]; constant images are returned as is."""
    lo, hi = float(img.data.min()), float(img.data.max())
    if hi <= lo:
        return Image(img.data)
    return Image((img.data - lo) / (hi - lo))
