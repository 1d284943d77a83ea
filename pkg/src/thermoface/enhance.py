"""Multi-scale fusion refinement of thermal face images.

Two inputs are derived from the source: a gray-world white-balanced copy and
its CLAHE-equalised version. Each gets four weight maps (Laplacian contrast,
local contrast, saliency, exposedness); the normalised weights then blend the
Laplacian pyramids of the inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from .image import (
    BINOMIAL,
    Image,
    ImageError,
    Kernel,
    collapse_laplacian,
    filter_planes,
    gaussian_pyramid,
    laplacian_pyramid,
    max_levels,
    to_luminance,
)

LAPLACIAN_3X3 = Kernel(np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]]))
CHROMA_GUARD = 1e-6


class EnhanceError(ValueError):
    pass


@dataclass(frozen=True)
class EnhanceConfig:
    clahe_tiles: int = 8
    clahe_clip: float = 0.01
    fusion_levels: int = 5
    exposedness_sigma: float = 0.25
    normalization_epsilon: float = 1e-9

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise EnhanceError(f"{f.name} must be positive")
        if self.clahe_clip > 1:
            raise EnhanceError("clahe_clip must lie in (0, 1]")


@dataclass(frozen=True)
class WeightMap:
    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise EnhanceError("weight map must be 2-D")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise EnhanceError("weights must be finite and nonnegative")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def _luma(img: Image) -> np.ndarray:
    return to_luminance(img).data[0]


def as_rgb(img: Image) -> Image:
    if img.channels == 3:
        return img
    return Image(np.repeat(img.data, 3, axis=0))


def white_balance(img: Image) -> Image:
    """Gray-world balance with per-channel gains clamped to [0.5, 2]."""
    rgb = as_rgb(img).data
    means = rgb.mean(axis=(1, 2))
    if np.any(means == 0):
        raise EnhanceError("white balance undefined: a channel has zero mean")
    lum_mean = float(_luma(Image(rgb)).mean())
    gains = np.clip(lum_mean / means, 0.5, 2.0)
    return Image(np.clip(rgb * gains[:, None, None], 0.0, 1.0))


def _tile_edges(n: int, tiles: int) -> np.ndarray:
    return np.linspace(0, n, tiles + 1).round().astype(int)


def _tile_lut(levels: np.ndarray, clip: float) -> np.ndarray:
    hist = np.bincount(levels.ravel(), minlength=256).astype(np.float64)
    if np.count_nonzero(hist) == 1:
        # Single-valued tile: identity, so flat regions are left untouched.
        return np.arange(256) / 255.0
    limit = clip * levels.size
    excess = np.clip(hist - limit, 0.0, None).sum()
    hist = np.minimum(hist, limit) + excess / 256.0
    cdf = np.cumsum(hist)
    return cdf / cdf[-1]


def _interp_axis(n: int, edges: np.ndarray):
    # For every pixel: lower tile index, upper tile index and the weight of the
    # upper tile, from the distance to the tile centres.
    centres = (edges[:-1] + edges[1:] - 1) / 2.0
    pos = np.arange(n, dtype=np.float64)
    hi = np.searchsorted(centres, pos, side="right")
    lo = np.clip(hi - 1, 0, len(centres) - 1)
    hi = np.clip(hi, 0, len(centres) - 1)
    span = centres[hi] - centres[lo]
    t = np.where(span > 0, (pos - centres[lo]) / np.where(span > 0, span, 1.0), 0.0)
    return lo, hi, np.clip(t, 0.0, 1.0)


def clahe_plane(lum: np.ndarray, tiles: int, clip: float) -> np.ndarray:
    """CLAHE on a single [0, 1] plane with a ``tiles`` x ``tiles`` grid."""
    h, w = lum.shape
    if h // tiles < 2 or w // tiles < 2:
        raise EnhanceError(f"{tiles}x{tiles} tiles leave less than 2x2 pixels on a {w}x{h} image")
    levels = np.clip(np.rint(lum * 255.0), 0, 255).astype(np.int64)
    ey, ex = _tile_edges(h, tiles), _tile_edges(w, tiles)
    luts = np.empty((tiles, tiles, 256))
    for i in range(tiles):
        for j in range(tiles):
            luts[i, j] = _tile_lut(levels[ey[i]:ey[i + 1], ex[j]:ex[j + 1]], clip)
    y0, y1, ty = _interp_axis(h, ey)
    x0, x1, tx = _interp_axis(w, ex)
    yy0, xx0 = np.meshgrid(y0, x0, indexing="ij")
    yy1, xx1 = np.meshgrid(y1, x1, indexing="ij")
    wy = ty[:, None]
    wx = tx[None, :]
    top = (1 - wx) * luts[yy0, xx0, levels] + wx * luts[yy0, xx1, levels]
    bottom = (1 - wx) * luts[yy1, xx0, levels] + wx * luts[yy1, xx1, levels]
    return np.clip((1 - wy) * top + wy * bottom, 0.0, 1.0)


def clahe(img: Image, cfg: EnhanceConfig = EnhanceConfig()) -> Image:
    """Equalise luminance; colour channels keep their ratio to luminance."""
    lum = _luma(img)
    eq = clahe_plane(lum, cfg.clahe_tiles, cfg.clahe_clip)
    if img.channels == 1:
        return Image(eq[None])
    ratio = eq / np.maximum(lum, CHROMA_GUARD)
    return Image(np.clip(img.data * ratio[None], 0.0, 1.0))


def laplacian_contrast_weight(img: Image) -> WeightMap:
    lum = _luma(img)[None]
    return WeightMap(np.abs(filter_planes(lum, LAPLACIAN_3X3)[0]))


def local_contrast_weight(img: Image, cfg: EnhanceConfig = EnhanceConfig()) -> WeightMap:
    """|L - lowpass(L)| with the binomial filter applied twice."""
    lum = _luma(img)[None]
    low = filter_planes(filter_planes(lum, BINOMIAL), BINOMIAL)
    return WeightMap(np.abs(lum - low)[0])


def saliency_weight(img: Image) -> WeightMap:
    """Frequency-tuned saliency: distance of the blurred pixel to the mean colour."""
    mean = img.data.mean(axis=(1, 2))
    blurred = filter_planes(img.data, BINOMIAL)
    return WeightMap(np.sqrt(((blurred - mean[:, None, None]) ** 2).sum(axis=0)))


def exposedness_weight(img: Image, cfg: EnhanceConfig = EnhanceConfig()) -> WeightMap:
    lum = _luma(img)
    s = cfg.exposedness_sigma
    return WeightMap(np.exp(-((lum - 0.5) ** 2) / (2 * s * s)))


def weight_maps(img: Image, cfg: EnhanceConfig = EnhanceConfig()) -> list[WeightMap]:
    """The four fusion weights in order: Laplacian, local contrast, saliency, exposedness."""
    return [
        laplacian_contrast_weight(img),
        local_contrast_weight(img, cfg),
        saliency_weight(img),
        exposedness_weight(img, cfg),
    ]


def normalize_weights(
    per_input_maps: Sequence[Sequence[WeightMap]], epsilon: float = 1e-9
) -> list[WeightMap]:
    """Product-aggregate each input's maps and normalise so weights sum to 1."""
    if not per_input_maps:
        raise EnhanceError("no inputs to normalise")
    shape = per_input_maps[0][0].data.shape
    agg = []
    for maps in per_input_maps:
        if any(m.data.shape != shape for m in maps):
            raise EnhanceError("weight maps differ in dimensions")
        prod = np.ones(shape)
        for m in maps:
            prod = prod * m.data
        agg.append(prod + epsilon)
    total = np.sum(agg, axis=0)
    return [WeightMap(a / total) for a in agg]


def fuse(inputs: Sequence[Image], weights: Sequence[WeightMap], levels: int) -> Image:
    """Blend Laplacian pyramids of ``inputs`` with Gaussian pyramids of ``weights``."""
    if not inputs or len(inputs) != len(weights):
        raise EnhanceError(f"{len(inputs)} inputs but {len(weights)} weight maps")
    ref = inputs[0]
    for img, w in zip(inputs, weights):
        if img.shape != ref.shape or w.data.shape != (ref.height, ref.width):
            raise EnhanceError("fusion inputs and weights must share dimensions")
    levels = max(1, min(levels, max_levels(ref.width, ref.height)))
    fused = None
    for img, w in zip(inputs, weights):
        lap = laplacian_pyramid(img, levels).levels
        gw = gaussian_pyramid(Image(w.data[None]), levels).levels
        bands = [band.data * g.data for band, g in zip(lap, gw)]
        fused = bands if fused is None else [a + b for a, b in zip(fused, bands)]
    out = collapse_laplacian([Image(b) for b in fused])
    return Image(np.clip(out.data, 0.0, 1.0))


@dataclass(frozen=True)
class EnhanceStages:
    """Intermediate products of :func:`enhance`, in pipeline order."""

    source: Image
    balanced: Image
    equalized: Image
    weights: tuple[tuple[WeightMap, ...], ...]
    normalized: tuple[WeightMap, ...]
    output: Image


def enhance_stages(img: Image, cfg: EnhanceConfig = EnhanceConfig()) -> EnhanceStages:
    balanced = white_balance(img)
    equalized = clahe(balanced, cfg)
    inputs = [balanced, equalized]
    maps = [weight_maps(x, cfg) for x in inputs]
    normed = normalize_weights(maps, cfg.normalization_epsilon)
    out = fuse(inputs, normed, cfg.fusion_levels)
    if img.channels == 1:
        out = Image(out.data[:1])
    return EnhanceStages(img, balanced, equalized, tuple(map(tuple, maps)), tuple(normed), out)


def enhance(img: Image, cfg: EnhanceConfig = EnhanceConfig()) -> Image:
    """Refine ``img``; grayscale input comes back grayscale."""
    try:
        return enhance_stages(img, cfg).output
    except ImageError as exc:
        raise EnhanceError(str(exc)) from exc
