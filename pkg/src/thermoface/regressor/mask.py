"""Loss weight mask over the UV layout of the synthetic faces.

Four levels: 68 landmark texels weigh 16, the eye, nose and mouth regions 4,
the remaining face 3 and everything outside the face 0.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..formats import read_image
from ..posmap import WeightMask
from ..synthetic import EYE_CENTRES, FACE_RADIUS, MOUTH_CENTRE, uv_grid

NATIVE_RESOLUTION = 256
LANDMARK, FEATURE, FACE, OUTSIDE = 16.0, 4.0, 3.0, 0.0
MASK_FILE = Path(__file__).resolve().parent.parent / "data" / "face_mask.pgm"


def landmarks() -> np.ndarray:
    """68 landmark positions ``(s, t)`` in local face coordinates."""
    jaw_angles = np.linspace(0.0, np.pi, 17)
    jaw = 0.85 * np.stack([np.cos(jaw_angles), np.sin(jaw_angles)], axis=1)[::-1]
    brows = [(x, -0.42 - 0.04 * (1 - ((x - c) / 0.2) ** 2)) for c in (-0.36, 0.36)
             for x in np.linspace(c - 0.2, c + 0.2, 5)]
    bridge = [(0.0, t) for t in np.linspace(-0.15, 0.15, 4)]
    nostrils = [(x, 0.25) for x in np.linspace(-0.12, 0.12, 5)]
    pts = [*jaw, *brows, *bridge, *nostrils]
    for cx, cy in EYE_CENTRES:
        a = np.linspace(0, 2 * np.pi, 6, endpoint=False)
        pts += list(zip(cx + 0.12 * np.cos(a), cy + 0.06 * np.sin(a)))
    for rx, ry, n in ((0.28, 0.08, 12), (0.18, 0.04, 8)):
        a = np.linspace(0, 2 * np.pi, n, endpoint=False)
        pts += list(zip(MOUTH_CENTRE[0] + rx * np.cos(a), MOUTH_CENTRE[1] + ry * np.sin(a)))
    return np.array(pts, dtype=np.float64)


def build_face_mask(resolution: int = NATIVE_RESOLUTION) -> np.ndarray:
    s, t = uv_grid(resolution)
    mask = np.where(s * s + t * t < FACE_RADIUS**2, FACE, OUTSIDE)
    eyes = np.zeros_like(mask, dtype=bool)
    for cx, cy in EYE_CENTRES:
        eyes |= ((s - cx) / 0.18) ** 2 + ((t - cy) / 0.1) ** 2 < 1
    nose = (np.abs(s) < 0.14) & (t > -0.18) & (t < 0.32)
    mouth = ((s - MOUTH_CENTRE[0]) / 0.34) ** 2 + ((t - MOUTH_CENTRE[1]) / 0.12) ** 2 < 1
    mask[(eyes | nose | mouth) & (mask > 0)] = FEATURE
    cols = np.clip(np.floor((landmarks() + 1.0) / 2.0 * resolution).astype(int), 0, resolution - 1)
    mask[cols[:, 1], cols[:, 0]] = LANDMARK
    return mask


def resample_nearest(mask: np.ndarray, resolution: int) -> np.ndarray:
    n = mask.shape[0]
    idx = np.minimum(((np.arange(resolution) + 0.5) * n / resolution).astype(int), n - 1)
    return mask[np.ix_(idx, idx)]


def default_weight_mask(resolution: int = NATIVE_RESOLUTION) -> WeightMask:
    """The bundled mask, nearest-neighbour resampled for other resolutions."""
    if resolution < 1:
        raise ValueError(f"unsupported mask resolution {resolution}")
    raw = np.rint(read_image(MASK_FILE).data[0] * 255.0)
    if resolution != raw.shape[0]:
        raw = resample_nearest(raw, resolution)
    return WeightMask(raw)
