"""Analytic face-like height fields with matching thermal renders.

A face is an ellipsoidal cap with a nose ridge, described over a UV square.
The same parameters yield a thermal-looking image (warm face, cool nose,
hot eye corners) and the ground-truth position map of every UV texel, so
training and tests need no external data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .image import Image, filter_planes, BINOMIAL

FACE_RADIUS = 0.9

EYE_CENTRES = ((-0.36, -0.2), (0.36, -0.2))
NOSE_CENTRE = (0.0, 0.12)
MOUTH_CENTRE = (0.0, 0.48)


@dataclass(frozen=True)
class FaceParams:
    """Face placement in normalised image coordinates.

    ``cx, cy`` locate the face centre, ``ax, ay`` are the half extents of the
    UV square in the image, ``depth`` is the cap height as a fraction of the
    image width and ``nose`` the height of the nose ridge.
    """

    cx: float = 0.5
    cy: float = 0.52
    ax: float = 0.34
    ay: float = 0.42
    depth: float = 0.25
    nose: float = 0.08
    warmth: float = 0.0

    @classmethod
    def random(cls, rng: np.random.Generator) -> "FaceParams":
        return cls(
            cx=rng.uniform(0.44, 0.56),
            cy=rng.uniform(0.46, 0.56),
            ax=rng.uniform(0.28, 0.38),
            ay=rng.uniform(0.36, 0.44),
            depth=rng.uniform(0.18, 0.3),
            nose=rng.uniform(0.05, 0.1),
            warmth=rng.uniform(-0.08, 0.08),
        )


def _bump(s, t, centre, width):
    return np.exp(-((s - centre[0]) ** 2 + (t - centre[1]) ** 2) / (2 * width * width))


def height(p: FaceParams, s: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Face height over local coordinates ``s, t`` in [-1, 1], in image widths."""
    r2 = s * s + t * t
    cap = np.sqrt(np.clip(1.0 - r2, 0.0, None))
    ridge = np.exp(-(s * s) / (2 * 0.07**2)) * np.exp(-((t - 0.02) ** 2) / (2 * 0.22**2))
    sockets = _bump(s, t, EYE_CENTRES[0], 0.12) + _bump(s, t, EYE_CENTRES[1], 0.12)
    return p.depth * cap + p.nose * ridge - 0.02 * sockets


def uv_grid(resolution: int) -> tuple[np.ndarray, np.ndarray]:
    """Local coordinates of texel centres, rows running along ``t``."""
    c = (np.arange(resolution) + 0.5) / resolution * 2.0 - 1.0
    t, s = np.meshgrid(c, c, indexing="ij")
    return s, t


def face_region(resolution: int) -> np.ndarray:
    s, t = uv_grid(resolution)
    return s * s + t * t < FACE_RADIUS**2


def position_map(p: FaceParams, width: int, height_px: int, resolution: int) -> np.ndarray:
    """Ground-truth ``(resolution, resolution, 3)`` map in image pixel units."""
    s, t = uv_grid(resolution)
    x = (p.cx + p.ax * s) * width - 0.5
    y = (p.cy + p.ay * t) * height_px - 0.5
    z = height(p, s, t) * width
    return np.stack([x, y, z], axis=-1)


def thermal_image(
    p: FaceParams, width: int, height_px: int, rng: np.random.Generator | None = None
) -> Image:
    """Render a grayscale thermal-style frontal face.

    With ``rng`` the image also gets a smooth skin-temperature texture.
    """
    ys, xs = np.mgrid[0:height_px, 0:width].astype(np.float64)
    s = ((xs + 0.5) / width - p.cx) / p.ax
    t = ((ys + 0.5) / height_px - p.cy) / p.ay
    r2 = s * s + t * t
    face = 1.0 / (1.0 + np.exp((np.sqrt(r2) - FACE_RADIUS) / 0.03))
    z = height(p, s, t) / max(p.depth + p.nose, 1e-6)
    skin = 0.55 + p.warmth + 0.2 * np.clip(z, 0, 1)
    skin += 0.3 * (_bump(s, t, (-0.17, -0.2), 0.08) + _bump(s, t, (0.17, -0.2), 0.08))
    skin -= 0.25 * _bump(s, t, (0.0, 0.28), 0.1)
    skin -= 0.15 * (_bump(s, t, EYE_CENTRES[0], 0.13) + _bump(s, t, EYE_CENTRES[1], 0.13))
    mouth = np.exp(-((t - MOUTH_CENTRE[1]) ** 2) / (2 * 0.03**2)) * (np.abs(s) < 0.3)
    skin += 0.2 * mouth
    # Forehead-to-neck falloff and a neck column under the chin.
    neck = (np.abs(s) < 0.45) & (t > 0.6)
    background = 0.12 + 0.05 * (ys / height_px) + 0.28 * neck
    img = face * skin + (1 - face) * background
    if rng is not None:
        fine = rng.standard_normal((1, height_px, width))
        coarse = fine.copy()
        for _ in range(12):
            coarse = filter_planes(coarse, BINOMIAL)
        fine = filter_planes(fine, BINOMIAL)
        coarse = coarse[0] / (coarse.std() + 1e-12)
        fine = fine[0] / (fine.std() + 1e-12)
        img = img + (0.015 + 0.02 * face) * coarse + 0.01 * fine
    return Image(np.clip(img, 0.0, 1.0)[None])


def degrade(
    img: Image,
    contrast: float = 0.2,
    blur: int = 0,
    noise: float = 0.0,
    rng: np.random.Generator | None = None,
) -> Image:
    """Washed-out copy quantised to 8 bits, as a dim thermal capture looks.

    The contrast around the image mean is scaled by ``contrast`` and the level
    is pulled down to 0.35. Optional binomial blur passes and Gaussian noise.
    """
    x = img.data
    for _ in range(blur):
        x = filter_planes(x, BINOMIAL)
    x = 0.35 + contrast * (x - x.mean())
    if noise:
        if rng is None:
            raise ValueError("noise needs an rng")
        x = x + noise * rng.standard_normal(x.shape)
    return Image(np.clip(np.rint(x * 255.0), 0, 255) / 255.0)
