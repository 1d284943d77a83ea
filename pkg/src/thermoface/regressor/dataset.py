"""Synthetic (image, position map, mask) triples for desk-scale training."""

from __future__ import annotations

import numpy as np

from ..image import stretch
from ..posmap import PositionMap
from ..synthetic import FaceParams, position_map, thermal_image
from .mask import default_weight_mask
from .training import Sample


def make_sample(params: FaceParams, size: int, rng: np.random.Generator | None = None) -> Sample:
    # Inputs are range-normalised, as at inference, so the net never has to
    # learn the absolute level or contrast of a capture.
    image = stretch(thermal_image(params, size, size, rng))
    target = PositionMap(position_map(params, size, size, size))
    return Sample(image, target, default_weight_mask(size))


def synthetic_dataset(count: int, size: int = 32, seed: int = 0, textured: bool = True) -> list[Sample]:
    """``count`` random faces; the first one always uses the default placement."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        params = FaceParams() if i == 0 else FaceParams.random(rng)
        out.append(make_sample(params, size, rng if textured else None))
    return out
