"""No-reference quality scores built on natural-scene statistics.

Both scores compare MSCN-derived features of an image against a
:class:`QualityModel` fitted on pristine images; lower is better.

Feature layout (per scale, 18 values)::

    0  ggd_shape        MSCN coefficients
    1  ggd_variance
    2  h_shape   3 h_mean   4 h_left_var   5 h_right_var    horizontal products
    6  v_shape   7 v_mean   8 v_left_var   9 v_right_var    vertical products
    10 d1_shape 11 d1_mean 12 d1_left_var 13 d1_right_var   main diagonal
    14 d2_shape 15 d2_mean 16 d2_left_var 17 d2_right_var   anti diagonal

BRISQUE vectors are the 18 values at full scale followed by the 18 values
after one :func:`~thermoface.image.downsample2` (36 total). NIQE vectors are
the 18 full-scale values of one sharp patch.

The ``brisque-distance`` score is a Mahalanobis distance to the pristine
model, not the opinion-score regressor of canonical BRISQUE.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import gamma

from .image import Image, Kernel, downsample2, filter_planes, to_luminance

MSCN_C = 1.0 / 255.0
MODEL_MAGIC = b"TQM1"
COVARIANCE_RIDGE = 1e-6
NIQE_PATCH = 96
SHARPNESS_PERCENTILE = 75.0

_SHAPE_GRID = np.arange(0.2, 10.0 + 5e-4, 0.001)
_RHO_GRID = gamma(2.0 / _SHAPE_GRID) ** 2 / (gamma(1.0 / _SHAPE_GRID) * gamma(3.0 / _SHAPE_GRID))


class QualityError(ValueError):
    pass


class DegenerateSampleError(QualityError):
    pass


def gaussian_window(radius: int = 3, sigma: float = 7.0 / 6.0) -> Kernel:
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-0.5 * x * x / (sigma * sigma))
    return Kernel(w / w.sum())


_WINDOW = gaussian_window()


@dataclass(frozen=True)
class MscnField:
    data: np.ndarray
    sigma: np.ndarray

    @property
    def shape(self):
        return self.data.shape


def mscn(img: Image | np.ndarray) -> MscnField:
    """Mean-subtracted contrast-normalised coefficients of the luminance."""
    if isinstance(img, Image):
        lum = to_luminance(img).data
    else:
        lum = np.asarray(img, dtype=np.float64)[None]
    mu = filter_planes(lum, _WINDOW)
    var = filter_planes(lum * lum, _WINDOW) - mu * mu
    sigma = np.sqrt(np.maximum(var, 0.0))
    return MscnField(((lum - mu) / (sigma + MSCN_C))[0], sigma[0])


@dataclass(frozen=True)
class GgdParams:
    shape: float
    sigma: float


@dataclass(frozen=True)
class AggdParams:
    shape: float
    left_sigma: float
    right_sigma: float
    mean: float


def _lookup_shape(ratio: float) -> float:
    return float(_SHAPE_GRID[np.argmin(np.abs(_RHO_GRID - ratio))])


def fit_ggd(samples) -> GgdParams:
    """Moment-matching fit of a zero-mean generalised Gaussian."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < 100:
        raise QualityError(f"need at least 100 samples, got {x.size}")
    second = float(np.mean(x * x))
    if second == 0.0 or np.all(x == x[0]):
        raise DegenerateSampleError("samples have zero variance")
    ratio = float(np.mean(np.abs(x))) ** 2 / second
    return GgdParams(_lookup_shape(ratio), float(np.sqrt(second)))


def fit_aggd(samples) -> AggdParams:
    """Moment-matching fit of an asymmetric generalised Gaussian."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    left, right = x[x < 0], x[x > 0]
    if left.size == 0 or right.size == 0:
        raise DegenerateSampleError("one side of the distribution has no samples")
    sl = float(np.sqrt(np.mean(left * left)))
    sr = float(np.sqrt(np.mean(right * right)))
    if sl == 0.0 or sr == 0.0:
        raise DegenerateSampleError("one side of the distribution has zero variance")
    g = sl / sr
    r_hat = float(np.mean(np.abs(x))) ** 2 / float(np.mean(x * x))
    big_r = r_hat * (g**3 + 1) * (g + 1) / (g * g + 1) ** 2
    nu = _lookup_shape(big_r)
    scale = np.sqrt(gamma(1.0 / nu) / gamma(3.0 / nu))
    eta = (sr - sl) * scale * gamma(2.0 / nu) / gamma(1.0 / nu)
    return AggdParams(nu, sl, sr, float(eta))


def _pair_products(field: np.ndarray) -> list[np.ndarray]:
    return [
        field[:, :-1] * field[:, 1:],
        field[:-1, :] * field[1:, :],
        field[:-1, :-1] * field[1:, 1:],
        field[:-1, 1:] * field[1:, :-1],
    ]


def nss_features(field: np.ndarray) -> np.ndarray:
    """The 18 per-scale statistics of an MSCN field.

    A degenerate group (e.g. a flat region with all-zero coefficients)
    contributes zeros instead of raising.
    """
    feats: list[float] = []
    try:
        g = fit_ggd(field)
        feats += [g.shape, g.sigma**2]
    except DegenerateSampleError:
        feats += [0.0, 0.0]
    for prod in _pair_products(field):
        try:
            a = fit_aggd(prod)
            feats += [a.shape, a.mean, a.left_sigma**2, a.right_sigma**2]
        except DegenerateSampleError:
            feats += [0.0, 0.0, 0.0, 0.0]
    return np.array(feats)


def brisque_features(img: Image) -> np.ndarray:
    """36 spatial statistics: 18 at full scale, 18 after one 2x reduction."""
    if img.width < 16 or img.height < 16:
        raise QualityError(f"image {img.width}x{img.height} is smaller than 16x16")
    lum = to_luminance(img)
    return np.concatenate([nss_features(mscn(lum).data), nss_features(mscn(downsample2(lum)).data)])


def niqe_features(
    img: Image, patch: int = NIQE_PATCH, percentile: float = SHARPNESS_PERCENTILE
) -> list[np.ndarray]:
    """Per-patch 18-vectors from the sharpest non-overlapping tiles.

    Each tile is normalised on its own, so the pooled statistics depend only on
    the multiset of tiles. A tile is sharp when its mean local deviation is
    positive and at least the given percentile over all tiles.
    """
    if img.width < patch or img.height < patch:
        raise QualityError(f"image {img.width}x{img.height} is smaller than one {patch}px patch")
    lum = to_luminance(img).data[0]
    tiles = [
        lum[y:y + patch, x:x + patch]
        for y in range(0, img.height - patch + 1, patch)
        for x in range(0, img.width - patch + 1, patch)
    ]
    fields = [mscn(t) for t in tiles]
    sharpness = np.array([f.sigma.mean() for f in fields])
    threshold = np.percentile(sharpness, percentile)
    return [nss_features(f.data) for f, s in zip(fields, sharpness) if s > 0 and s >= threshold]


@dataclass(frozen=True)
class QualityModel:
    kind: str
    mean: np.ndarray
    covariance: np.ndarray

    @property
    def feature_dim(self) -> int:
        return self.mean.shape[0]


FEATURE_DIMS = {"niqe": 18, "brisque-distance": 36}


def features_for(img: Image, kind: str) -> list[np.ndarray]:
    if kind == "niqe":
        return niqe_features(img)
    if kind == "brisque-distance":
        return [brisque_features(img)]
    raise QualityError(f"unknown model kind {kind!r}")


def fit_feature_model(vectors: Sequence[np.ndarray], kind: str) -> QualityModel:
    x = np.asarray(vectors, dtype=np.float64)
    dim = FEATURE_DIMS[kind]
    if x.ndim != 2 or x.shape[0] < dim + 2:
        raise QualityError(f"need at least {dim + 2} feature vectors, got {len(x)}")
    mean = x.mean(axis=0)
    centred = x - mean
    cov = centred.T @ centred / (x.shape[0] - 1) + COVARIANCE_RIDGE * np.eye(dim)
    return QualityModel(kind, mean, cov)


def fit_pristine_model(corpus: Iterable[Image], kind: str) -> QualityModel:
    """Mean and ridge-regularised covariance of the corpus' pooled features."""
    vectors = [v for img in corpus for v in features_for(img, kind)]
    return fit_feature_model(vectors, kind)


def _mahalanobis(diff: np.ndarray, cov: np.ndarray) -> float:
    try:
        sol = np.linalg.solve(cov, diff)
    except np.linalg.LinAlgError as exc:
        raise QualityError("pooled covariance is singular") from exc
    return float(np.sqrt(max(float(diff @ sol), 0.0)))


def score(img: Image, model: QualityModel) -> float:
    """Distance of ``img`` to the pristine ``model``; lower is better."""
    if model.kind == "niqe":
        vecs = np.asarray(niqe_features(img))
        if vecs.size == 0:
            raise QualityError("image has no sharp patches")
        mu = vecs.mean(axis=0)
        if len(vecs) > 1:
            c = vecs - mu
            cov = c.T @ c / (len(vecs) - 1)
        else:
            cov = np.zeros_like(model.covariance)
        return _mahalanobis(mu - model.mean, (cov + model.covariance) / 2.0)
    if model.kind == "brisque-distance":
        return _mahalanobis(brisque_features(img) - model.mean, model.covariance)
    raise QualityError(f"unknown model kind {model.kind!r}")


def dump_model(model: QualityModel) -> bytes:
    """``TQM1`` | u32 dim | f64[dim] mean | f64[dim*dim] row-major covariance."""
    dim = model.feature_dim
    return (
        MODEL_MAGIC
        + struct.pack("<I", dim)
        + model.mean.astype("<f8").tobytes()
        + np.ascontiguousarray(model.covariance, dtype="<f8").tobytes()
    )


def parse_model(data: bytes) -> QualityModel:
    if data[:4] != MODEL_MAGIC:
        raise QualityError("not a TQM1 quality model")
    if len(data) < 8:
        raise QualityError("truncated quality model header")
    (dim,) = struct.unpack("<I", data[4:8])
    kinds = {v: k for k, v in FEATURE_DIMS.items()}
    if dim not in kinds:
        raise QualityError(f"unsupported feature dimension {dim}")
    need = 8 + 8 * (dim + dim * dim)
    if len(data) != need:
        raise QualityError(f"quality model should be {need} bytes, got {len(data)}")
    mean = np.frombuffer(data, "<f8", dim, 8).astype(np.float64)
    cov = np.frombuffer(data, "<f8", dim * dim, 8 + 8 * dim).astype(np.float64).reshape(dim, dim)
    return QualityModel(kinds[dim], mean, cov)


def load_model(path) -> QualityModel:
    return parse_model(Path(path).read_bytes())


def save_model(path, model: QualityModel) -> None:
    Path(path).write_bytes(dump_model(model))


_DATA = Path(__file__).parent / "data"


def default_model(kind: str) -> QualityModel:
    """Bundled pristine model for ``"niqe"`` or ``"brisque-distance"``."""
    name = {"niqe": "niqe.tqm", "brisque-distance": "brisque.tqm"}[kind]
    return load_model(_DATA / name)


def quadrants(img: Image) -> list[Image]:
    hh, hw = img.height // 2, img.width // 2
    return [Image(img.data[:, y:y + hh, x:x + hw]) for y in (0, hh) for x in (0, hw)]


def fit_default_models(corpus: Sequence[Image]) -> tuple[QualityModel, QualityModel]:
    """The NIQE and brisque-distance models the way the bundled ones are built.

    One 36-vector per image is too few for a stable covariance, so the
    brisque-distance model pools the four quadrants of every image.
    """
    niqe = fit_pristine_model(corpus, "niqe")
    brisque = fit_pristine_model([q for img in corpus for q in quadrants(img)], "brisque-distance")
    return niqe, brisque
