"""Weight-masked position-map loss, gradients and a small training loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..image import Image
from ..posmap import PositionMap, WeightMask
from .network import Network

log = logging.getLogger(__name__)

SMOOTHING = 1e-12


class TrainingError(ValueError):
    pass


class NonFiniteLossError(TrainingError):
    def __init__(self, iteration: int, loss: float):
        super().__init__(f"loss became non-finite ({loss}) at iteration {iteration}")
        self.iteration = iteration
        self.loss = loss


def _arrays(pred, gt, mask):
    p = pred.data if isinstance(pred, PositionMap) else np.asarray(pred, dtype=np.float64)
    g = gt.data if isinstance(gt, PositionMap) else np.asarray(gt, dtype=np.float64)
    w = mask.data if isinstance(mask, WeightMask) else np.asarray(mask, dtype=np.float64)
    if p.shape != g.shape or p.shape[:2] != w.shape:
        raise TrainingError(f"resolution mismatch: {p.shape}, {g.shape}, {w.shape}")
    return p, g, w


def weighted_loss(pred, gt, mask, squared: bool = False) -> float:
    """Sum over texels of mask weight times the distance between positions.

    The distance is ``sqrt(|d|^2 + e) - sqrt(e)`` with ``e = 1e-12``, which is
    exactly zero for ``d = 0`` and differentiable there. ``squared=True`` uses
    ``|d|^2`` instead.
    """
    p, g, w = _arrays(pred, gt, mask)
    sq = ((p - g) ** 2).sum(axis=-1)
    if squared:
        return float((w * sq).sum())
    return float((w * (np.sqrt(sq + SMOOTHING) - np.sqrt(SMOOTHING))).sum())


def loss_gradient(pred, gt, mask, squared: bool = False) -> np.ndarray:
    """d(loss)/d(pred), shaped like the position map."""
    p, g, w = _arrays(pred, gt, mask)
    d = p - g
    if squared:
        return 2.0 * w[..., None] * d
    norm = np.sqrt((d * d).sum(axis=-1) + SMOOTHING)
    return w[..., None] * d / norm[..., None]


@dataclass(frozen=True)
class Sample:
    image: Image
    target: PositionMap
    mask: WeightMask


def _batch(samples: Sequence[Sample], net: Network):
    x = np.concatenate([net._input_tensor(s.image) for s in samples])
    gt = np.stack([np.moveaxis(s.target.data, -1, 0) for s in samples])
    w = np.stack([s.mask.data for s in samples])
    return x, gt, w


def batch_loss_and_grads(net: Network, samples: Sequence[Sample], squared: bool = False):
    x, gt, w = _batch(samples, net)
    out, tape = net.forward_tensor(x)
    pred = np.moveaxis(out, 1, -1)
    target = np.moveaxis(gt, 1, -1)
    total = 0.0
    dpred = np.empty_like(pred)
    for i in range(len(samples)):
        total += weighted_loss(pred[i], target[i], w[i], squared)
        dpred[i] = loss_gradient(pred[i], target[i], w[i], squared)
    grads = net.backward_tensor(np.moveaxis(dpred, -1, 1), tape)
    return total, grads


def backward(net: Network, img: Image, gt: PositionMap, mask: WeightMask, squared: bool = False) -> dict[str, np.ndarray]:
    """Gradients of :func:`weighted_loss` with respect to every parameter."""
    return batch_loss_and_grads(net, [Sample(img, gt, mask)], squared)[1]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2e-7
    iterations: int = 500
    seed: int = 0
    optimizer: str = "momentum"
    momentum: float = 0.9
    batch_size: int | None = None
    squared: bool = False
    clip_norm: float | None = None
    warmup: int = 100

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise TrainingError("learning_rate must be positive")
        if self.iterations < 1:
            raise TrainingError("iterations must be at least 1")
        if self.optimizer not in ("sgd", "momentum"):
            raise TrainingError(f"unknown optimizer {self.optimizer!r}")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise TrainingError("clip_norm must be positive")
        if self.warmup < 0:
            raise TrainingError("warmup must be nonnegative")
        if self.batch_size is not None and self.batch_size < 1:
            raise TrainingError("batch_size must be positive")


@dataclass
class TrainResult:
    network: Network
    losses: list[float]

    @property
    def reduction(self) -> float:
        """Final over initial loss."""
        return self.losses[-1] / self.losses[0] if self.losses[0] else 0.0


def train(net: Network, dataset: Sequence[Sample], cfg: TrainConfig = TrainConfig()) -> TrainResult:
    """Gradient descent on the summed masked loss; ``net`` is not modified.

    ``losses[i]`` is the loss before update ``i``; with ``batch_size`` set,
    batches are drawn by a permutation seeded from ``cfg.seed``.
    """
    if not dataset:
        raise TrainingError("empty dataset")
    net = net.copy()
    rng = np.random.default_rng(cfg.seed)
    velocity = {k: np.zeros_like(v) for k, v in net.params.items()}
    losses: list[float] = []
    order = np.arange(len(dataset))
    cursor = len(dataset)
    for it in range(cfg.iterations):
        if cfg.batch_size is None:
            batch = list(dataset)
        else:
            idx = []
            while len(idx) < cfg.batch_size:
                if cursor >= len(order):
                    order = rng.permutation(len(dataset))
                    cursor = 0
                idx.append(order[cursor])
                cursor += 1
            batch = [dataset[i] for i in idx]
        loss, grads = batch_loss_and_grads(net, batch, cfg.squared)
        if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
            raise NonFiniteLossError(it, loss)
        losses.append(loss)
        if cfg.clip_norm is not None:
            norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
            if norm > cfg.clip_norm:
                grads = {k: g * (cfg.clip_norm / norm) for k, g in grads.items()}
        # Linear ramp over the first updates keeps the early, large steps from
        # pushing whole decoder layers below the ReLU threshold.
        lr = cfg.learning_rate * min(1.0, (it + 1) / (cfg.warmup + 1))
        for k, g in grads.items():
            if cfg.optimizer == "momentum":
                velocity[k] = cfg.momentum * velocity[k] - lr * g
                net.params[k] += velocity[k]
            else:
                net.params[k] -= lr * g
        if it % 100 == 0:
            log.debug("iteration %d loss %.6g", it, loss)
    return TrainResult(net, losses)
