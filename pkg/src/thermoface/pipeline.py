"""Pipeline configuration and the image-to-mesh reconstruction chain.

The config file is flat ``section.key=value`` text; ``#`` starts a comment.
Unknown keys are rejected so typos do not silently fall back to defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .enhance import EnhanceConfig
from .image import Image, resize, stretch
from .posmap import (
    DEFAULT_POSES,
    FaceMesh,
    Pose,
    PositionMap,
    WeightMask,
    mesh_from_posmap,
    rotate_yaw,
    texture_vertices,
)
from .regressor import Network, NetworkSpec, TrainConfig, default_weight_mask
from .regressor.mask import resample_nearest
from .render import render_depth, render_mesh

DATA = Path(__file__).resolve().parent / "data"
DEFAULT_CHECKPOINT = DATA / "desk_prn.tprn"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainJob:
    """Network shape, optimiser settings and synthetic data for ``train``."""

    network: NetworkSpec = field(default_factory=NetworkSpec)
    optimizer: TrainConfig = field(default_factory=TrainConfig)
    samples: int = 1
    data_seed: int = 0


@dataclass(frozen=True)
class PipelineConfig:
    enhance: EnhanceConfig = field(default_factory=EnhanceConfig)
    niqe_model: Path = DATA / "niqe.tqm"
    brisque_model: Path = DATA / "brisque.tqm"
    checkpoint: Path = DEFAULT_CHECKPOINT
    mask: Path | None = None
    mask_threshold: float = 0.0
    poses: tuple[float, ...] = DEFAULT_POSES
    render_mode: str = "textured"
    output_format: str = "png"
    report_format: str = "csv"
    train: TrainJob = field(default_factory=TrainJob)

    def __post_init__(self):
        for yaw in self.poses:
            Pose(yaw)
        if self.render_mode not in ("shaded", "textured"):
            raise ConfigError(f"render_mode must be shaded or textured, got {self.render_mode!r}")
        if self.output_format not in ("png", "pgm", "ppm"):
            raise ConfigError(f"unsupported output format {self.output_format!r}")
        if self.report_format != "csv":
            raise ConfigError("csv is the only report format")

    def check_paths(self, *names: str) -> None:
        """Raise :class:`FileNotFoundError` naming the first missing path."""
        for name in names:
            p = getattr(self, name)
            if p is not None and not Path(p).is_file():
                raise FileNotFoundError(f"{name}: no such file {p}")


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_int(text: str) -> int | None:
    return None if text.lower() in ("", "none") else int(text)


def _optional_float(text: str) -> float | None:
    return None if text.lower() in ("", "none") else float(text)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(",", " ").split())


_ENHANCE = {"clahe_tiles": int, "clahe_clip": float, "fusion_levels": int,
            "exposedness_sigma": float, "normalization_epsilon": float}
_TRAIN = {"learning_rate": float, "iterations": int, "seed": int, "optimizer": str,
          "momentum": float, "batch_size": _optional_int, "squared": _bool,
          "clip_norm": _optional_float, "warmup": int}
_NETWORK = {"input_size": int, "residual_blocks": int, "transposed_blocks": int,
            "base_channels": int, "in_channels": int}
_TOP = {
    "quality.niqe_model": ("niqe_model", Path),
    "quality.brisque_model": ("brisque_model", Path),
    "quality.report_format": ("report_format", str),
    "reconstruct.checkpoint": ("checkpoint", Path),
    "reconstruct.mask": ("mask", Path),
    "reconstruct.mask_threshold": ("mask_threshold", float),
    "reconstruct.poses": ("poses", _floats),
    "reconstruct.render_mode": ("render_mode", str),
    "output.format": ("output_format", str),
}


def parse_config(text: str, base: Path | None = None) -> PipelineConfig:
    """Build a config from ``key=value`` lines; relative paths resolve against ``base``."""
    top: dict = {}
    enh: dict = {}
    opt: dict = {}
    net: dict = {}
    job: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (s.strip() for s in line.partition("="))
        if not sep:
            raise ConfigError(f"line {lineno}: expected key=value")
        section, _, name = key.partition(".")
        try:
            if section == "enhance" and name in _ENHANCE:
                enh[name] = _ENHANCE[name](value)
            elif section == "train" and name in _TRAIN:
                opt[name] = _TRAIN[name](value)
            elif section == "train" and name in _NETWORK:
                net[name] = _NETWORK[name](value)
            elif key == "train.samples":
                job["samples"] = int(value)
            elif key == "train.data_seed":
                job["data_seed"] = int(value)
            elif key in _TOP:
                attr, conv = _TOP[key]
                v = conv(value)
                if isinstance(v, Path) and base is not None and not v.is_absolute():
                    v = base / v
                top[attr] = v
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    try:
        train = TrainJob(NetworkSpec(**net), TrainConfig(**opt), **job)
        if train.samples < 1:
            raise ConfigError("train.samples must be at least 1")
        return PipelineConfig(enhance=EnhanceConfig(**enh), train=train, **top)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: Path | str | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    p = Path(path)
    return parse_config(p.read_text(), base=p.parent)


def config_keys() -> list[str]:
    keys = [f"enhance.{k}" for k in _ENHANCE] + list(_TOP)
    keys += [f"train.{k}" for k in (*_TRAIN, *_NETWORK, "samples", "data_seed")]
    return keys


@dataclass(frozen=True)
class Reconstruction:
    posmap: PositionMap
    mesh: FaceMesh
    renders: dict[float, Image]
    depth: Image


def predict_posmap(net: Network, img: Image) -> PositionMap:
    """Run the network on a resized, range-stretched copy; the map is in ``img`` pixels."""
    n = net.spec.input_size
    small = stretch(resize(img, n, n))
    pm = net.predict(small).data
    # Texel coordinates are pixel centres, so scaling is about -0.5.
    sx, sy = img.width / n, img.height / n
    out = np.empty_like(pm)
    out[..., 0] = (pm[..., 0] + 0.5) * sx - 0.5
    out[..., 1] = (pm[..., 1] + 0.5) * sy - 0.5
    out[..., 2] = pm[..., 2] * sx
    return PositionMap(out)


def reconstruct(
    img: Image,
    net: Network,
    mask: WeightMask | None = None,
    poses=DEFAULT_POSES,
    threshold: float = 0.0,
    mode: str = "textured",
) -> Reconstruction:
    """Image to textured mesh, one render per yaw and a depth map, all at source size."""
    pm = predict_posmap(net, img)
    if mask is None:
        mask = default_weight_mask(pm.resolution[0])
    elif mask.resolution != pm.resolution:
        mask = WeightMask(resample_nearest(mask.data, pm.resolution[0]))
    mesh = texture_vertices(mesh_from_posmap(pm, mask, threshold), img)
    renders = {}
    for yaw in poses:
        renders[float(yaw)] = render_mesh(rotate_yaw(mesh, Pose(yaw)), img.width, img.height, mode)
    return Reconstruction(pm, mesh, renders, render_depth(mesh, img.width, img.height))


def with_overrides(cfg: PipelineConfig, **kw) -> PipelineConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})


__all__ = [
    "DEFAULT_CHECKPOINT",
    "ConfigError",
    "PipelineConfig",
    "Reconstruction",
    "TrainJob",
    "config_keys",
    "load_config",
    "parse_config",
    "predict_posmap",
    "reconstruct",
    "with_overrides",
]
