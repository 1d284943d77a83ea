from pathlib import Path

import numpy as np
import pytest

from thermoface.formats import read_image
from thermoface.image import Image, resize, stretch
from thermoface.pipeline import (
    DATA,
    DEFAULT_CHECKPOINT,
    ConfigError,
    PipelineConfig,
    config_keys,
    load_config,
    parse_config,
    predict_posmap,
    reconstruct,
)
from thermoface.posmap import rotate_yaw
from thermoface.regressor import Network, NetworkSpec, default_weight_mask, read_checkpoint
from thermoface.render import render_mesh

SAMPLE_VALUES = {
    "enhance.clahe_tiles": "4", "enhance.clahe_clip": "0.02", "enhance.fusion_levels": "3",
    "enhance.exposedness_sigma": "0.2", "enhance.normalization_epsilon": "1e-6",
    "quality.niqe_model": "n.tqm", "quality.brisque_model": "b.tqm", "quality.report_format": "csv",
    "reconstruct.checkpoint": "c.tprn", "reconstruct.mask": "m.pgm", "reconstruct.mask_threshold": "3.5",
    "reconstruct.poses": "-45, 0 45", "reconstruct.render_mode": "shaded", "output.format": "pgm",
    "train.learning_rate": "1e-6", "train.iterations": "20", "train.seed": "3", "train.optimizer": "sgd",
    "train.momentum": "0.5", "train.batch_size": "2", "train.squared": "true", "train.clip_norm": "none",
    "train.warmup": "0", "train.input_size": "16", "train.residual_blocks": "2",
    "train.transposed_blocks": "4", "train.base_channels": "4", "train.in_channels": "1",
    "train.samples": "2", "train.data_seed": "5",
}


def test_every_key_parses():
    assert set(SAMPLE_VALUES) == set(config_keys())
    text = "# all keys\n\n" + "\n".join(f"{k} = {v}  # note" for k, v in SAMPLE_VALUES.items())
    cfg = parse_config(text, base=Path("/cfg"))
    assert cfg.enhance.clahe_tiles == 4 and cfg.enhance.normalization_epsilon == 1e-6
    assert cfg.poses == (-45.0, 0.0, 45.0)
    assert cfg.checkpoint == Path("/cfg/c.tprn") and cfg.mask == Path("/cfg/m.pgm")
    assert cfg.render_mode == "shaded" and cfg.output_format == "pgm"
    assert cfg.train.optimizer.squared is True and cfg.train.optimizer.batch_size == 2
    assert cfg.train.network.input_size == 16 and cfg.train.samples == 2


def test_defaults():
    cfg = load_config(None)
    assert cfg == PipelineConfig()
    assert cfg.poses == (-30.0, -15.0, 0.0, 15.0, 30.0)
    cfg.check_paths("niqe_model", "brisque_model", "checkpoint")


@pytest.mark.parametrize(
    "text,fragment",
    [
        ("enhance.clahe_tiles=4\nenhance.bogus=1\n", "line 2"),
        ("enhance.clahe_tiles\n", "line 1"),
        ("\n\nenhance.clahe_clip=abc\n", "line 3"),
        ("train.squared=maybe\n", "line 1"),
        ("reconstruct.poses=0 95\n", "yaw"),
        ("reconstruct.render_mode=wire\n", "render_mode"),
        ("output.format=jpg\n", "jpg"),
        ("quality.report_format=json\n", "csv"),
        ("train.learning_rate=0\n", "learning_rate"),
        ("train.iterations=0\n", "iterations"),
        ("train.input_size=30\ntrain.residual_blocks=4\n", "divisible"),
        ("train.samples=0\n", "samples"),
    ],
)
def test_config_errors(text, fragment):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert fragment in str(err.value)


def test_relative_paths_and_missing_files(tmp_path):
    (tmp_path / "run.cfg").write_text("reconstruct.checkpoint = weights/net.tprn\n")
    cfg = load_config(tmp_path / "run.cfg")
    assert cfg.checkpoint == tmp_path / "weights" / "net.tprn"
    with pytest.raises(FileNotFoundError, match="net.tprn"):
        cfg.check_paths("checkpoint")


def test_predict_posmap_scales_to_source_pixels(rng):
    spec = NetworkSpec(input_size=8, residual_blocks=2, transposed_blocks=3, base_channels=2)
    net = Network.initialize(spec, seed=1)
    img = Image(rng.random((1, 24, 16)))
    pm = predict_posmap(net, img)
    raw = net.predict(stretch(resize(img, 8, 8))).data
    assert pm.resolution == (8, 8)
    assert np.allclose(pm.data[..., 0], (raw[..., 0] + 0.5) * 2 - 0.5)
    assert np.allclose(pm.data[..., 1], (raw[..., 1] + 0.5) * 3 - 0.5)
    assert np.allclose(pm.data[..., 2], raw[..., 2] * 2)


def test_reconstruct_outputs_and_yaw_zero():

    img = read_image(DATA / "corpus" / "face2_refined.pgm")
    rec = reconstruct(img, read_checkpoint(DEFAULT_CHECKPOINT))
    assert sorted(rec.renders) == [-30.0, -15.0, 0.0, 15.0, 30.0]
    assert all((r.width, r.height) == (img.width, img.height) for r in rec.renders.values())
    assert rec.depth.channels == 1 and rec.depth.data.max() == 1.0
    unrotated = render_mesh(rec.mesh, img.width, img.height, "textured")
    assert np.array_equal(rec.renders[0.0].data, unrotated.data)
    assert not np.array_equal(rec.renders[30.0].data, unrotated.data)
    assert np.array_equal(render_mesh(rotate_yaw(rec.mesh, 0.0), img.width, img.height, "textured").data, unrotated.data)


def test_bundled_model_locates_face():
    # The synthetic corpus faces sit near the centre; the mean predicted x, y
    # over the face region should land in the middle third of the frame.
    net = read_checkpoint(DEFAULT_CHECKPOINT)
    mask = default_weight_mask(net.spec.input_size).data > 0
    for name in ("face1.pgm", "face1_refined.pgm"):
        img = read_image(DATA / "corpus" / name)
        pm = predict_posmap(net, img).data
        cx, cy = pm[mask, 0].mean(), pm[mask, 1].mean()
        assert img.width / 3 < cx < 2 * img.width / 3
        assert img.height / 3 < cy < 2 * img.height / 3
