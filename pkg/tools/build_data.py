"""Regenerate the files under src/thermoface/data.

    python3 tools/build_data.py [mask] [pristine] [models] [corpus] [checkpoint]

With no arguments every artifact is rebuilt. The pristine crops come from the
sample images shipped with scikit-image, which is only needed here.
"""

from __future__ import annotations

import argparse
import logging
from pathlib import Path

import numpy as np

from thermoface.enhance import enhance
from thermoface.formats import read_image, write_image
from thermoface.image import Image
from thermoface.quality import fit_default_models, save_model
from thermoface.regressor import Network, NetworkSpec, TrainConfig, synthetic_dataset, train, write_checkpoint
from thermoface.regressor.mask import build_face_mask
from thermoface.synthetic import FaceParams, degrade, thermal_image

DATA = Path(__file__).resolve().parent.parent / "src" / "thermoface" / "data"
PRISTINE_SOURCES = (
    "astronaut", "brick", "camera", "cat", "chelsea", "coffee", "coins", "grass",
    "gravel", "moon", "rocket", "retina", "immunohistochemistry", "hubble_deep_field", "clock",
)
CROP = 288
CORPUS_SEED = 1
CORPUS_SIZE = 256

log = logging.getLogger("build_data")


def build_mask():
    write_image(DATA / "face_mask.pgm", Image(build_face_mask() / 255.0))


def build_pristine():
    import skimage.data
    from skimage.color import rgb2gray

    out = DATA / "pristine"
    out.mkdir(exist_ok=True)
    for name in PRISTINE_SOURCES:
        a = getattr(skimage.data, name)()
        if a.ndim == 3:
            a = rgb2gray(a[..., :3])
        a = a.astype(np.float64)
        if a.max() > 1:
            a = a / 255.0
        h, w = a.shape
        # Opposite corners give two mostly disjoint crops per source.
        for tag, (y, x) in zip("ab", [(0, 0), (h - CROP, w - CROP)]):
            crop = np.rint(a[y:y + CROP, x:x + CROP] * 255.0) / 255.0
            write_image(out / f"{name}_{tag}.png", Image(crop[None]))


def pristine_images() -> list[Image]:
    return [read_image(p) for p in sorted((DATA / "pristine").glob("*.png"))]


def build_models():
    niqe, brisque = fit_default_models(pristine_images())
    save_model(DATA / "niqe.tqm", niqe)
    save_model(DATA / "brisque.tqm", brisque)


def build_corpus():
    out = DATA / "corpus"
    out.mkdir(exist_ok=True)
    rng = np.random.default_rng(CORPUS_SEED)
    for i in range(1, 4):
        face = thermal_image(FaceParams.random(rng), CORPUS_SIZE, CORPUS_SIZE, rng)
        dim = degrade(face)
        write_image(out / f"face{i}.pgm", dim)
        write_image(out / f"face{i}_refined.pgm", enhance(dim))


def build_checkpoint(samples: int = 64, iterations: int = 3000, batch: int = 8):
    data = synthetic_dataset(samples, 32, seed=0)
    net = Network.initialize(NetworkSpec(), seed=0)
    cfg = TrainConfig(learning_rate=2e-7 / batch, iterations=iterations, batch_size=batch, warmup=200)
    result = train(net, data, cfg)
    log.info("checkpoint loss %.1f -> %.1f", result.losses[0], np.mean(result.losses[-50:]))
    write_checkpoint(DATA / "desk_prn.tprn", result.network)


STEPS = {
    "mask": build_mask,
    "pristine": build_pristine,
    "models": build_models,
    "corpus": build_corpus,
    "checkpoint": build_checkpoint,
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("steps", nargs="*", metavar="STEP", help=", ".join(STEPS))
    args = ap.parse_args()
    unknown = set(args.steps) - set(STEPS)
    if unknown:
        ap.error(f"unknown steps: {', '.join(sorted(unknown))}")
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    for name in args.steps or STEPS:
        log.info("building %s", name)
        STEPS[name]()


if __name__ == "__main__":
    main()
