"""
Refining a dim thermal face and scoring it
==========================================

A synthetic face from the bundled corpus is pushed through the fusion
pipeline one stage at a time, and both no-reference scores are computed
before and after. Lower is better for both.

    python3 demos/refine_and_score.py [OUT_DIR]
"""

import sys
from pathlib import Path

import numpy as np

from thermoface.enhance import enhance_stages
from thermoface.formats import read_image, write_image
from thermoface.image import Image
from thermoface.pipeline import DATA
from thermoface.quality import load_model, score

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out.mkdir(parents=True, exist_ok=True)

###############################################################################
# The degraded capture: low contrast, lifted black level, 8-bit.
src = read_image(DATA / "corpus" / "face1.pgm")
print(f"input {src.width}x{src.height}, range {src.data.min():.3f}..{src.data.max():.3f}")

###############################################################################
# Two fusion inputs are derived (white balanced, then equalised), each gets
# four weight maps, the maps are normalised and the inputs blended level by
# level in a Laplacian pyramid.
st = enhance_stages(src)
for name, w in zip(("laplacian", "local contrast", "saliency", "exposedness"), st.weights[1]):
    print(f"{name:>15} weight on the equalised input: mean {w.data.mean():.4f}")

share = st.normalized[1].data
print(f"equalised input carries {share.mean():.1%} of the weight on average")

###############################################################################
# Side by side: original on the left, refined on the right.
strip = np.concatenate([src.data, st.output.data], axis=2)
write_image(out / "face1_strip.png", Image(strip))

###############################################################################
# Scores against the bundled pristine models.
niqe = load_model(DATA / "niqe.tqm")
brisque = load_model(DATA / "brisque.tqm")
for label, img in (("original", src), ("refined", st.output)):
    print(f"{label:>9}: NIQE {score(img, niqe):.3f}  brisque-distance {score(img, brisque):.3f}")
