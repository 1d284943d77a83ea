"""
From one image to a mesh and a pose strip
=========================================

The bundled desk-scale network predicts a 32x32 position map. Each texel is
a 3-D point in image pixels, so the map triangulates directly into a mesh
that can be coloured from the image, rotated and rendered.

    python3 demos/reconstruct_poses.py [OUT_DIR]
"""

import sys
from pathlib import Path

import numpy as np

from thermoface.enhance import enhance
from thermoface.formats import write_image
from thermoface.image import Image
from thermoface.pipeline import DEFAULT_CHECKPOINT, reconstruct
from thermoface.posmap import export_obj
from thermoface.regressor import default_weight_mask, read_checkpoint
from thermoface.synthetic import FaceParams, degrade, position_map, thermal_image

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out.mkdir(parents=True, exist_ok=True)
net = read_checkpoint(DEFAULT_CHECKPOINT)
print(f"network: {net.parameter_count} parameters, input {net.spec.input_size}x{net.spec.input_size}")

###############################################################################
# A fresh synthetic face, so the true surface is known.
rng = np.random.default_rng(7)
params = FaceParams.random(rng)
img = degrade(thermal_image(params, 256, 256, rng))
truth = position_map(params, 256, 256, 32)

# Refine first, as the pipeline does; the texture comes from the refined image.
rec = reconstruct(enhance(img), net)
face = default_weight_mask(32).data > 0
err = np.abs(rec.posmap.data - truth)[face]
print(f"mean |error| over the face: x {err[:, 0].mean():.1f}px  y {err[:, 1].mean():.1f}px  z {err[:, 2].mean():.1f}px")
print(f"mesh: {len(rec.mesh.vertices)} vertices, {len(rec.mesh.triangles)} triangles")

###############################################################################
# Renders at -30..+30 degrees of yaw, then the depth map, in one strip.
(out / "face.obj").write_bytes(export_obj(rec.mesh))
frames = [rec.renders[y].data.mean(axis=0) for y in sorted(rec.renders)]
frames.append(rec.depth.data[0])
write_image(out / "pose_strip.png", Image(np.concatenate(frames, axis=1)[None]))
print(f"wrote {out / 'face.obj'} and {out / 'pose_strip.png'}")
