"""
Overfitting one face
====================

The regressor and its masked loss are written from scratch, so the quickest
sanity check is to fit a single (image, position map) pair and watch the
loss fall. Landmarks weigh 16, eyes, nose and mouth 4, the rest of the face
3 and the background 0.

    python3 demos/train_desk_network.py
"""

import numpy as np

from thermoface.regressor import Network, NetworkSpec, TrainConfig, synthetic_dataset, train

spec = NetworkSpec()
net = Network.initialize(spec, seed=0)
sample = synthetic_dataset(1, spec.input_size, seed=0)
weights = sample[0].mask.data
print("mask levels:", {int(v): int((weights == v).sum()) for v in np.unique(weights)})

###############################################################################
# Momentum SGD with a short linear warm-up.
result = train(net, sample, TrainConfig())
for it in (0, 50, 100, 200, 300, 400, 499):
    print(f"iteration {it:>3}: loss {result.losses[it]:10.1f}")
print(f"final/initial: {result.reduction:.3f}")

###############################################################################
# Same seed, same curve.
again = train(net, sample, TrainConfig())
print("deterministic:", again.losses == result.losses)
