import sys

import numpy as np
import pytest

from thermoface.image import Image


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_image(rng, h, w, c=1) -> Image:
    return Image(rng.random((c, h, w)))


def dyadic_image(rng, h, w, c=1) -> Image:
    # Multiples of 1/256 keep every binomial-filter sum exact in float64.
    return Image(rng.integers(0, 257, size=(c, h, w)) / 256.0)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
