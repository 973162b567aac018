import functools

import numpy as np
import pytest

from zfrate import MultiplierConfig, SectorBounds, builtin, certify_rate


@functools.lru_cache(maxsize=None)
def cached_rate(name: str, l_upper: float, cls: str = "zf", order: int = 1,
                positivity: str = "sos"):
    """Certificates are expensive; share them across test modules."""
    return certify_rate(
        builtin(name), SectorBounds(1.0, l_upper), MultiplierConfig(cls, order, -1.0, positivity)
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
