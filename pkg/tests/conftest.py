import math

import numpy as np
import pytest

from gridres.fitting import RationalModel

TWO_PI = 2 * math.pi


def random_model(rng, order, e=None):
    """Random stable model with poles inside 1 Hz .. 1 kHz."""
    poles, res = [], []
    for _ in range(order // 2):
        b = TWO_PI * 10 ** rng.uniform(0, 3)
        a = -b * 10 ** rng.uniform(-2, -0.3)
        poles.append(complex(a, b))
        res.append(abs(a) * 5 * complex(rng.normal(), rng.normal()))
    if order % 2:
        p = -TWO_PI * 10 ** rng.uniform(0, 3)
        poles.append(complex(p, 0))
        res.append(complex(-p * rng.uniform(0.5, 5), 0))
    if e is None:
        e = float(rng.choice([0.0, 1e-4]))
    return RationalModel(rng.uniform(0.1, 2.0), e, poles, res)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
