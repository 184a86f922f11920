import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from pamdp_lab import core  # noqa: E402

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_env(rng, S, A, H, eta=1.0, cost_scale=0.5):
    P = rng.dirichlet(np.ones(S), size=(H, S, A))
    r = rng.random((H, S, A))
    c = cost_scale * rng.random((H, S, A))
    return core.Pamdp(P, r, c, rng.dirichlet(np.ones(S)), eta)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
