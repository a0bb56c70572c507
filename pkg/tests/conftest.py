import numpy as np
import pytest
from hypothesis import settings

from adaptcl.config import ExperimentConfig
from adaptcl.model import ModelShape, init_mlp

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile("ci")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_model(rng):
    return init_mlp(ModelShape((5, 6, 4, 3)), rng)


@pytest.fixture
def tiny_cfg():
    """A run small enough for unit tests (~0.2 s)."""
    return ExperimentConfig(workers=4, rounds=8, prune_interval=2, samples=400,
                            test_samples=100, hidden=(16, 8), epochs=1.0)


def randomize_bn(model, rng):
    for bn in model.bn:
        if bn is not None:
            bn.scale[:] = rng.uniform(0.5, 1.5, bn.scale.shape)
            bn.shift[:] = rng.normal(size=bn.shift.shape)
            bn.running_mean[:] = rng.normal(size=bn.running_mean.shape)
            bn.running_var[:] = rng.uniform(0.5, 2.0, bn.running_var.shape)
    return model
