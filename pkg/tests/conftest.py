import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from zerosmooth.backbone import BackboneConfig, ToyDenoiser, train
from zerosmooth.diffusion import NoiseSchedule

MICRO = BackboneConfig(t0=2, channels=1, height=4, width=4, dim=8, heads=2,
                       blocks=1, pos_mode="rpe")
SMALL = BackboneConfig(t0=4, channels=1, height=8, width=8, dim=16, heads=2,
                       blocks=1, pos_mode="rpe")


@pytest.fixture(scope="session")
def schedule():
    return NoiseSchedule.linear_beta(1000)


@pytest.fixture(scope="session")
def short_schedule():
    return NoiseSchedule.linear_beta(100)


@pytest.fixture()
def micro_model():
    return ToyDenoiser.initialize(MICRO, seed=3)


@pytest.fixture()
def small_model():
    return ToyDenoiser.initialize(SMALL, seed=0)


@pytest.fixture(scope="session")
def trained_model(schedule):
    """Default toy backbone trained for the full 2k steps (shared, slow)."""
    result = train(BackboneConfig(), schedule, 2000, seed=0, dtype=np.float32)
    return result


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(0)
