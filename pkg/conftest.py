"""
Shared pytest fixtures and the --runslow switch
"""

import numpy as np
import pytest

from generator import generator_preset
from training import TrainConfig


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False, help='Run tests marked slow')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='slow: pass --runslow to run')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_spec():
    return generator_preset('tiny')


@pytest.fixture
def toy_config():
    """A few small steps: enough to exercise every code path quickly"""
    return TrainConfig(batch_size=4, total_steps=3, eval_samples=8, log_every=1, seed=7,
                       prefetch_depth=0)
