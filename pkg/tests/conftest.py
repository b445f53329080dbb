from __future__ import annotations

import numpy as np
import pytest

from src.diffusion.denoiser import DenoiserConfig, DenoiserNet
from src.diffusion.schedule import make_schedule


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run training reproductions")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: end-to-end training runs (minutes); enable with --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def short_schedule():
    return make_schedule(T=20, beta_start=1e-3, beta_end=0.2)


@pytest.fixture
def tiny_config():
    return DenoiserConfig(dim=2, hidden=6, depth=1, time_embed_dim=4, n_conditions=3)


@pytest.fixture
def tiny_net(tiny_config):
    # nonzero output layer so predictions depend on the parameters
    return DenoiserNet.initialize(tiny_config, np.random.default_rng(7), out_scale=0.5)
