import numpy as np
import pytest

from adaroute.config import AdapterConfig, BackboneConfig, RunConfig, TaskConfig, TrainConfig
from adaroute.expert_center import init_center
from adaroute.adapter import init_adapter


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow acceptance tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long acceptance run, needs --runslow")


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
def small_center():
    """C=8, latent 4, M=3, kernels 3/5/7."""
    return init_center(3, 8, 4, (3, 5, 7), seed=11)


@pytest.fixture
def small_adapter(small_center):
    return init_adapter("site", small_center, hidden=5, seed=12)


def tiny_config(**overrides) -> RunConfig:
    """A config small enough to train for a few steps in a test."""
    config = RunConfig(
        seed=3,
        backbone=BackboneConfig(style="swin_like", depths=[1, 1], dims=[8, 16], patch=[2, 2],
                                mlp_ratio=2, head_dim=4),
        adapter=AdapterConfig(latent=4, router_hidden=4),
        task=TaskConfig(kind="blob_seg", n_classes=3, image_size=8, eval_size=4),
        train=TrainConfig(steps=3, batch_size=2, lr=1e-2, eval_every=2),
    )
    for key, value in overrides.items():
        section, _, name = key.partition("__")
        if name:
            setattr(getattr(config, section), name, value)
        else:
            setattr(config, section, value)
    config.validate()
    return config


@pytest.fixture
def tiny():
    return tiny_config
