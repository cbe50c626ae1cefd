"""
Shared pytest fixtures
"""

import numpy as np
import pytest

from src.engine.tensor import precision, set_precision
from src.pipeline.training import train
from tests.helpers import tiny_config, write_source_dir


@pytest.fixture(autouse=True)
def reset_precision():
    yield
    set_precision("float32")


@pytest.fixture
def float64():
    with precision("float64"):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def source_dir(tmp_path):
    return write_source_dir(tmp_path / "sources")


@pytest.fixture(scope="session")
def trained_checkpoint(tmp_path_factory):
    """Two-step full-model run shared by the inference and API tests"""
    root = tmp_path_factory.mktemp("trained")
    sources = write_source_dir(root / "sources")
    return train(tiny_config(sources, root / "run", total_steps=2)).checkpoint
