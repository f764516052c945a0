import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("repo", deadline=None, derandomize=True, max_examples=60)
settings.load_profile("repo")


@pytest.fixture(scope="session")
def default_net():
    from ssmdenoise import build_network, default_config

    return build_network(default_config(), seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
