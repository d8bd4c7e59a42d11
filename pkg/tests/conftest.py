import json

import numpy as np
import pytest

from config import FluidParams


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def bingham():
    return FluidParams.bingham(mu1=1.0, tau_star=1.0)


@pytest.fixture
def cosserat():
    return FluidParams(mu1=1.0, mu2=0.7, nu=0.5, tau_star=0.8, p=2.2, q=3.0)


@pytest.fixture
def write_config(tmp_path):
    """Dump a dict as JSON under tmp_path and return the path."""

    def write(data, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(data), encoding="utf-8")
        return path

    return write
