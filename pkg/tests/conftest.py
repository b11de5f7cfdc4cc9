import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fluokf.model import ModelParams
from fluokf.sim import SimConfig, integrate, sample_measurements


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running statistical checks")


@pytest.fixture(scope="session")
def params():
    return ModelParams()


@pytest.fixture(scope="session")
def interior_params():
    """Parameters with a hand-computable interior equilibrium at (1, 1, 1)."""
    return ModelParams(gamma=1.0, alpha=0.5, s_in=3.0, d=0.25, mu_max=1.0, k_s=1.0)


@pytest.fixture(scope="session")
def sim_config():
    return SimConfig()


@pytest.fixture(scope="session")
def truth(params, sim_config):
    return integrate(params, sim_config)


@pytest.fixture(scope="session")
def noisy(truth, sim_config):
    return sample_measurements(truth, sim_config, seed=7)


@pytest.fixture(scope="session")
def noiseless(truth, sim_config):
    """Exact samples of f, with the filters told R = 1e-4."""
    meas = sample_measurements(truth, replace(sim_config, meas_variance=0.0))
    return replace(meas, meas_variance=1e-4)
