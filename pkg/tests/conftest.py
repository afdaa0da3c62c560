import numpy as np
import pytest

from consequential.config import get_settings
from consequential.services.oracle import DiscreteEnv


@pytest.fixture(autouse=True)
def quiet_progress(monkeypatch, tmp_path):
    """No progress bars, and runs without an output key land in tmp_path."""
    monkeypatch.setenv("PROGRESS", "false")
    monkeypatch.setenv("OUTPUT_DIR", str(tmp_path / "runs"))
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def three_point_env():
    return DiscreteEnv(
        points=[-1.0, 0.0, 1.0],
        groups=[0, 1, 0],
        probabilities=[0.3, 0.3, 0.4],
        conditionals=[0.2, 0.5, 0.9],
    )


@pytest.fixture
def four_point_env():
    return DiscreteEnv(
        points=[-1.0, -0.5, 0.5, 1.0],
        groups=[0, 1, 0, 1],
        probabilities=[0.2, 0.3, 0.25, 0.25],
        conditionals=[0.1, 0.45, 0.7, 0.95],
    )


def random_discrete_env(rng, size):
    """A random discrete environment with both groups present."""
    points = np.round(rng.normal(size=size), 6)
    groups = np.arange(size) % 2
    probabilities = rng.dirichlet(np.ones(size))
    probabilities = probabilities / probabilities.sum()
    probabilities[-1] = 1.0 - probabilities[:-1].sum()
    conditionals = rng.uniform(0.05, 0.95, size=size)
    return DiscreteEnv(points, groups, probabilities, conditionals)
