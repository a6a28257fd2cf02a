import numpy as np
import pytest

from growthopt import CostSpec, MarketModel, bundled_model_path, load_model

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def two_asset():
    """Bundled 2-asset, 2-factor, 2-shock model with its cost spec."""
    return load_model(bundled_model_path())


@pytest.fixture(scope="session")
def model2(two_asset):
    return two_asset[0]


@pytest.fixture(scope="session")
def spec2(two_asset):
    return two_asset[1]


@pytest.fixture()
def single_asset_model():
    """One asset, one factor, two shocks: growth is a plain i.i.d. average."""
    return MarketModel(
        transition=[[1.0]],
        shock_probs=[0.5, 0.5],
        returns=[[[1.1], [0.98]]],
    )


@pytest.fixture()
def free_spec2():
    return CostSpec(buy=[0.0, 0.0], sell=[0.0, 0.0], fixed=0.0)


def random_model(rng, n_z=2, n_s=2, d=2, mix=0.75):
    """Random mixing chain with returns bounded away from zero."""
    raw = rng.uniform(0.05, 1.0, (n_z, n_z))
    transition = mix * raw / raw.sum(axis=1, keepdims=True) \
        + (1 - mix) * np.full((n_z, n_z), 1.0 / n_z)
    probs = rng.dirichlet(np.ones(n_s) * 4)
    returns = rng.uniform(0.85, 1.25, (n_z, n_s, d))
    return MarketModel(transition=transition, shock_probs=probs, returns=returns)
