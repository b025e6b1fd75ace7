import numpy as np
import pytest

from dynlatent.model import DynamicNetwork, ModelParams


def random_params(n, rng, beta_in=1.0, beta_out=2.0):
    r = rng.dirichlet(np.full(n, 3.0))
    return ModelParams(tau2=0.5, sigma2=0.05, beta_in=beta_in, beta_out=beta_out, radii=r)


def random_network(n, T, rng, density=0.3, missing=0.0, directed=True):
    cells = (rng.random((T, n, n)) < density).astype(np.int8)
    if not directed:
        cells = np.triu(cells, 1)
        cells = cells | cells.transpose(0, 2, 1)
    if missing:
        mask = rng.random((T, n, n)) < missing
        if not directed:
            mask = np.triu(mask, 1)
            mask = mask | mask.transpose(0, 2, 1)
        cells[mask] = -1
    return DynamicNetwork(cells, directed=directed)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
