import numpy as np
import pytest

from spectral_plausible import SensitivitySet, SpectralGrid, build_null_model, load_cie1964


@pytest.fixture(scope="session")
def cie():
    return load_cie1964()


@pytest.fixture(scope="session")
def cie_model(cie):
    return build_null_model(cie)


@pytest.fixture
def indicator5():
    """Five bands, channel k senses band k only."""
    return SensitivitySet(SpectralGrid(400, 10, 5), np.eye(5)[:, :3])


@pytest.fixture
def toy4():
    m = np.zeros((4, 3))
    m[0, 0] = m[1, 1] = 1.0
    m[2, 2] = m[3, 2] = 1 / np.sqrt(2)
    return SensitivitySet(SpectralGrid(400, 10, 4), m)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_sensitivities(rng, bands=31):
    return SensitivitySet(SpectralGrid(400, 10, bands), rng.uniform(0, 1, size=(bands, 3)))


def rel_err(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
