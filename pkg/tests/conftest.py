import numpy as np
import pytest

from spfrecon import forward


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def phantom16():
    return forward.make_phantom(16, seed=2)


@pytest.fixture(scope="session")
def phantom32():
    return forward.make_phantom(32, seed=1)


def smooth_volume(n, rng, sigma=1.5):
    from scipy import ndimage

    v = ndimage.gaussian_filter(rng.normal(size=(n, n, n)), sigma, mode="wrap")
    return v / np.abs(v).max()


def random_spectrum(n, rng):
    return rng.normal(size=(n, n, n)) + 1j * rng.normal(size=(n, n, n))


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("tests.test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.write_sep("=", "acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
