import numpy as np
import pytest

from mvhe.dataset import MultiViewDataset

ACCEPTANCE_RESULTS = []


def random_dataset(rng, n=3, m=30, dims=5, C=5, ensure_all=True):
    """Gaussian views with random labels; every class present when ``ensure_all``."""
    if np.isscalar(dims):
        dims = [dims] * n
    labels = rng.integers(1, C + 1, m)
    if ensure_all and m >= C:
        labels[:C] = np.arange(1, C + 1)
    return MultiViewDataset(views=[rng.standard_normal((d, m)) for d in dims], labels=labels)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def record_acceptance(name, passed, detail):
    line = f"{'PASS' if passed else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_RESULTS.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
