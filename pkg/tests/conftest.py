import numpy as np
import pytest
from hypothesis import HealthCheck, settings

import time

from ssg import KnnCandidates, build_nssg, gaussian_mixture, nn_descent

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def mixture10k():
    """10k base points and 1000 held-out queries, 128-dim, one seeded draw."""
    x = gaussian_mixture(11000, 128, seed=0)
    return np.ascontiguousarray(x[:10000]), np.ascontiguousarray(x[10000:])


@pytest.fixture(scope="session")
def desk_nssg(mixture10k):
    """The standard 10k index: NN-descent K=50, then l=100, r=50, s=10, 60 degrees."""
    x, _ = mixture10k
    t = time.perf_counter()
    knn = nn_descent(x, k=50, seed=0)
    idx = build_nssg(x, KnnCandidates(knn, x), l=100, r=50, s=10, alpha=60.0, seed=0)
    return knn, idx, time.perf_counter() - t


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
