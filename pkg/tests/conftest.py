import numpy as np
import pytest

from latentseg import datagen
from latentseg._kernels import available_backends

BACKENDS = available_backends()


@pytest.fixture(params=sorted(BACKENDS))
def backend(request):
    return BACKENDS[request.param]


@pytest.fixture(scope="session")
def small_population():
    return datagen.generate_population(datagen.GenConfig(n_customers=3000, feature_dim=9, seed=11))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.SUMMARY:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.SUMMARY, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
