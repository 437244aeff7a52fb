import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from pznn.pz import PolynomialZonotope

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def toy_pz():
    return PolynomialZonotope([4, 4], [[2, 1, 2], [0, 2, 2]], [[1], [0]], [[1, 0, 3], [0, 1, 1]])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_pz(rng, n=1, h_max=4, q_max=3, p_max=3, e_max=3, scale=2.0):
    h = int(rng.integers(0, h_max + 1))
    q = int(rng.integers(0, q_max + 1))
    p = int(rng.integers(1, p_max + 1))
    return PolynomialZonotope(
        rng.uniform(-scale, scale, n),
        rng.uniform(-scale, scale, (n, h)),
        rng.uniform(-scale, scale, (n, q)),
        rng.integers(0, e_max + 1, (p, h)),
    )


@st.composite
def pz_strategy(draw, n=None, h_max=4, q_max=3, p_max=3):
    seed = draw(st.integers(0, 2 ** 32 - 1))
    r = np.random.default_rng(seed)
    dim = n if n is not None else int(r.integers(1, 4))
    return random_pz(r, dim, h_max, q_max, p_max)


def sample_points(pz, N, rng):
    from pznn.pz import evaluate_batch, sample_factors

    a, b = sample_factors(pz, N, rng)
    return a, b, evaluate_batch(pz, a, b)


# one line per acceptance criterion, shown at the end of the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
