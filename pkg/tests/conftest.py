import numpy as np
import pytest

from qflow.caseio import builtin_case


@pytest.fixture(scope="session")
def case3():
    return builtin_case("case3")


@pytest.fixture(scope="session")
def case9q():
    return builtin_case("case9q")


@pytest.fixture
def rng():
    return np.random.default_rng(20231016)


def random_spd(rng, n, kappa_max=10.0):
    """Random symmetric positive definite matrix with condition number <= kappa_max."""
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    lam = rng.uniform(1.0, kappa_max, size=n)
    lam[0], lam[-1] = 1.0, rng.uniform(1.0, kappa_max)
    return (q * lam) @ q.T
