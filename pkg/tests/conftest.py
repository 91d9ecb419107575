import numpy as np
import pytest

from survkit.dataset import Covariate, CovariateSchema, Dataset

# acceptance results, printed once at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


def exponential_cox_data(n, beta, seed, censor=None, continuous=True):
    """Exponential survival with log-rate ``Z @ beta``."""
    rng = np.random.default_rng(seed)
    beta = np.asarray(beta, dtype=float)
    Z = rng.normal(size=(n, beta.size)) if continuous else rng.integers(0, 2, (n, beta.size)).astype(float)
    t = rng.exponential(1.0 / np.exp(Z @ beta))
    if censor is None:
        return Dataset.from_arrays(Z, t, np.ones(n))
    return Dataset.from_arrays(Z, np.minimum(t, censor), (t <= censor).astype(float))


@pytest.fixture
def small_schema():
    return CovariateSchema((
        Covariate("age", "continuous", unit="years"),
        Covariate("female", "binary"),
        Covariate("mode", "categorical", ("transit", "car", "active")),
    ))
