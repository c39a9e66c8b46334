import numpy as np
import pytest

from nested_ising.engine import CompiledModel, kick_matrix
from nested_ising.rng import stream


def random_unitary(rng, dim=2):
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_model(n, seed, n_links=None):
    """Compiled model with random ZZ links and random per-qubit fields."""
    rng = stream(seed, "test-model")
    pairs = [(j, k) for j in range(n) for k in range(j + 1, n)]
    if n_links is None:
        n_links = min(len(pairs), 2 * n)
    picks = rng.choice(len(pairs), size=n_links, replace=False)
    gates = tuple(sorted((pairs[p][0], pairs[p][1], float(rng.uniform(-2, 2))) for p in picks))
    kicks = np.array([kick_matrix(rng.uniform(-1.5, 1.5, size=3)) for _ in range(n)])
    return CompiledModel(n=n, zz_gates=gates, kick_gates=kicks)


@pytest.fixture
def rng():
    return stream(20240601, "tests")


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
