from pathlib import Path

import numpy as np
import pytest

from glfa.data import SparseMatrix, load_matrix
from glfa.synthetic import low_rank

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def worked():
    """4x5 matrix reconstructed from the worked HOI example.

    u1..u4 -> rows 0..3, i1..i5 -> cols 0..4.
    """
    return load_matrix(FIXTURES / "worked_example.tsv")


@pytest.fixture
def tiny():
    return SparseMatrix.from_entries(2, 2, [(0, 0, 4.0), (0, 1, 3.0), (1, 0, 5.0)])


@pytest.fixture(scope="session")
def ratings_fixture():
    """200-entry discrete rating matrix used for training-path tests."""
    m, _, _ = low_rank(40, 30, rank=3, density=0.3, noise=0.3, seed=11, ratings=True)
    keep = np.sort(np.random.default_rng(11).permutation(m.nnz)[:200])
    return m.subset(keep)


def random_entries(rng, n_users, n_items, density, low=1, high=5):
    mask = rng.random((n_users, n_items)) < density
    rows, cols = np.nonzero(mask)
    vals = rng.integers(low, high + 1, size=len(rows)).astype(float)
    return [(int(u), int(i), float(v)) for u, i, v in zip(rows, cols, vals)]


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("test_acceptance")
    if module is not None and module.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(module.RESULTS, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
