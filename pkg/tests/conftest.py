import numpy as np
import pytest
import scipy.sparse as sp

from mlfreg.core import MultiLabelDataset


def random_dataset(n=60, d=6, l=3, density=0.6, seed=0, label_rate=0.4):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d)) * (rng.random((n, d)) < density)
    W = rng.normal(size=(d, l)) * 1.5
    Y = (X @ W + rng.normal(scale=0.5, size=(n, l)) > np.quantile(X @ W, 1 - label_rate, axis=0)).astype(np.int8)
    return MultiLabelDataset.from_arrays(sp.csr_matrix(X), Y)


def random_posterior(rng, L, support_size=None, sparse=True):
    """Random distribution over a subset of {0,1}^L as (combos, probs)."""
    n = 2**L
    k = n if support_size is None else min(support_size, n)
    rows = np.sort(rng.choice(n, size=k, replace=False))
    combos = ((rows[:, None] >> np.arange(L)) & 1).astype(float)
    p = rng.dirichlet(np.full(k, 0.3 if sparse else 1.0))
    return combos, p


@pytest.fixture
def small_dataset():
    return random_dataset()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance verdicts, filled by test_acceptance.py and printed after the run
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])
