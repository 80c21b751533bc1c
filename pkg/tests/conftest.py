"""Shared fixtures and independent oracle implementations.

The oracles here deliberately avoid the library's code paths: ridge systems
are solved with numpy's LU-based ``linalg.solve`` on explicitly reduced
feature sets (the library uses a Cholesky inverse plus a rank correction),
and correlations are computed with a two-pass loop over raw columns (the
library derives them from Gram statistics).  Agreement between the two
routes is the point of the tests.
"""

import subprocess
import sys

import numpy as np
import pytest
import scipy.sparse as sp

from gramrec import InteractionSet, UserItemMatrix, build_gram


def ridge_oracle(x: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    """Unconstrained ridge: solve (XtX + lam I) B = XtY column by column."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.shape[1]
    a = x.T @ x + lam * np.eye(n)
    return np.linalg.solve(a, x.T @ y)


def constrained_ridge_oracle(x: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    """Zero-diagonal ridge by brute force: column j is fit without feature j."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.shape[1]
    b = np.zeros((n, n))
    for j in range(n):
        rest = [i for i in range(n) if i != j]
        xs = x[:, rest]
        a = xs.T @ xs + lam * np.eye(n - 1)
        b[rest, j] = np.linalg.solve(a, xs.T @ y[:, j])
    return b


def two_pass_correlation(x: np.ndarray) -> np.ndarray:
    """Textbook Pearson correlation of columns; zero-variance rows/cols -> 0."""
    x = np.asarray(x, dtype=np.float64)
    n_users, n_items = x.shape
    m = x.mean(axis=0)
    s = x.std(axis=0)
    out = np.zeros((n_items, n_items))
    for i in range(n_items):
        for j in range(n_items):
            if s[i] == 0.0 or s[j] == 0.0:
                continue
            cov = np.mean((x[:, i] - m[i]) * (x[:, j] - m[j]))
            out[i, j] = cov / (s[i] * s[j])
    np.fill_diagonal(out, 1.0)
    return out


def binary_matrix(
    rng: np.random.Generator,
    n_users: int,
    n_items: int,
    density: float = 0.4,
) -> UserItemMatrix:
    """Random binary interaction matrix with no empty or full columns."""
    while True:
        dense = (rng.random((n_users, n_items)) < density).astype(np.float64)
        sums = dense.sum(axis=0)
        if np.all(sums > 0) and np.all(sums < n_users):
            break
    return UserItemMatrix(matrix=sp.csr_matrix(dense), binarized=True)


def matrix_from_dense(dense: np.ndarray) -> UserItemMatrix:
    dense = np.asarray(dense, dtype=np.float64)
    binarized = bool(np.all((dense == 0.0) | (dense == 1.0)))
    return UserItemMatrix(matrix=sp.csr_matrix(dense), binarized=binarized)


def gram_of(dense: np.ndarray, target: np.ndarray | None = None, **kwargs):
    """Gram statistics of a dense array, optionally with a separate target."""
    x = matrix_from_dense(dense)
    y = x if target is None else matrix_from_dense(target)
    return build_gram(x, y, **kwargs)


def make_iset(
    events: list[tuple[int, int, float]],
    n_users: int | None = None,
    n_items: int | None = None,
    timestamps: list[int] | None = None,
) -> InteractionSet:
    """Interaction set from (user id, item id, value) triples."""
    uids = np.asarray([e[0] for e in events], dtype=np.int64)
    iids = np.asarray([e[1] for e in events], dtype=np.int64)
    vals = np.asarray([e[2] for e in events], dtype=np.float64)
    nu = int(uids.max()) + 1 if n_users is None else n_users
    ni = int(iids.max()) + 1 if n_items is None else n_items
    user_keys = [f"u{k}" for k in range(nu)]
    item_keys = [f"i{k}" for k in range(ni)]
    return InteractionSet(
        user_ids=uids,
        item_ids=iids,
        values=vals,
        timestamps=None if timestamps is None else np.asarray(timestamps, dtype=np.int64),
        user_keys=user_keys,
        item_keys=item_keys,
        user_index={k: i for i, k in enumerate(user_keys)},
        item_index={k: i for i, k in enumerate(item_keys)},
    )


def run_cli(args: list[str], cwd=None) -> subprocess.CompletedProcess:
    """Run the command-line interface in a subprocess."""
    return subprocess.run(
        [sys.executable, "-m", "gramrec", *args],
        capture_output=True,
        text=True,
        cwd=cwd,
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20260821)
