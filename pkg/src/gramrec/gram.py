"""Sufficient statistics for the closed-form solvers: G = XᵀX and C = XᵀY.

These two item-item matrices fully determine every model in this package, so
they can be computed once (a single pass over the sparse interaction rows, in
ascending user-id order) and reused across regularization strengths and model
variants.  Includes the disjoint-split construction that zeroes the diagonal
of C, optional target-column centering, per-user error weighting, and a small
binary persistence format.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .data import UserItemMatrix
from .errors import DataError

PROVENANCE_PLAIN = "plain"
PROVENANCE_DISJOINT = "disjoint_split"
PROVENANCE_USER_WEIGHTED = "user_weighted"

_PROVENANCE_CODES = {PROVENANCE_PLAIN: 0, PROVENANCE_DISJOINT: 1, PROVENANCE_USER_WEIGHTED: 2}
_CODES_PROVENANCE = {v: k for k, v in _PROVENANCE_CODES.items()}

_GRAM_MAGIC = b"GRAM"
_GRAM_VERSION = 1
_GRAM_HEADER = struct.Struct("<4sIQQBB")


@dataclass
class GramStats:
    """Dense item-item statistics G = XᵀX and C = XᵀY.

    ``mu`` holds the column means of Y when the targets were centered
    (centering is recorded by its presence); ``provenance`` records which
    construction produced the statistics.
    """

    g: np.ndarray
    c: np.ndarray
    mu: np.ndarray | None
    n_users: int
    provenance: str

    @property
    def n_items(self) -> int:
        return self.g.shape[0]

    @property
    def centered(self) -> bool:
        return self.mu is not None


def _check_dims(x: UserItemMatrix, y: UserItemMatrix) -> None:
    if x.matrix.shape != y.matrix.shape:
        raise DataError(
            f"input and target matrices disagree in shape: {x.matrix.shape} vs {y.matrix.shape}"
        )


def _products(x: sp.csr_matrix, y: sp.csr_matrix) -> tuple[np.ndarray, np.ndarray]:
    """Densified XᵀX and XᵀY, accumulated in float64 over ascending user ids."""
    xt = x.T.tocsr()
    g = (xt @ x).toarray().astype(np.float64, copy=False)
    g = 0.5 * (g + g.T)
    c = (xt @ y).toarray().astype(np.float64, copy=False)
    return g, c


def build_gram(x: UserItemMatrix, y: UserItemMatrix, center_y: bool = False) -> GramStats:
    """G = XᵀX and C = XᵀY, optionally with Y's columns centered.

    Centering never densifies Y: with column means μ and the vector of
    X's column sums s = Xᵀ1, the centered cross-product is XᵀY − s·μᵀ.
    The means are stored so scoring can add them back.
    """
    _check_dims(x, y)
    g, c = _products(x.matrix, y.matrix)
    mu = None
    if center_y:
        n = x.n_users
        if n == 0:
            raise DataError("cannot center with zero users")
        mu = np.asarray(y.matrix.sum(axis=0)).ravel().astype(np.float64) / n
        x_colsum = np.asarray(x.matrix.sum(axis=0)).ravel().astype(np.float64)
        c = c - np.outer(x_colsum, mu)
    return GramStats(g=g, c=c, mu=mu, n_users=x.n_users, provenance=PROVENANCE_PLAIN)


def build_disjoint_gram(
    z: UserItemMatrix,
    explicit_lambda: bool = True,
    split_fraction: float = 0.05,
) -> GramStats:
    """Expected Gram statistics for random disjoint splits of a binary Z.

    Splitting each observed interaction independently into either the input
    or the target matrix makes diag(XᵀY) vanish; in expectation the
    off-diagonal entries stay proportional to ZᵀZ.  With ``explicit_lambda``
    (the default) the small-split-fraction approximation is used and all
    proportionality constants are dropped, so the solver's λ remains the
    single explicit regularizer:

        G = ZᵀZ,   C = ZᵀZ − diagMat(diag(ZᵀZ)).

    With ``explicit_lambda=False`` the exact expectations for a target
    fraction p = ``split_fraction`` are kept instead, which inflate G's
    diagonal and thereby add an implicit regularization of their own:

        G = (1−p)²·ZᵀZ + p(1−p)·diagMat(diag(ZᵀZ)),
        C = p(1−p)·(ZᵀZ − diagMat(diag(ZᵀZ))).
    """
    if not z.binarized or (z.matrix.nnz > 0 and not np.all(z.matrix.data == 1.0)):
        raise DataError("disjoint-split statistics require a binary matrix")
    g, _ = _products(z.matrix, z.matrix)
    diag = np.diag(g).copy()
    c = g.copy()
    np.fill_diagonal(c, 0.0)
    if not explicit_lambda:
        p = split_fraction
        if not 0.0 < p < 1.0:
            raise DataError(f"split fraction must be in (0, 1), got {p}")
        c = (p * (1.0 - p)) * c
        g = (1.0 - p) ** 2 * g
        np.fill_diagonal(g, (1.0 - p) ** 2 * diag + p * (1.0 - p) * diag)
    return GramStats(g=g, c=c, mu=None, n_users=z.n_users, provenance=PROVENANCE_DISJOINT)


def build_user_weighted_gram(x: UserItemMatrix, y: UserItemMatrix, w_u: np.ndarray) -> GramStats:
    """G = Xᵀ·diagMat(w)·X and C = Xᵀ·diagMat(w)·Y for positive user weights.

    Weighting each user's squared errors by w_u folds entirely into these
    statistics, so training proceeds unchanged downstream.  With unit
    weights the result is bit-for-bit identical to :func:`build_gram`.
    """
    _check_dims(x, y)
    w_u = np.asarray(w_u, dtype=np.float64)
    if len(w_u) != x.n_users:
        raise DataError(f"expected {x.n_users} user weights, got {len(w_u)}")
    if np.any(w_u <= 0) or not np.all(np.isfinite(w_u)):
        raise DataError("user weights must be positive and finite")
    scale = sp.diags(w_u, format="csr")
    xw = (scale @ x.matrix).tocsr()
    xw.sort_indices()
    yw = (scale @ y.matrix).tocsr()
    yw.sort_indices()
    xt = x.matrix.T.tocsr()
    g = (xt @ xw).toarray().astype(np.float64, copy=False)
    g = 0.5 * (g + g.T)
    c = (xt @ yw).toarray().astype(np.float64, copy=False)
    return GramStats(g=g, c=c, mu=None, n_users=x.n_users, provenance=PROVENANCE_USER_WEIGHTED)


def save_gram_stats(path: str | Path, stats: GramStats) -> None:
    """Write GramStats: header, then G and C as row-major little-endian f64."""
    n = stats.n_items
    header = _GRAM_HEADER.pack(
        _GRAM_MAGIC,
        _GRAM_VERSION,
        n,
        stats.n_users,
        _PROVENANCE_CODES[stats.provenance],
        1 if stats.mu is not None else 0,
    )
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(stats.g, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(stats.c, dtype="<f8").tobytes())
        if stats.mu is not None:
            fh.write(np.ascontiguousarray(stats.mu, dtype="<f8").tobytes())
    os.replace(tmp, path)


def load_gram_stats(path: str | Path) -> GramStats:
    raw = Path(path).read_bytes()
    if len(raw) < _GRAM_HEADER.size:
        raise DataError(f"{path}: truncated Gram file")
    magic, version, n, n_users, prov_code, has_mu = _GRAM_HEADER.unpack_from(raw)
    if magic != _GRAM_MAGIC:
        raise DataError(f"{path}: not a Gram statistics file (magic {magic!r})")
    if version != _GRAM_VERSION:
        raise DataError(f"{path}: unsupported Gram file version {version}")
    if prov_code not in _CODES_PROVENANCE:
        raise DataError(f"{path}: unknown provenance code {prov_code}")
    offset = _GRAM_HEADER.size
    block = n * n * 8
    expected = offset + 2 * block + (n * 8 if has_mu else 0)
    if len(raw) != expected:
        raise DataError(f"{path}: expected {expected} bytes, found {len(raw)}")
    g = np.frombuffer(raw, dtype="<f8", count=n * n, offset=offset).reshape(n, n).copy()
    offset += block
    c = np.frombuffer(raw, dtype="<f8", count=n * n, offset=offset).reshape(n, n).copy()
    offset += block
    mu = None
    if has_mu:
        mu = np.frombuffer(raw, dtype="<f8", count=n, offset=offset).copy()
    return GramStats(g=g, c=c, mu=mu, n_users=n_users, provenance=_CODES_PROVENANCE[prov_code])
