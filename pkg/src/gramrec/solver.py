"""Closed-form dense models from Gram statistics.

Everything here is a direct function of P = (G + lambda*I)^-1 and C.  The
unconstrained ridge solution is B = P*C.  Forcing a zero diagonal adds one
Lagrange multiplier per item and costs only a rank correction:

    gamma = diag(P*C) / diag(P),    B = P*C - P*diagMat(gamma).

When input and target coincide (C = G) the correction swallows the whole
product and B can be read off P alone: B_ij = -P_ij / P_jj off the diagonal,
zero on it.  The solvers return :class:`DenseModel`, which also carries the
provenance needed for scoring (centering means, applied item weights) and
the multipliers as diagnostics.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
from scipy.linalg import lapack

from .errors import DataError, NumericalError
from .gram import GramStats

if TYPE_CHECKING:
    from .weighting import ItemWeightVector

VARIANT_RR = "rr"
VARIANT_ZERO_DIAG = "zero_diag"
VARIANT_EASE = "ease_xy"

_VARIANT_CODES = {VARIANT_RR: 0, VARIANT_ZERO_DIAG: 1, VARIANT_EASE: 2}
_CODES_VARIANT = {v: k for k, v in _VARIANT_CODES.items()}
_WEIGHT_KIND_CODES = {"uniform": 0, "inverse_pop": 1, "time_adjusted": 2}
_CODES_WEIGHT_KIND = {v: k for k, v in _WEIGHT_KIND_CODES.items()}

_MODEL_MAGIC = b"EASE"
_MODEL_VERSION = 1
_MODEL_HEADER = struct.Struct("<4sIQBdBB")
_WEIGHT_FIELDS = struct.Struct("<Bd")


@dataclass
class PrecisionMatrix:
    """P = (G + lambda*I)^-1, symmetric."""

    p: np.ndarray

    @property
    def n_items(self) -> int:
        return self.p.shape[0]


@dataclass
class DenseModel:
    """A learned item-item weight matrix plus the flags that produced it.

    ``gamma`` holds the per-item Lagrange multipliers of the zero-diagonal
    constraint when the variant has one; it is diagnostic only and is not
    persisted.
    """

    b: np.ndarray
    variant: str
    lam: float
    mu: np.ndarray | None = None
    applied_item_weights: "ItemWeightVector | None" = None
    gamma: np.ndarray | None = None

    @property
    def n_items(self) -> int:
        return self.b.shape[0]


def invert_regularized(gram: GramStats, lam: float) -> PrecisionMatrix:
    """(G + lambda*I)^-1 by Cholesky factorization.

    lambda > 0 makes the matrix positive definite whenever G is positive
    semi-definite, so the factorization doubles as the error check.
    """
    if lam <= 0:
        raise DataError(f"regularization strength must be positive, got {lam}")
    a = np.array(gram.g, dtype=np.float64, order="F")
    if not np.all(np.isfinite(a)):
        raise NumericalError("Gram matrix contains non-finite entries")
    idx = np.diag_indices_from(a)
    a[idx] += lam
    chol, info = lapack.dpotrf(a, lower=1, clean=1, overwrite_a=1)
    if info != 0:
        raise NumericalError(
            f"Cholesky factorization of G + {lam}*I failed (info={info}); "
            "the matrix is not positive definite"
        )
    inv, info = lapack.dpotri(chol, lower=1, overwrite_c=1)
    if info != 0:
        raise NumericalError(f"triangular inversion failed (info={info})")
    p = np.tril(inv) + np.tril(inv, -1).T
    return PrecisionMatrix(p=p)


def _positive_diag(p: np.ndarray) -> np.ndarray:
    dp = np.diag(p).copy()
    if np.any(dp <= 0):
        raise NumericalError("precision matrix has a non-positive diagonal entry")
    return dp


def _precision(gram: GramStats, lam: float, precision: PrecisionMatrix | None) -> np.ndarray:
    if precision is None:
        return invert_regularized(gram, lam).p
    if precision.p.shape != gram.g.shape:
        raise DataError(
            f"precision matrix shape {precision.p.shape} does not match Gram {gram.g.shape}"
        )
    return precision.p


def solve_rr(gram: GramStats, lam: float, precision: PrecisionMatrix | None = None) -> DenseModel:
    """Unconstrained ridge solution B = P*C."""
    p = _precision(gram, lam, precision)
    b = p @ gram.c
    mu = None if gram.mu is None else gram.mu.copy()
    return DenseModel(b=b, variant=VARIANT_RR, lam=lam, mu=mu)


def solve_zero_diag(
    gram: GramStats, lam: float, precision: PrecisionMatrix | None = None
) -> DenseModel:
    """Ridge solution constrained to a zero diagonal.

    The multipliers gamma = diag(P*C) / diag(P) are stored as diagnostics;
    the diagonal is written to exactly zero after the correction so that
    downstream code can rely on it.  ``precision`` lets callers reuse an
    inverse computed with the same gram and lambda.
    """
    p = _precision(gram, lam, precision)
    b = p @ gram.c
    dp = _positive_diag(p)
    gamma = np.diag(b) / dp
    b -= p * gamma[np.newaxis, :]
    np.fill_diagonal(b, 0.0)
    mu = None if gram.mu is None else gram.mu.copy()
    return DenseModel(b=b, variant=VARIANT_ZERO_DIAG, lam=lam, mu=mu, gamma=gamma)


def solve_ease(gram: GramStats, lam: float, precision: PrecisionMatrix | None = None) -> DenseModel:
    """Zero-diagonal solution for the self-target case, read off P alone.

    With C = G the constrained solution reduces to dividing each column of
    P by the negated diagonal element: B_ij = -P_ij / P_jj, diag(B) = 0.
    Refuses statistics where C differs from G; those need the general
    :func:`solve_zero_diag`.
    """
    if gram.c is not gram.g and not np.array_equal(gram.c, gram.g):
        raise DataError(
            "this shortcut requires identical input and target statistics (C = G); "
            "use solve_zero_diag when they differ"
        )
    p = _precision(gram, lam, precision)
    dp = _positive_diag(p)
    b = -(p / dp[np.newaxis, :])
    np.fill_diagonal(b, 0.0)
    gamma = 1.0 / dp - lam
    mu = None if gram.mu is None else gram.mu.copy()
    return DenseModel(b=b, variant=VARIANT_EASE, lam=lam, mu=mu, gamma=gamma)


def clamp_nonnegative(model: DenseModel) -> DenseModel:
    """Copy of the model with all negative weights set to zero.

    The multipliers describe the unclamped optimum, so they are dropped.
    """
    return replace(model, b=np.maximum(model.b, 0.0), gamma=None)


def predict_scores(model: DenseModel, item_ids, values=None) -> np.ndarray:
    """Scores for all items given one user history row.

    ``values`` defaults to ones (binary history).  Cost is
    O(nnz(history) * n_items): only the history's rows of B are touched.
    """
    ids = np.asarray(item_ids, dtype=np.int64)
    n = model.n_items
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise DataError(f"history item id out of range [0, {n})")
    if values is None:
        vals = np.ones(ids.size, dtype=np.float64)
    else:
        vals = np.asarray(values, dtype=np.float64)
        if vals.shape != ids.shape:
            raise DataError("history ids and values differ in length")
    scores = vals @ model.b[ids, :] if ids.size else np.zeros(n, dtype=np.float64)
    if model.mu is not None:
        scores = scores + model.mu
    return scores


def save_model(path: str | Path, model: DenseModel, item_keys: list[str] | None = None) -> None:
    """Write a DenseModel: header, item-key table, B row-major little-endian
    64-bit, then the optional mu and weight vectors.  The write is atomic."""
    n = model.n_items
    if item_keys is not None and len(item_keys) != n:
        raise DataError(f"expected {n} item keys, got {len(item_keys)}")
    w = model.applied_item_weights
    header = _MODEL_HEADER.pack(
        _MODEL_MAGIC,
        _MODEL_VERSION,
        n,
        _VARIANT_CODES[model.variant],
        model.lam,
        1 if model.mu is not None else 0,
        1 if w is not None else 0,
    )
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("wb") as fh:
        fh.write(header)
        if w is not None:
            fh.write(_WEIGHT_FIELDS.pack(_WEIGHT_KIND_CODES[w.kind], w.alpha))
        keys = item_keys if item_keys is not None else []
        fh.write(struct.pack("<Q", len(keys)))
        for key in keys:
            raw = key.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        fh.write(np.ascontiguousarray(model.b, dtype="<f8").tobytes())
        if model.mu is not None:
            fh.write(np.ascontiguousarray(model.mu, dtype="<f8").tobytes())
        if w is not None:
            fh.write(np.ascontiguousarray(w.w, dtype="<f8").tobytes())
    os.replace(tmp, path)


def load_model(path: str | Path) -> tuple[DenseModel, list[str] | None]:
    """Read a model file back; returns the model and its item keys (None
    when the file was written without a key table)."""
    raw = Path(path).read_bytes()
    if len(raw) < _MODEL_HEADER.size or raw[:4] != _MODEL_MAGIC:
        raise DataError(f"{path}: not a dense model file")
    magic, version, n, variant_code, lam, has_mu, has_w = _MODEL_HEADER.unpack_from(raw)
    if version != _MODEL_VERSION:
        raise DataError(f"{path}: unsupported model file version {version}")
    if variant_code not in _CODES_VARIANT:
        raise DataError(f"{path}: unknown variant code {variant_code}")
    offset = _MODEL_HEADER.size
    kind = alpha = None
    if has_w:
        if len(raw) < offset + _WEIGHT_FIELDS.size:
            raise DataError(f"{path}: truncated model file")
        kind_code, alpha = _WEIGHT_FIELDS.unpack_from(raw, offset)
        offset += _WEIGHT_FIELDS.size
        if kind_code not in _CODES_WEIGHT_KIND:
            raise DataError(f"{path}: unknown weight kind code {kind_code}")
        kind = _CODES_WEIGHT_KIND[kind_code]
    try:
        (n_keys,) = struct.unpack_from("<Q", raw, offset)
        offset += 8
        item_keys = None
        if n_keys:
            if n_keys != n:
                raise DataError(f"{path}: key table has {n_keys} entries for {n} items")
            item_keys = []
            for _ in range(n_keys):
                (klen,) = struct.unpack_from("<I", raw, offset)
                offset += 4
                item_keys.append(raw[offset : offset + klen].decode("utf-8"))
                offset += klen
    except struct.error:
        raise DataError(f"{path}: truncated model file") from None
    expected = offset + n * n * 8 + (n * 8 if has_mu else 0) + (n * 8 if has_w else 0)
    if len(raw) != expected:
        raise DataError(f"{path}: expected {expected} bytes, found {len(raw)}")
    b = np.frombuffer(raw, dtype="<f8", count=n * n, offset=offset).reshape(n, n).copy()
    offset += n * n * 8
    mu = None
    if has_mu:
        mu = np.frombuffer(raw, dtype="<f8", count=n, offset=offset).copy()
        offset += n * 8
    weights = None
    if has_w:
        from .weighting import ItemWeightVector

        wvec = np.frombuffer(raw, dtype="<f8", count=n, offset=offset).copy()
        weights = ItemWeightVector(w=wvec, kind=kind, alpha=alpha)
    model = DenseModel(
        b=b,
        variant=_CODES_VARIANT[variant_code],
        lam=lam,
        mu=mu,
        applied_item_weights=weights,
    )
    return model, item_keys
