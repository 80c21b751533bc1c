"""Item re-scaling of trained models.

Training against column-scaled targets Y*diagMat(w) yields exactly the
original zero-diagonal model post-multiplied by diagMat(w), so popularity
corrections never require retraining: build a weight vector, scale the
columns of a copy.  Weights here either dampen popular items
(w_i proportional to 1/pop_i^alpha) or adapt scores to the popularity of a
time interval (w_i proportional to (pop_i(t)/pop_i)^alpha).
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .data import PopularityVector
from .errors import DataError
from .solver import VARIANT_EASE, VARIANT_ZERO_DIAG, DenseModel

KIND_UNIFORM = "uniform"
KIND_INVERSE_POP = "inverse_pop"
KIND_TIME_ADJUSTED = "time_adjusted"
WEIGHT_KINDS = (KIND_UNIFORM, KIND_INVERSE_POP, KIND_TIME_ADJUSTED)

DEFAULT_EPSILON = 1e-9


@dataclass
class ItemWeightVector:
    """Positive per-item scaling factors with their construction recorded."""

    w: np.ndarray
    kind: str
    alpha: float

    @property
    def n_items(self) -> int:
        return len(self.w)


def _checked(w: np.ndarray, kind: str, alpha: float) -> ItemWeightVector:
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise DataError(
            "item weights must be positive and finite; "
            "a zero-popularity item with epsilon=0 is the usual cause"
        )
    return ItemWeightVector(w=w, kind=kind, alpha=alpha)


def _check_alpha(alpha: float) -> None:
    if not 0.0 <= alpha <= 1.0:
        raise DataError(f"alpha must be in [0, 1], got {alpha}")


def uniform_weights(n_items: int) -> ItemWeightVector:
    return ItemWeightVector(w=np.ones(n_items, dtype=np.float64), kind=KIND_UNIFORM, alpha=0.0)


def popularity_weights(
    pop: PopularityVector, alpha: float, epsilon: float = DEFAULT_EPSILON
) -> ItemWeightVector:
    """w_i = 1/(pop_i + epsilon)^alpha, unnormalized.

    Normalization is irrelevant for ranking, so none is applied.  alpha=0.5
    is a good operating point on the public rating datasets; epsilon keeps
    weights finite for items nobody interacted with.
    """
    _check_alpha(alpha)
    with np.errstate(divide="ignore"):  # _checked rejects the resulting inf
        w = (pop.pop + epsilon) ** (-alpha)
    return _checked(w, KIND_INVERSE_POP, alpha)


def time_popularity_weights(
    pop_t: PopularityVector,
    pop: PopularityVector,
    alpha: float,
    epsilon: float = DEFAULT_EPSILON,
) -> ItemWeightVector:
    """w_i = ((pop_i at time t + epsilon)/(pop_i + epsilon))^alpha.

    Boosts items popular within the interval relative to their overall
    popularity; pop_t = pop gives the all-ones vector.
    """
    _check_alpha(alpha)
    if pop_t.n_items != pop.n_items:
        raise DataError(
            f"popularity vectors differ in length: {pop_t.n_items} vs {pop.n_items}"
        )
    with np.errstate(divide="ignore", invalid="ignore"):  # _checked rejects nan/inf
        w = ((pop_t.pop + epsilon) / (pop.pop + epsilon)) ** alpha
    return _checked(w, KIND_TIME_ADJUSTED, alpha)


def apply_item_rescaling(model: DenseModel, weights: ItemWeightVector) -> DenseModel:
    """Copy of the model with column j multiplied by w_j.

    Equivalent to retraining on targets Y*diagMat(w); the zero diagonal is
    preserved, and stored multipliers scale along (the rescaled model is the
    exact optimum of the column-scaled objective).  The original model is
    never mutated, so weights can change per request without retraining.
    """
    if model.variant not in (VARIANT_ZERO_DIAG, VARIANT_EASE):
        raise DataError(f"re-scaling applies to zero-diagonal models, not variant {model.variant!r}")
    if weights.n_items != model.n_items:
        raise DataError(f"expected {model.n_items} weights, got {weights.n_items}")
    if model.applied_item_weights is not None:
        raise DataError("model already carries item weights; re-scale the unweighted model")
    gamma = None if model.gamma is None else model.gamma * weights.w
    return replace(
        model,
        b=model.b * weights.w[np.newaxis, :],
        applied_item_weights=weights,
        gamma=gamma,
    )


def save_weights_csv(path: str | Path, weights: ItemWeightVector, item_keys: list[str]) -> None:
    """Item-key/weight CSV with a leading comment carrying kind and alpha."""
    if len(item_keys) != weights.n_items:
        raise DataError(f"expected {weights.n_items} item keys, got {len(item_keys)}")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# kind={weights.kind} alpha={float(weights.alpha)!r}\n")
        writer = csv.writer(fh)
        writer.writerow(["item", "weight"])
        for key, val in zip(item_keys, weights.w):
            writer.writerow([key, repr(float(val))])
    os.replace(tmp, path)


def load_weights_csv(path: str | Path, item_index: dict[str, int]) -> ItemWeightVector:
    """Read a weight CSV back, aligning rows to dense item ids.

    Every item must receive a weight.  Files without the leading comment
    (hand-written ones) load as kind uniform, alpha 0.
    """
    kind = KIND_UNIFORM
    alpha = 0.0
    with Path(path).open("r", newline="", encoding="utf-8") as fh:
        first = fh.readline()
        if first.startswith("#"):
            fields = dict(
                tok.split("=", 1) for tok in first[1:].strip().split() if "=" in tok
            )
            kind = fields.get("kind", KIND_UNIFORM)
            if kind not in WEIGHT_KINDS:
                raise DataError(f"{path}: unknown weight kind {kind!r}")
            try:
                alpha = float(fields.get("alpha", "0"))
            except ValueError:
                raise DataError(f"{path}: bad alpha in weight header") from None
            first = fh.readline()
        header = next(csv.reader([first]), None)
        if header is None or [h.strip().lower() for h in header] != ["item", "weight"]:
            raise DataError(f"{path}: expected an 'item,weight' header row")
        w = np.full(len(item_index), np.nan)
        for line_no, row in enumerate(csv.reader(fh), start=2):
            if not row:
                continue
            if len(row) != 2:
                raise DataError(f"{path}: line {line_no}: expected 2 fields, got {len(row)}")
            key, val = row
            if key not in item_index:
                raise DataError(f"{path}: line {line_no}: unknown item key {key!r}")
            try:
                w[item_index[key]] = float(val)
            except ValueError:
                raise DataError(f"{path}: line {line_no}: weight is not a number: {val!r}") from None
    if np.any(np.isnan(w)):
        missing = int(np.isnan(w).sum())
        raise DataError(f"{path}: {missing} items received no weight")
    return _checked(w, kind, alpha)
