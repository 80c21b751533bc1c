"""Interaction-log ingestion, index maps, user splits, and popularity statistics.

Raw event logs (CSV/TSV with a header) are mapped onto dense integer user and
item ids in first-appearance order.  Everything downstream (matrices, Gram
statistics, models) works in that dense id space; the key tables are kept for
serialization and for talking to the outside world.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import DataError

DEDUP_POLICIES = ("keep_max", "keep_last", "error")


@dataclass
class InteractionSchema:
    """Column names of an interaction log. `value` and `time` are optional."""

    user: str
    item: str
    value: str | None = None
    time: str | None = None


@dataclass
class InteractionSet:
    """A deduplicated interaction log with dense user/item index maps.

    Events are stored as parallel arrays; ``user_keys[i]`` / ``item_keys[i]``
    recover the original opaque keys for dense id ``i``.  At most one event
    exists per (user, item) pair.
    """

    user_ids: np.ndarray
    item_ids: np.ndarray
    values: np.ndarray
    timestamps: np.ndarray | None
    user_keys: list[str]
    item_keys: list[str]
    user_index: dict[str, int] = field(repr=False)
    item_index: dict[str, int] = field(repr=False)

    @property
    def n_users(self) -> int:
        return len(self.user_keys)

    @property
    def n_items(self) -> int:
        return len(self.item_keys)

    @property
    def n_events(self) -> int:
        return len(self.user_ids)


@dataclass
class UserItemMatrix:
    """Sparse user-by-item matrix; rows hold (item id, value) pairs."""

    matrix: sp.csr_matrix
    binarized: bool

    @property
    def n_users(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_items(self) -> int:
        return self.matrix.shape[1]

    def rows(self, user_ids: np.ndarray) -> sp.csr_matrix:
        """Row slice for the given user ids (in the given order)."""
        return self.matrix[np.asarray(user_ids, dtype=np.intp)]

    def restrict_users(self, user_ids: np.ndarray) -> "UserItemMatrix":
        """New matrix containing only the given users' rows."""
        return UserItemMatrix(matrix=self.rows(user_ids), binarized=self.binarized)


@dataclass
class SplitSpec:
    """Disjoint user sets for strong-generalization evaluation."""

    train_users: np.ndarray
    validation_users: np.ndarray
    test_users: np.ndarray
    fold_in_fraction: float = 0.8
    seed: int = 0


@dataclass
class PopularityVector:
    """Per-item interaction mass: pop[i] = sum of values over users."""

    pop: np.ndarray

    @property
    def n_items(self) -> int:
        return len(self.pop)


@dataclass
class TimeIntervalIndex:
    """Equal-count time intervals with one popularity vector per interval.

    ``boundaries`` holds N+1 sorted timestamps.  A queried timestamp equal to
    an interior boundary belongs to the earlier interval; timestamps outside
    the covered range map to the nearest interval.
    """

    boundaries: np.ndarray
    pops: np.ndarray  # shape (n_intervals, n_items)
    counts: np.ndarray

    @property
    def n_intervals(self) -> int:
        return self.pops.shape[0]

    def interval_popularity(self, k: int) -> PopularityVector:
        return PopularityVector(pop=self.pops[k])

    def total_popularity(self) -> PopularityVector:
        return PopularityVector(pop=self.pops.sum(axis=0))

    def locate(self, timestamps) -> np.ndarray:
        """Interval index for each timestamp (ties go to the earlier interval)."""
        ts = np.atleast_1d(np.asarray(timestamps, dtype=np.int64))
        inner = self.boundaries[1:-1]
        return np.searchsorted(inner, ts, side="left")


def _parse_float(text: str, line_no: int, column: str) -> float:
    try:
        parsed = float(text)
    except ValueError:
        raise DataError(f"line {line_no}: column {column!r} is not a number: {text!r}") from None
    if not np.isfinite(parsed):
        raise DataError(f"line {line_no}: column {column!r} is not finite: {text!r}")
    return parsed


def load_interactions(
    path: str | Path,
    fmt: str = "csv",
    schema: InteractionSchema | None = None,
    binarize: bool = False,
    dedup: str = "keep_max",
    min_value: float | None = None,
) -> InteractionSet:
    """Read an interaction log into an :class:`InteractionSet`.

    Parameters
    ----------
    path:
        CSV or TSV file with a header row.
    fmt:
        ``"csv"`` or ``"tsv"``.
    schema:
        Column mapping; defaults to columns named ``user``, ``item`` and,
        when present in the header, ``value`` and ``timestamp``.
    binarize:
        Replace all retained values by 1.0.
    dedup:
        Policy for repeated (user, item) pairs: ``keep_max`` (largest value
        wins), ``keep_last`` (file order wins), or ``error``.
    min_value:
        Drop events with value below this threshold before indexing.

    Dense ids are assigned in first-appearance order of the retained events.
    A missing value column means every event has value 1.0.
    """
    if fmt not in ("csv", "tsv"):
        raise DataError(f"unknown format {fmt!r}; expected 'csv' or 'tsv'")
    if dedup not in DEDUP_POLICIES:
        raise DataError(f"unknown dedup policy {dedup!r}; expected one of {DEDUP_POLICIES}")
    delimiter = "," if fmt == "csv" else "\t"

    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, expected a header row") from None
        header = [h.strip() for h in header]
        if schema is None:
            schema = InteractionSchema(
                user="user",
                item="item",
                value="value" if "value" in header else None,
                time="timestamp" if "timestamp" in header else None,
            )
        col = {}
        for role, name in (
            ("user", schema.user),
            ("item", schema.item),
            ("value", schema.value),
            ("time", schema.time),
        ):
            if name is None:
                continue
            if name not in header:
                raise DataError(f"{path}: header has no column {name!r} (columns: {header})")
            col[role] = header.index(name)
        n_cols = len(header)

        user_index: dict[str, int] = {}
        item_index: dict[str, int] = {}
        user_keys: list[str] = []
        item_keys: list[str] = []
        uids: list[int] = []
        iids: list[int] = []
        vals: list[float] = []
        times: list[int] = []
        has_time = "time" in col

        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != n_cols:
                raise DataError(
                    f"line {line_no}: expected {n_cols} columns, got {len(row)}"
                )
            user_key = row[col["user"]].strip()
            item_key = row[col["item"]].strip()
            if not user_key or not item_key:
                raise DataError(f"line {line_no}: empty user or item key")
            value = 1.0 if "value" not in col else _parse_float(row[col["value"]], line_no, schema.value)
            if min_value is not None and value < min_value:
                continue
            uid = user_index.get(user_key)
            if uid is None:
                uid = len(user_keys)
                user_index[user_key] = uid
                user_keys.append(user_key)
            iid = item_index.get(item_key)
            if iid is None:
                iid = len(item_keys)
                item_index[item_key] = iid
                item_keys.append(item_key)
            uids.append(uid)
            iids.append(iid)
            vals.append(value)
            if has_time:
                raw = row[col["time"]].strip()
                try:
                    times.append(int(float(raw)))
                except ValueError:
                    raise DataError(
                        f"line {line_no}: column {schema.time!r} is not a timestamp: {raw!r}"
                    ) from None

    user_arr = np.asarray(uids, dtype=np.int64)
    item_arr = np.asarray(iids, dtype=np.int64)
    value_arr = np.asarray(vals, dtype=np.float64)
    time_arr = np.asarray(times, dtype=np.int64) if has_time else None

    keep = _dedup_indices(user_arr, item_arr, value_arr, dedup)
    user_arr, item_arr, value_arr = user_arr[keep], item_arr[keep], value_arr[keep]
    if time_arr is not None:
        time_arr = time_arr[keep]
    if binarize:
        value_arr = np.ones_like(value_arr)

    return InteractionSet(
        user_ids=user_arr,
        item_ids=item_arr,
        values=value_arr,
        timestamps=time_arr,
        user_keys=user_keys,
        item_keys=item_keys,
        user_index=user_index,
        item_index=item_index,
    )


def _dedup_indices(uids: np.ndarray, iids: np.ndarray, vals: np.ndarray, policy: str) -> np.ndarray:
    """Indices of the surviving event per (user, item) pair, in file order."""
    if len(uids) == 0:
        return np.empty(0, dtype=np.intp)
    order = np.lexsort((iids, uids))  # stable: file order preserved within a pair
    su, si = uids[order], iids[order]
    boundary = np.empty(len(order), dtype=bool)
    boundary[0] = True
    boundary[1:] = (su[1:] != su[:-1]) | (si[1:] != si[:-1])
    group_of = np.cumsum(boundary) - 1
    n_groups = group_of[-1] + 1
    if n_groups == len(order):
        return np.sort(order)

    if policy == "error":
        dup_pos = np.flatnonzero(~boundary)[0]
        raise DataError(
            "duplicate (user, item) events under dedup policy 'error' "
            f"(first duplicated pair: user id {su[dup_pos]}, item id {si[dup_pos]})"
        )
    starts = np.flatnonzero(boundary)
    keep = np.empty(n_groups, dtype=np.intp)
    if policy == "keep_last":
        ends = np.append(starts[1:], len(order)) - 1
        keep = order[ends]
    else:  # keep_max: largest value wins, earliest occurrence on ties
        for g, start in enumerate(starts):
            stop = starts[g + 1] if g + 1 < n_groups else len(order)
            grp = order[start:stop]
            keep[g] = grp[np.argmax(vals[grp])]
    return np.sort(keep)


def filter_activity(
    iset: InteractionSet,
    min_user_events: int = 0,
    min_item_events: int = 0,
) -> InteractionSet:
    """Drop low-activity items, then low-activity users (single pass each).

    Dense ids are reassigned in first-appearance order of the surviving
    events, so the result is a self-contained :class:`InteractionSet`.
    """
    keep = np.ones(iset.n_events, dtype=bool)
    if min_item_events > 0:
        item_counts = np.bincount(iset.item_ids, minlength=iset.n_items)
        keep &= item_counts[iset.item_ids] >= min_item_events
    if min_user_events > 0:
        user_counts = np.bincount(iset.user_ids[keep], minlength=iset.n_users)
        keep &= user_counts[iset.user_ids] >= min_user_events
    idx = np.flatnonzero(keep)
    return _reindex(iset, idx)


def _reindex(iset: InteractionSet, event_idx: np.ndarray) -> InteractionSet:
    user_index: dict[str, int] = {}
    item_index: dict[str, int] = {}
    user_keys: list[str] = []
    item_keys: list[str] = []
    uids = np.empty(len(event_idx), dtype=np.int64)
    iids = np.empty(len(event_idx), dtype=np.int64)
    for pos, ev in enumerate(event_idx):
        ukey = iset.user_keys[iset.user_ids[ev]]
        ikey = iset.item_keys[iset.item_ids[ev]]
        uid = user_index.get(ukey)
        if uid is None:
            uid = len(user_keys)
            user_index[ukey] = uid
            user_keys.append(ukey)
        iid = item_index.get(ikey)
        if iid is None:
            iid = len(item_keys)
            item_index[ikey] = iid
            item_keys.append(ikey)
        uids[pos] = uid
        iids[pos] = iid
    return InteractionSet(
        user_ids=uids,
        item_ids=iids,
        values=iset.values[event_idx],
        timestamps=None if iset.timestamps is None else iset.timestamps[event_idx],
        user_keys=user_keys,
        item_keys=item_keys,
        user_index=user_index,
        item_index=item_index,
    )


def to_user_item_matrix(iset: InteractionSet, binarize: bool = False) -> UserItemMatrix:
    """Build the full sparse user-item matrix from an interaction set."""
    values = np.ones_like(iset.values) if binarize else iset.values
    mat = sp.csr_matrix(
        (values, (iset.user_ids, iset.item_ids)),
        shape=(iset.n_users, iset.n_items),
        dtype=np.float64,
    )
    mat.sum_duplicates()
    mat.eliminate_zeros()  # stored values must be non-zero
    mat.sort_indices()
    binarized = binarize or bool(np.all(mat.data == 1.0))
    return UserItemMatrix(matrix=mat, binarized=binarized)


def split_strong_generalization(
    iset: InteractionSet,
    n_val: int,
    n_test: int,
    seed: int,
    fold_in_fraction: float = 0.8,
) -> SplitSpec:
    """Partition users into disjoint train/validation/test sets.

    Deterministic for a fixed seed; all users not drawn for validation or
    test remain training users.
    """
    n_users = iset.n_users
    if n_val < 0 or n_test < 0:
        raise DataError("split sizes must be non-negative")
    if n_val + n_test >= n_users:
        raise DataError(
            f"cannot hold out {n_val}+{n_test} users from a set of {n_users}; "
            "at least one training user is required"
        )
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n_users)
    val = np.sort(perm[:n_val])
    test = np.sort(perm[n_val : n_val + n_test])
    train = np.sort(perm[n_val + n_test :])
    return SplitSpec(
        train_users=train,
        validation_users=val,
        test_users=test,
        fold_in_fraction=fold_in_fraction,
        seed=seed,
    )


def fold_in_indices(n: int, fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Positions for the input part (ceil(fraction*n) of them) and the rest."""
    if n <= 0:
        raise DataError("cannot fold in an empty row")
    n_in = int(np.ceil(fraction * n))
    perm = rng.permutation(n)
    return np.sort(perm[:n_in]), np.sort(perm[n_in:])


def fold_in_split(
    item_ids: np.ndarray,
    values: np.ndarray,
    fraction: float,
    seed,
) -> tuple[tuple[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]:
    """Split one user's row into an input part and a held-out part.

    The input part receives ceil(fraction * nnz) events chosen uniformly at
    random; the two parts are disjoint and their union is the row.  A row
    with a single event goes entirely to the input part (empty held-out;
    metrics must skip such users).

    ``seed`` may be an integer or a ``numpy.random.Generator``.
    """
    if not 0.0 < fraction < 1.0:
        raise DataError(f"fold-in fraction must be in (0, 1), got {fraction}")
    item_ids = np.asarray(item_ids)
    values = np.asarray(values)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    pos_in, pos_out = fold_in_indices(len(item_ids), fraction, rng)
    return (item_ids[pos_in], values[pos_in]), (item_ids[pos_out], values[pos_out])


def popularity(matrix: UserItemMatrix, user_subset: np.ndarray | None = None) -> PopularityVector:
    """Column sums of the matrix, optionally restricted to a user subset."""
    if user_subset is None:
        sums = matrix.matrix.sum(axis=0)
    else:
        user_subset = np.asarray(user_subset, dtype=np.intp)
        if len(user_subset) == 0:
            return PopularityVector(pop=np.zeros(matrix.n_items))
        sums = matrix.matrix[user_subset].sum(axis=0)
    return PopularityVector(pop=np.asarray(sums).ravel().astype(np.float64))


def time_intervals(
    iset: InteractionSet,
    n_intervals: int,
    user_subset: np.ndarray,
) -> TimeIntervalIndex:
    """Partition the subset's events into N equal-count time intervals.

    Events are assigned positionally after a stable sort by timestamp, so
    interval counts differ by at most one regardless of timestamp ties.
    Boundaries hold the min timestamp, each interval's first timestamp, and
    the max timestamp; :meth:`TimeIntervalIndex.locate` sends a timestamp
    equal to an interior boundary to the earlier interval.
    """
    if n_intervals < 1:
        raise DataError("n_intervals must be >= 1")
    if iset.timestamps is None:
        raise DataError("events carry no timestamps; a time column is required")
    mask = np.isin(iset.user_ids, np.asarray(user_subset, dtype=np.int64))
    ev = np.flatnonzero(mask)
    if len(ev) == 0:
        raise DataError("user subset has no events")
    ts = iset.timestamps[ev]
    order = np.argsort(ts, kind="stable")
    ev, ts = ev[order], ts[order]

    m = len(ev)
    cuts = np.round(np.arange(n_intervals + 1) * (m / n_intervals)).astype(np.int64)
    pops = np.zeros((n_intervals, iset.n_items), dtype=np.float64)
    counts = np.empty(n_intervals, dtype=np.int64)
    for k in range(n_intervals):
        lo, hi = cuts[k], cuts[k + 1]
        counts[k] = hi - lo
        np.add.at(pops[k], iset.item_ids[ev[lo:hi]], iset.values[ev[lo:hi]])

    boundaries = np.empty(n_intervals + 1, dtype=np.int64)
    boundaries[0] = ts[0]
    boundaries[-1] = ts[-1]
    for k in range(1, n_intervals):
        boundaries[k] = ts[min(cuts[k], m - 1)]
    return TimeIntervalIndex(boundaries=boundaries, pops=pops, counts=counts)


def save_split_files(split_dir: str | Path, split: SplitSpec, user_keys: list[str]) -> None:
    """Write the three user sets as newline-delimited user keys."""
    split_dir = Path(split_dir)
    split_dir.mkdir(parents=True, exist_ok=True)
    for name, ids in (
        ("train_users.txt", split.train_users),
        ("validation_users.txt", split.validation_users),
        ("test_users.txt", split.test_users),
    ):
        text = "".join(user_keys[i] + "\n" for i in ids)
        (split_dir / name).write_text(text)


def load_split_files(
    split_dir: str | Path,
    user_index: dict[str, int],
    fold_in_fraction: float = 0.8,
    seed: int = 0,
) -> SplitSpec:
    """Read user-key files back into a :class:`SplitSpec` over dense ids."""
    split_dir = Path(split_dir)
    sets = {}
    for name in ("train_users.txt", "validation_users.txt", "test_users.txt"):
        fpath = split_dir / name
        if not fpath.exists():
            raise DataError(f"missing split file {fpath}")
        ids = []
        for key in fpath.read_text().splitlines():
            if not key:
                continue
            if key not in user_index:
                raise DataError(f"{fpath}: unknown user key {key!r}")
            ids.append(user_index[key])
        sets[name] = np.sort(np.asarray(ids, dtype=np.int64))
    return SplitSpec(
        train_users=sets["train_users.txt"],
        validation_users=sets["validation_users.txt"],
        test_users=sets["test_users.txt"],
        fold_in_fraction=fold_in_fraction,
        seed=seed,
    )
