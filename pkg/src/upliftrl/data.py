"""Logged-data model: samples, datasets, CSV ingestion, splitting.

A dataset is a columnar store of logged interactions: one feature vector,
one recorded action (0 = control / no action), the logging propensity of
that action, and one or more observed responses per individual.

CSV contract (header required, UTF-8, '.' decimal separator):
feature columns ``f0..f{D-1}``, action column ``action``, propensity
column ``propensity``, response columns ``r1..rR``. The writer emits
columns in that canonical order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import IOFailure, ParseError, SchemaError, ValidationError
from .rng import substream

TRAIN, VALIDATION, TEST = 0, 1, 2
_SPLIT_NAMES = {"train": TRAIN, "validation": VALIDATION, "test": TEST}


@dataclass(frozen=True)
class LoggedSample:
    """One individual's logged record."""

    features: np.ndarray
    action: int
    propensity: float
    responses: np.ndarray


@dataclass(frozen=True)
class ResponseWeights:
    """Weights for collapsing R responses into a single objective."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        if w.ndim != 1 or w.size < 1:
            raise ValidationError("response weights must be a non-empty vector")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Immutable columnar collection of logged samples.

    ``split``, when present, assigns every index to train/validation/test
    (values 0/1/2).
    """

    features: np.ndarray  # (N, D) float
    actions: np.ndarray  # (N,) int
    propensities: np.ndarray  # (N,) float
    responses: np.ndarray  # (N, R) float
    num_actions: int  # K: count of non-control actions
    split: Optional[np.ndarray] = None  # (N,) int8 in {0,1,2}

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        a = np.asarray(self.actions, dtype=np.int64)
        p = np.asarray(self.propensities, dtype=float)
        Y = np.asarray(self.responses, dtype=float)
        if X.ndim != 2:
            raise ValidationError("features must be a 2-D array (N, D)")
        if Y.ndim == 1:
            Y = Y[:, None]
        n = X.shape[0]
        if a.shape != (n,) or p.shape != (n,) or Y.shape[0] != n:
            raise ValidationError("features/actions/propensities/responses lengths differ")
        if Y.shape[1] < 1:
            raise ValidationError("at least one response column is required")
        if self.num_actions < 0:
            raise ValidationError("num_actions must be >= 0")
        bad = np.flatnonzero((p <= 0.0) | (p > 1.0))
        if bad.size:
            raise ValidationError(
                f"propensity out of (0, 1] at row {bad[0]}: {p[bad[0]]!r}"
            )
        bad = np.flatnonzero((a < 0) | (a > self.num_actions))
        if bad.size:
            raise ValidationError(
                f"action out of [0, {self.num_actions}] at row {bad[0]}: {a[bad[0]]}"
            )
        if self.split is not None:
            s = np.asarray(self.split, dtype=np.int8)
            if s.shape != (n,) or not np.isin(s, (TRAIN, VALIDATION, TEST)).all():
                raise ValidationError("split must assign every index to {0,1,2}")
            object.__setattr__(self, "split", _frozen(s))
        object.__setattr__(self, "features", _frozen(X))
        object.__setattr__(self, "actions", _frozen(a))
        object.__setattr__(self, "propensities", _frozen(p))
        object.__setattr__(self, "responses", _frozen(Y))

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_responses(self) -> int:
        return self.responses.shape[1]

    def sample(self, i: int) -> LoggedSample:
        return LoggedSample(
            features=self.features[i],
            action=int(self.actions[i]),
            propensity=float(self.propensities[i]),
            responses=self.responses[i],
        )

    @property
    def samples(self) -> list[LoggedSample]:
        return [self.sample(i) for i in range(len(self))]

    def indices(self, split_name: str) -> np.ndarray:
        """Indices belonging to one split ('train'/'validation'/'test')."""
        if self.split is None:
            raise ValidationError("dataset has no split assignment")
        return np.flatnonzero(self.split == _SPLIT_NAMES[split_name])

    def subset(self, idx: np.ndarray) -> "Dataset":
        return Dataset(
            features=self.features[idx],
            actions=self.actions[idx],
            propensities=self.propensities[idx],
            responses=self.responses[idx],
            num_actions=self.num_actions,
            split=None if self.split is None else self.split[idx],
        )


@dataclass(frozen=True)
class CsvSchema:
    """Column mapping for :func:`load_csv`."""

    feature_prefix: str = "f"
    action: str = "action"
    propensity: str = "propensity"
    response_prefix: str = "r"


def _parse_cell(raw: str, row: int, col: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ParseError(f"non-numeric value {raw!r} at row {row}, column {col!r}") from None


def load_csv(path, schema: CsvSchema = CsvSchema(), num_actions: Optional[int] = None) -> Dataset:
    """Read a dataset from CSV.

    ``num_actions`` defaults to the maximum action present in the file.
    Rows violating sample invariants raise a row-indexed error (row numbers
    count data rows from 0).
    """
    path = Path(path)
    if not path.exists():
        raise IOFailure(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header row required") from None
        rows = list(reader)

    def numbered(prefix, start):
        cols = []
        i = start
        while f"{prefix}{i}" in header:
            cols.append(header.index(f"{prefix}{i}"))
            i += 1
        return cols

    feat_cols = numbered(schema.feature_prefix, 0)
    resp_cols = numbered(schema.response_prefix, 1)
    if not feat_cols:
        raise SchemaError(f"no feature columns with prefix {schema.feature_prefix!r}")
    if not resp_cols:
        raise SchemaError(f"no response columns with prefix {schema.response_prefix!r}")
    for name in (schema.action, schema.propensity):
        if name not in header:
            raise SchemaError(f"missing column {name!r}")
    a_col = header.index(schema.action)
    p_col = header.index(schema.propensity)

    n = len(rows)
    X = np.empty((n, len(feat_cols)))
    a = np.empty(n, dtype=np.int64)
    p = np.empty(n)
    Y = np.empty((n, len(resp_cols)))
    for r, row in enumerate(rows):
        if len(row) != len(header):
            raise ParseError(f"row {r}: expected {len(header)} cells, got {len(row)}")
        for j, c in enumerate(feat_cols):
            X[r, j] = _parse_cell(row[c], r, header[c])
        a_val = _parse_cell(row[a_col], r, schema.action)
        if a_val != int(a_val):
            raise ParseError(f"non-integer action {row[a_col]!r} at row {r}")
        a[r] = int(a_val)
        p[r] = _parse_cell(row[p_col], r, schema.propensity)
        if not 0.0 < p[r] <= 1.0:
            raise ValidationError(f"propensity out of (0, 1] at row {r}: {p[r]!r}")
        for j, c in enumerate(resp_cols):
            Y[r, j] = _parse_cell(row[c], r, header[c])

    k = int(a.max(initial=0)) if num_actions is None else num_actions
    return Dataset(features=X, actions=a, propensities=p, responses=Y, num_actions=k)


def write_csv(ds: Dataset, path) -> None:
    """Write a dataset in the canonical column order.

    Floats are written with ``repr`` so a load round-trips bit-exactly.
    """
    header = (
        [f"f{j}" for j in range(ds.feature_dim)]
        + ["action", "propensity"]
        + [f"r{j + 1}" for j in range(ds.num_responses)]
    )
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i in range(len(ds)):
                writer.writerow(
                    [repr(float(v)) for v in ds.features[i]]
                    + [str(int(ds.actions[i])), repr(float(ds.propensities[i]))]
                    + [repr(float(v)) for v in ds.responses[i]]
                )
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc


def combine_responses(ds: Dataset, w: ResponseWeights) -> Dataset:
    """Collapse the R responses of every sample into their weighted sum."""
    if w.weights.size != ds.num_responses:
        raise ValidationError(
            f"weight length {w.weights.size} != response count {ds.num_responses}"
        )
    combined = ds.responses @ w.weights
    return replace(ds, responses=combined[:, None])


def split_dataset(
    ds: Dataset, fractions: Sequence[float] = (0.6, 0.2, 0.2), seed: int = 0
) -> Dataset:
    """Assign every index to train/validation/test by a seeded shuffle.

    Train gets floor(f1*N) indices, validation floor(f2*N), test the rest.
    """
    f1, f2, f3 = (float(f) for f in fractions)
    if min(f1, f2, f3) <= 0:
        raise ValidationError("split fractions must be positive")
    if abs(f1 + f2 + f3 - 1.0) > 1e-9:
        raise ValidationError(f"split fractions must sum to 1, got {f1 + f2 + f3!r}")
    n = len(ds)
    order = substream(seed, "split").permutation(n)
    n_train = int(np.floor(f1 * n))
    n_val = int(np.floor(f2 * n))
    assignment = np.empty(n, dtype=np.int8)
    assignment[order[:n_train]] = TRAIN
    assignment[order[n_train:n_train + n_val]] = VALIDATION
    assignment[order[n_train + n_val:]] = TEST
    return replace(ds, split=assignment)


# Raw column layout of the public MineThatData e-mail campaign file.
HILLSTROM_COLUMNS = [
    "recency", "history_segment", "history", "mens", "womens", "zip_code",
    "newbie", "channel", "segment", "visit", "conversion", "spend",
]
_HILLSTROM_CATEGORICAL = ("history_segment", "zip_code", "channel")
_HILLSTROM_NUMERIC = ("recency", "history", "mens", "womens", "newbie")
_HILLSTROM_ARMS = {"No E-Mail": 0, "Womens E-Mail": 1}
_HILLSTROM_DROPPED = "Mens E-Mail"


def hillstrom_adapter(path) -> Dataset:
    """Convert the MineThatData e-mail file into a two-arm logged dataset.

    Keeps the control and women's-campaign arms only (the men's campaign is
    dropped), uses the binary ``visit`` column as the single response, and
    sets each sample's propensity to the empirical frequency of its arm in
    the retained subset (the original assignment was randomized).
    Categorical covariates are one-hot encoded with a deterministic,
    sorted category order.
    """
    path = Path(path)
    if not path.exists():
        raise IOFailure(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in HILLSTROM_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise SchemaError(f"missing Hillstrom columns: {missing}")
        kept = []
        for r, row in enumerate(reader):
            seg = row["segment"]
            if seg == _HILLSTROM_DROPPED:
                continue
            if seg not in _HILLSTROM_ARMS:
                raise ParseError(f"unknown segment {seg!r} at row {r}")
            kept.append(row)
    if not kept:
        raise ValidationError("no retained rows (control / women's arms absent)")

    categories = {
        col: sorted({row[col] for row in kept}) for col in _HILLSTROM_CATEGORICAL
    }
    dim = len(_HILLSTROM_NUMERIC) + sum(len(v) for v in categories.values())
    n = len(kept)
    X = np.zeros((n, dim))
    a = np.empty(n, dtype=np.int64)
    visit = np.empty(n)
    for i, row in enumerate(kept):
        j = 0
        for col in _HILLSTROM_NUMERIC:
            X[i, j] = _parse_cell(row[col], i, col)
            j += 1
        for col in _HILLSTROM_CATEGORICAL:
            X[i, j + categories[col].index(row[col])] = 1.0
            j += len(categories[col])
        a[i] = _HILLSTROM_ARMS[row["segment"]]
        visit[i] = _parse_cell(row["visit"], i, "visit")

    arm_freq = np.array([(a == arm).mean() for arm in (0, 1)])
    if (arm_freq == 0).any():
        raise ValidationError("retained subset must contain both arms")
    return Dataset(
        features=X,
        actions=a,
        propensities=arm_freq[a],
        responses=visit[:, None],
        num_actions=1,
    )
