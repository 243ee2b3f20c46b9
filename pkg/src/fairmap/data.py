"""Tabular datasets: schema, CSV loading, sensitive-group combination,
[0, 1] encoding, the synthetic hiring generator and stratified folds.

Group indices are 0-based and index 0 is always the privileged group.
"""

import hashlib
import itertools
import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from scipy.stats import norm
from sklearn.base import BaseEstimator, TransformerMixin

from ._random import substream
from .exceptions import (
    BlockShapeMismatch,
    ClampWarning,
    EmptyGroupWarning,
    EncoderMismatch,
    GroupTooSmall,
    MissingColumn,
    MissingValue,
    NonNumericValue,
    SchemaError,
    UnfittedEncoder,
    UnknownCategory,
)

NUMERIC, CATEGORICAL = "numeric", "categorical"
SENSITIVE, DECISION, OTHER = "sensitive", "decision", "other"


@dataclass(frozen=True)
class AttributeSpec:
    name: str
    kind: str = NUMERIC
    role: str = OTHER
    categories: Optional[tuple] = None
    numeric_range: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise SchemaError(f"unknown kind {self.kind!r}", column=self.name)
        if self.role not in (SENSITIVE, DECISION, OTHER):
            raise SchemaError(f"unknown role {self.role!r}", column=self.name)
        if self.categories is not None:
            cats = tuple(str(c) for c in self.categories)
            if not cats or len(set(cats)) != len(cats):
                raise SchemaError("categories must be unique and non-empty", column=self.name)
            object.__setattr__(self, "categories", cats)
        if self.role == DECISION and self.kind == CATEGORICAL and self.categories is not None \
                and len(self.categories) != 2:
            raise SchemaError("the decision attribute must be binary", column=self.name)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("categories") is not None:
            d["categories"] = tuple(d["categories"])
        if d.get("numeric_range") is not None:
            d["numeric_range"] = tuple(d["numeric_range"])
        return cls(**d)

    def to_dict(self):
        out = {"name": self.name, "kind": self.kind, "role": self.role}
        if self.categories is not None:
            out["categories"] = list(self.categories)
        if self.numeric_range is not None:
            out["numeric_range"] = list(self.numeric_range)
        return out


def _decision_positive(spec):
    """Label counted as the positive decision (second category, or 1)."""
    if spec.kind == CATEGORICAL:
        return spec.categories[1]
    return 1


@dataclass
class Dataset:
    """A table with exactly one sensitive and one binary decision attribute.

    ``groups[i]`` is the 0-based group index of row ``i``; ``group_labels``
    gives the sensitive value of each group, privileged first.
    """

    schema: list
    frame: pd.DataFrame
    groups: np.ndarray
    group_labels: list
    empty_groups: list = field(default_factory=list)

    def __post_init__(self):
        self.groups = np.asarray(self.groups, dtype=np.intp)
        if len(self.frame) == 0:
            raise SchemaError("dataset has no rows")
        roles = [a.role for a in self.schema]
        if roles.count(SENSITIVE) != 1 or roles.count(DECISION) != 1:
            raise SchemaError("need exactly one sensitive and one decision attribute")
        if len(self.groups) != len(self.frame):
            raise SchemaError("group column length differs from row count")
        if self.groups.min() < 0 or self.groups.max() >= len(self.group_labels):
            raise SchemaError("group index out of range")
        counts = np.bincount(self.groups, minlength=self.k)
        if np.any(counts == 0):
            raise SchemaError("every group must be non-empty")

    @property
    def k(self):
        return len(self.group_labels)

    @property
    def n_rows(self):
        return len(self.frame)

    def __len__(self):
        return len(self.frame)

    def attribute(self, name):
        for a in self.schema:
            if a.name == name:
                return a
        raise KeyError(name)

    @property
    def sensitive(self):
        return next(a for a in self.schema if a.role == SENSITIVE)

    @property
    def decision(self):
        return next(a for a in self.schema if a.role == DECISION)

    @property
    def y(self):
        """Binary decision as an int array (1 = positive)."""
        spec = self.decision
        col = self.frame[spec.name]
        if spec.kind == CATEGORICAL:
            return (col.astype(str) == _decision_positive(spec)).to_numpy(dtype=np.int64)
        return col.to_numpy(dtype=np.float64).round().astype(np.int64)

    @property
    def privileged_label(self):
        return self.group_labels[0]

    def group_proportions(self):
        return np.bincount(self.groups, minlength=self.k) / self.n_rows

    def positive_rates(self):
        y = self.y
        return np.bincount(self.groups, weights=y, minlength=self.k) / np.bincount(
            self.groups, minlength=self.k)

    def subset(self, index):
        index = np.asarray(index)
        return Dataset(self.schema, self.frame.iloc[index].reset_index(drop=True),
                       self.groups[index], list(self.group_labels), list(self.empty_groups))

    def with_frame(self, frame):
        """Same schema and groups, different attribute values (e.g. after a repair)."""
        return Dataset(self.schema, frame.reset_index(drop=True), self.groups.copy(),
                       list(self.group_labels), list(self.empty_groups))

    def to_csv(self, path):
        self.frame[[a.name for a in self.schema]].to_csv(path, index=False)


# -- loading ---------------------------------------------------------------
def _parse_frame(raw, schema, row_offset=2):
    """Validate a string-typed frame against ``schema`` and convert types.

    ``row_offset`` turns a 0-based data index into a file line number
    (header on line 1).
    """
    names = [a.name for a in schema]
    for name in names:
        if name not in raw.columns:
            raise MissingColumn("column missing from header", column=name)
    extra = [c for c in raw.columns if c not in names]
    if extra:
        raise SchemaError(f"columns not declared in the schema: {extra}", column=extra[0])
    out = {}
    new_schema = []
    for spec in schema:
        col = raw[spec.name]
        missing = col.isna() | (col.astype(str).str.strip() == "")
        if missing.any():
            row = int(np.flatnonzero(missing.to_numpy())[0]) + row_offset
            raise MissingValue("missing value", row=row, column=spec.name)
        values = col.astype(str).str.strip()
        if spec.kind == NUMERIC:
            parsed = pd.to_numeric(values, errors="coerce")
            bad = parsed.isna()
            if bad.any():
                i = int(np.flatnonzero(bad.to_numpy())[0])
                raise NonNumericValue(f"cannot parse {values.iloc[i]!r} as a number",
                                      row=i + row_offset, column=spec.name)
            if spec.role == DECISION and not set(parsed.unique()) <= {0, 1}:
                raise SchemaError("numeric decision must be 0/1", column=spec.name)
            out[spec.name] = parsed.to_numpy()
            new_schema.append(spec)
        else:
            cats = spec.categories
            if cats is None:
                cats = tuple(sorted(values.unique()))
                spec = replace(spec, categories=cats)
            known = values.isin(cats)
            if not known.all():
                i = int(np.flatnonzero(~known.to_numpy())[0])
                raise UnknownCategory(f"unknown category {values.iloc[i]!r}",
                                      row=i + row_offset, column=spec.name)
            out[spec.name] = values.to_numpy(dtype=object)
            new_schema.append(spec)
    return pd.DataFrame(out, columns=names), new_schema


def load_csv(path, schema, privileged=None):
    """Read an RFC-4180 CSV and validate it against ``schema``.

    Several attributes may carry the sensitive role; they are combined into
    one (see :func:`combine_sensitive`).
    """
    path = Path(path)
    schema = [a if isinstance(a, AttributeSpec) else AttributeSpec.from_dict(a) for a in schema]
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise MissingColumn(f"{path}: empty file, no header",
                            column=schema[0].name if schema else None) from None
    frame, schema = _parse_frame(raw, schema)
    sensitive = [a.name for a in schema if a.role == SENSITIVE]
    if not sensitive:
        raise SchemaError("schema declares no sensitive attribute")
    return from_frame(frame, schema, sensitive, privileged=privileged)


def from_frame(frame, schema, sensitive_names=None, privileged=None):
    """Build a Dataset from an already-typed frame."""
    schema = [a if isinstance(a, AttributeSpec) else AttributeSpec.from_dict(a) for a in schema]
    if sensitive_names is None:
        sensitive_names = [a.name for a in schema if a.role == SENSITIVE]
    frame = frame.reset_index(drop=True)
    filled = []
    for spec in schema:
        if spec.kind == CATEGORICAL:
            values = frame[spec.name].astype(str)
            frame[spec.name] = values.to_numpy(dtype=object)
            if spec.categories is None:
                spec = replace(spec, categories=tuple(sorted(values.unique())))
        filled.append(spec)
    return _combine(frame, filled, list(sensitive_names), privileged)


def _combine(frame, schema, names, privileged):
    for name in names:
        spec = next((a for a in schema if a.name == name), None)
        if spec is None:
            raise MissingColumn("sensitive attribute not in schema", column=name)
        if spec.kind != CATEGORICAL:
            raise SchemaError("sensitive attributes must be categorical", column=name)
    decisions = [a for a in schema if a.role == DECISION]
    if len(decisions) != 1:
        raise SchemaError("need exactly one decision attribute")
    specs = [next(a for a in schema if a.name == n) for n in names]
    new_name = names[0] if len(names) == 1 else "-".join(names)
    labels = frame[names[0]].astype(str)
    for n in names[1:]:
        labels = labels + "-" + frame[n].astype(str)
    declared = ["-".join(c) for c in itertools.product(*(s.categories for s in specs))]
    present = set(labels.unique())
    empty = [c for c in declared if c not in present]
    if empty:
        warnings.warn(f"sensitive combinations with no rows: {empty}", EmptyGroupWarning,
                      stacklevel=3)
    order = [c for c in declared if c in present]

    dec = decisions[0]
    pos = _decision_positive(dec)
    col = frame[dec.name]
    y = (col.astype(str) == pos).to_numpy() if dec.kind == CATEGORICAL else \
        col.to_numpy(dtype=np.float64) == 1
    if privileged is None:
        rates = [y[(labels == c).to_numpy()].mean() for c in order]
        privileged = order[int(np.argmax(rates))]
    elif privileged not in order:
        raise SchemaError(f"privileged value {privileged!r} has no rows", column=new_name)
    order = [privileged] + [c for c in order if c != privileged]
    index = {c: i for i, c in enumerate(order)}
    groups = labels.map(index).to_numpy(dtype=np.intp)

    new_frame = frame.drop(columns=names)
    new_frame.insert(0, new_name, labels.to_numpy(dtype=object))
    combined = AttributeSpec(new_name, CATEGORICAL, SENSITIVE, tuple(order))
    new_schema = [combined] + [a for a in schema if a.name not in names]
    cols = [a.name for a in new_schema]
    return Dataset(new_schema, new_frame[cols], groups, order, empty)


def combine_sensitive(dataset, sensitive_names, privileged=None):
    """Merge ``sensitive_names`` into one sensitive attribute.

    Its values are the combinations present in the data; the combination
    with the highest positive-decision rate becomes group 0 unless
    ``privileged`` names one explicitly.  Combinations declared by the
    schema but absent from the data are reported through
    :class:`EmptyGroupWarning` and listed in ``Dataset.empty_groups``.
    """
    schema = [replace(a, role=OTHER) if a.role == SENSITIVE and a.name not in sensitive_names
              else replace(a, role=SENSITIVE) if a.name in sensitive_names else a
              for a in dataset.schema]
    return _combine(dataset.frame.copy(), schema, list(sensitive_names), privileged)


# -- encoding --------------------------------------------------------------
@dataclass
class EncodedMatrix:
    """Rows encoded into ``[0, 1]`` columns.

    ``blocks`` maps each non-sensitive attribute to its ``(start, stop)``
    column span.  The decision attribute occupies one column.
    """

    values: np.ndarray
    blocks: dict
    groups: np.ndarray
    encoder: "TabularEncoder" = None

    @property
    def n_rows(self):
        return self.values.shape[0]

    @property
    def decision_column(self):
        return self.blocks[self.encoder.decision_name_][0]

    def features(self):
        """Columns without the decision attribute (inputs of a task classifier)."""
        keep = np.ones(self.values.shape[1], dtype=bool)
        keep[self.decision_column] = False
        return self.values[:, keep]

    def with_values(self, values):
        values = np.asarray(values, dtype=np.float64)
        if values.shape[1] != self.values.shape[1]:
            raise BlockShapeMismatch("column count does not match the block map")
        return EncodedMatrix(values, self.blocks, self.groups, self.encoder)

    def subset(self, index):
        return EncodedMatrix(self.values[index], self.blocks, self.groups[index], self.encoder)


class TabularEncoder(TransformerMixin, BaseEstimator):
    """Min-max scale numeric attributes and one-hot encode categoricals.

    The sensitive attribute is never encoded; it travels alongside as the
    group vector.  Ranges are learnt on the data passed to :meth:`fit`; later
    values outside them are clamped (with a :class:`ClampWarning`).
    """

    def fit(self, dataset, y=None):
        self.schema_ = list(dataset.schema)
        self.group_labels_ = list(dataset.group_labels)
        self.sensitive_name_ = dataset.sensitive.name
        self.decision_name_ = dataset.decision.name
        self.ranges_ = {}
        self.integer_ = {}
        self.blocks_ = {}
        col = 0
        for spec in self.schema_:
            if spec.role == SENSITIVE:
                continue
            if spec.kind == NUMERIC and spec.role != DECISION:
                values = dataset.frame[spec.name].to_numpy(dtype=np.float64)
                lo, hi = spec.numeric_range or (values.min(), values.max())
                self.ranges_[spec.name] = (float(lo), float(hi))
                self.integer_[spec.name] = bool(np.all(values == np.round(values)))
                width = 1
            elif spec.role == DECISION:
                width = 1
            else:
                width = len(spec.categories)
            self.blocks_[spec.name] = (col, col + width)
            col += width
        self.n_columns_ = col
        return self

    def _check(self):
        if not hasattr(self, "blocks_"):
            raise UnfittedEncoder("encoder has not been fitted")

    def transform(self, dataset):
        self._check()
        if [a.name for a in dataset.schema] != [a.name for a in self.schema_]:
            raise EncoderMismatch("dataset schema differs from the fitted schema")
        n = dataset.n_rows
        out = np.zeros((n, self.n_columns_))
        clamped = []
        for spec in self.schema_:
            if spec.role == SENSITIVE:
                continue
            start, stop = self.blocks_[spec.name]
            col = dataset.frame[spec.name]
            if spec.role == DECISION:
                out[:, start] = _decision_values(col, spec)
            elif spec.kind == NUMERIC:
                lo, hi = self.ranges_[spec.name]
                span = hi - lo if hi > lo else 1.0
                scaled = (col.to_numpy(dtype=np.float64) - lo) / span
                if np.any((scaled < 0) | (scaled > 1)):
                    clamped.append(spec.name)
                out[:, start] = np.clip(scaled, 0.0, 1.0)
            else:
                codes = pd.Categorical(col.astype(str), categories=spec.categories).codes
                if np.any(codes < 0):
                    i = int(np.flatnonzero(codes < 0)[0])
                    raise UnknownCategory(f"unknown category {col.iloc[i]!r}", row=i,
                                          column=spec.name)
                out[np.arange(n), start + codes] = 1.0
        if clamped:
            warnings.warn(f"values outside the fitted range clamped in {clamped}", ClampWarning,
                          stacklevel=2)
        return EncodedMatrix(out, dict(self.blocks_), dataset.groups.copy(), self)

    def inverse_transform(self, matrix, groups=None):
        """Decode back to a Dataset; categorical blocks decode by arg-max
        (lowest index on ties), the decision column by thresholding at 0.5."""
        self._check()
        if isinstance(matrix, EncodedMatrix):
            values, groups = matrix.values, matrix.groups if groups is None else groups
        else:
            values = np.asarray(matrix, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != self.n_columns_:
            raise BlockShapeMismatch(
                f"expected {self.n_columns_} columns, got shape {values.shape}")
        if groups is None:
            raise ValueError("group indices are required to rebuild the sensitive column")
        groups = np.asarray(groups, dtype=np.intp)
        cols = {}
        for spec in self.schema_:
            if spec.role == SENSITIVE:
                cols[spec.name] = np.asarray(self.group_labels_, dtype=object)[groups]
                continue
            start, stop = self.blocks_[spec.name]
            block = values[:, start:stop]
            if spec.role == DECISION:
                positive = block[:, 0] > 0.5
                if spec.kind == CATEGORICAL:
                    cols[spec.name] = np.where(positive, spec.categories[1],
                                               spec.categories[0]).astype(object)
                else:
                    cols[spec.name] = positive.astype(np.int64)
            elif spec.kind == NUMERIC:
                lo, hi = self.ranges_[spec.name]
                span = hi - lo if hi > lo else 0.0
                decoded = block[:, 0] * span + lo
                if self.integer_[spec.name]:
                    decoded = np.round(decoded)
                cols[spec.name] = decoded
            else:
                cols[spec.name] = np.asarray(spec.categories, dtype=object)[block.argmax(axis=1)]
        frame = pd.DataFrame(cols, columns=[a.name for a in self.schema_])
        return Dataset(list(self.schema_), frame, groups, list(self.group_labels_))

    def feature_blocks(self, kind=None):
        """Block spans of non-sensitive, non-decision attributes of ``kind``."""
        self._check()
        return {a.name: self.blocks_[a.name] for a in self.schema_
                if a.role == OTHER and (kind is None or a.kind == kind)}


def _decision_values(col, spec):
    if spec.kind == CATEGORICAL:
        return (col.astype(str) == _decision_positive(spec)).to_numpy(dtype=np.float64)
    return col.to_numpy(dtype=np.float64)


def encode(dataset, encoder=None):
    """Encode with ``encoder`` (fitted on a training split) or a fresh one."""
    if encoder is None:
        encoder = TabularEncoder().fit(dataset)
    return encoder.transform(dataset)


def decode(matrix):
    if matrix.encoder is None:
        raise UnfittedEncoder("matrix carries no encoder state")
    return matrix.encoder.inverse_transform(matrix)


def fingerprint(data, groups=None):
    """Content hash (sha256 hex) of a Dataset, or of an array plus group vector."""
    h = hashlib.sha256()
    if isinstance(data, Dataset):
        h.update(json.dumps([a.to_dict() for a in data.schema]).encode())
        h.update(data.frame.to_csv(index=False).encode())
        groups = data.groups
    else:
        h.update(np.ascontiguousarray(data, dtype="<f8").tobytes())
    if groups is not None:
        h.update(np.ascontiguousarray(groups, dtype="<i8").tobytes())
    return h.hexdigest()


# -- synthetic hiring data -------------------------------------------------
# produced by scripts/calibrate_lipton.py; group order is (privileged, other)
LIPTON_PARAMS = {
    "work_mean": (10.161561, 11.355895),
    "work_sd": 3.0,
    "threshold": 12.0,
    "hair_mean": (30.000000, 19.602791),
    "hair_sd": 6.0,
}
LIPTON_GROUPS = ("female", "male")
LIPTON_SCHEMA = [
    AttributeSpec("gender", CATEGORICAL, SENSITIVE, LIPTON_GROUPS),
    AttributeSpec("hair_length", NUMERIC, OTHER),
    AttributeSpec("work_experience", NUMERIC, OTHER),
    AttributeSpec("hired", NUMERIC, DECISION),
]


def _stratified_normal(rng, n, mean, sd):
    # one draw per equal-probability stratum, shuffled: empirical quantiles
    # match the target distribution to within 1/n
    u = (rng.permutation(n) + rng.uniform(size=n)) / n
    return mean + sd * norm.ppf(u)


def generate_lipton(n=2000, seed=0):
    """Synthetic hiring table: hair length and work experience both depend on
    gender, hiring depends on work experience only.

    Rows are split exactly evenly between the two genders.  The privileged
    group (``female``, group 0) has the lower hiring rate: 0.27 against an
    overall 0.3425.
    """
    if n < 2 or n % 2:
        raise ValueError("n must be an even number >= 2")
    rng = substream(seed, "dataset")
    p = LIPTON_PARAMS
    half = n // 2
    hair, work, gender = [], [], []
    for g in (0, 1):
        hair.append(_stratified_normal(rng, half, p["hair_mean"][g], p["hair_sd"]))
        work.append(_stratified_normal(rng, half, p["work_mean"][g], p["work_sd"]))
        gender.append(np.full(half, LIPTON_GROUPS[g], dtype=object))
    hair = np.maximum(np.concatenate(hair), 0.0)
    work = np.maximum(np.concatenate(work), 0.0)
    gender = np.concatenate(gender)
    order = rng.permutation(n)
    frame = pd.DataFrame({
        "gender": gender[order],
        "hair_length": hair[order],
        "work_experience": work[order],
        "hired": (work[order] > p["threshold"]).astype(np.int64),
    })
    return from_frame(frame, LIPTON_SCHEMA, ["gender"], privileged=LIPTON_GROUPS[0])


# -- folds -----------------------------------------------------------------
@dataclass
class FoldPlan:
    n_folds: int
    seed: int
    assignments: np.ndarray

    def split(self, fold):
        """``(train_index, test_index)`` for one fold."""
        test = np.flatnonzero(self.assignments == fold)
        train = np.flatnonzero(self.assignments != fold)
        return train, test

    def __iter__(self):
        for f in range(self.n_folds):
            yield self.split(f)


def _group_vector(data):
    return data.groups if hasattr(data, "groups") else np.asarray(data, dtype=np.intp)


def split_kfold(data, n_folds=3, seed=0):
    """Stratified partition of the rows into ``n_folds`` folds.

    Rows of each group are shuffled and dealt round-robin, continuing the
    deal across groups, so fold sizes differ by at most one and every fold
    keeps the group proportions.  ``n_folds`` equal to the row count gives
    leave-one-out folds, where stratification does not apply.
    """
    groups = _group_vector(data)
    n = len(groups)
    if n_folds < 2:
        raise ValueError("n_folds must be >= 2")
    if n_folds > n:
        raise GroupTooSmall(f"cannot split {n} rows into {n_folds} folds")
    counts = np.bincount(groups)
    if n_folds < n and np.any((counts > 0) & (counts < n_folds)):
        small = int(np.flatnonzero((counts > 0) & (counts < n_folds))[0])
        raise GroupTooSmall(f"group {small} has {counts[small]} rows, fewer than {n_folds} folds")
    rng = substream(seed, "folds")
    assignments = np.empty(n, dtype=np.intp)
    offset = 0
    for g in np.flatnonzero(counts):
        rows = rng.permutation(np.flatnonzero(groups == g))
        assignments[rows] = (offset + np.arange(len(rows))) % n_folds
        offset += len(rows)
    return FoldPlan(n_folds, seed, assignments)


def stratified_split(data, test_fraction=0.3, seed=0):
    """Single stratified train/validation split, returned as index arrays."""
    groups = _group_vector(data)
    rng = substream(seed, "split")
    train, test = [], []
    for g in np.unique(groups):
        rows = rng.permutation(np.flatnonzero(groups == g))
        n_test = int(round(test_fraction * len(rows)))
        n_test = min(max(n_test, 1), len(rows) - 1) if len(rows) > 1 else 0
        test.append(rows[:n_test])
        train.append(rows[n_test:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))
