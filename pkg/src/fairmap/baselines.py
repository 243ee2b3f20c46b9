"""Quantile repair baseline (disparate impact remover) and its -OM variant.

Each numeric attribute is moved along its within-group quantiles toward a
median distribution, the quantile-wise mean of the two group quantile
functions.  Categorical attributes and the decision are left untouched.
"""

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .data import CATEGORICAL, NUMERIC, OTHER, Dataset
from .exceptions import (
    CategoricalPassThroughWarning,
    MultiGroupUnsupported,
    NoNumericAttributes,
    SchemaMismatch,
)

GRID_SIZE = 1001


@dataclass
class RepairMap:
    """Fitted repair: for every numeric attribute the sorted per-group
    samples (for midpoint ranks), the per-group quantile functions and the
    median quantile function, all on a shared grid of probabilities."""

    repair_level: float
    grid: np.ndarray
    attributes: dict = field(default_factory=dict)
    group_labels: list = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 <= self.repair_level <= 1.0:
            raise ValueError("repair_level must lie in [0, 1]")

    def with_level(self, repair_level):
        return RepairMap(float(repair_level), self.grid, self.attributes, list(self.group_labels))

    def to_dict(self):
        return {
            "repair_level": self.repair_level,
            "grid": self.grid.tolist(),
            "group_labels": list(self.group_labels),
            "attributes": {
                name: {"samples": [s.tolist() for s in a["samples"]],
                       "quantiles": [q.tolist() for q in a["quantiles"]],
                       "median": a["median"].tolist()}
                for name, a in self.attributes.items()
            },
        }

    @classmethod
    def from_dict(cls, d):
        attrs = {
            name: {"samples": [np.asarray(s, dtype=np.float64) for s in a["samples"]],
                   "quantiles": [np.asarray(q, dtype=np.float64) for q in a["quantiles"]],
                   "median": np.asarray(a["median"], dtype=np.float64)}
            for name, a in d["attributes"].items()
        }
        return cls(float(d["repair_level"]), np.asarray(d["grid"], dtype=np.float64), attrs,
                   list(d.get("group_labels", [])))

    def save(self, path):
        path = Path(path)
        path.write_text(json.dumps(self.to_dict()))
        return path

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def _repairable(dataset):
    return [a for a in dataset.schema if a.role == OTHER and a.kind == NUMERIC]


def fit_dirm(dataset, repair_level=1.0):
    """Fit per-group and median quantile functions on every numeric
    non-decision attribute of a two-group dataset."""
    if dataset.k != 2:
        raise MultiGroupUnsupported(f"quantile repair handles two groups, got {dataset.k}")
    numeric = _repairable(dataset)
    if not numeric:
        raise NoNumericAttributes("no numeric attribute to repair")
    skipped = [a.name for a in dataset.schema if a.role == OTHER and a.kind == CATEGORICAL]
    if skipped:
        warnings.warn(f"categorical attributes left unmodified: {skipped}",
                      CategoricalPassThroughWarning, stacklevel=2)
    grid = np.linspace(0.0, 1.0, GRID_SIZE)
    attrs = {}
    for spec in numeric:
        col = dataset.frame[spec.name].to_numpy(dtype=np.float64)
        samples = [np.sort(col[dataset.groups == g]) for g in range(2)]
        quantiles = [np.quantile(s, grid) for s in samples]
        attrs[spec.name] = {"samples": samples, "quantiles": quantiles,
                            "median": 0.5 * (quantiles[0] + quantiles[1])}
    return RepairMap(float(repair_level), grid, attrs, list(dataset.group_labels))


def midpoint_rank(sorted_sample, values):
    """Empirical CDF with ties counted half: ``(#less + #equal / 2) / n``."""
    lo = np.searchsorted(sorted_sample, values, side="left")
    hi = np.searchsorted(sorted_sample, values, side="right")
    return (lo + hi) / (2.0 * len(sorted_sample))


def repair_values(repair_map, name, values, groups):
    """``(1 - lam) * x + lam * Q_median(F_g(x))`` for one attribute."""
    a = repair_map.attributes[name]
    values = np.asarray(values, dtype=np.float64)
    groups = np.asarray(groups, dtype=np.intp)
    lam = repair_map.repair_level
    if lam == 0.0:
        return values.copy()
    out = values.copy()
    for g in range(2):
        m = groups == g
        if not m.any():
            continue
        u = midpoint_rank(a["samples"][g], values[m])
        target = np.interp(u, repair_map.grid, a["median"])
        out[m] = (1.0 - lam) * values[m] + lam * target
    return out


def apply_dirm(repair_map, dataset, om=False):
    """Repaired copy of ``dataset``; with ``om`` the privileged rows keep
    their original values."""
    names = [a.name for a in _repairable(dataset)]
    if sorted(names) != sorted(repair_map.attributes):
        raise SchemaMismatch(f"repair map covers {sorted(repair_map.attributes)}, "
                             f"dataset has {sorted(names)}")
    if dataset.k != 2:
        raise MultiGroupUnsupported(f"quantile repair handles two groups, got {dataset.k}")
    frame = dataset.frame.copy()
    keep = dataset.groups == 0 if om else np.zeros(len(frame), dtype=bool)
    for name in names:
        original = frame[name].to_numpy(dtype=np.float64)
        repaired = repair_values(repair_map, name, original, dataset.groups)
        frame[name] = np.where(keep, original, repaired)
    return dataset.with_frame(frame)


class QuantileRepair(TransformerMixin, BaseEstimator):
    """Estimator wrapper: ``fit`` on a :class:`~fairmap.data.Dataset`,
    ``transform`` returns the repaired dataset."""

    def __init__(self, repair_level=1.0, om=False):
        self.repair_level = repair_level
        self.om = om

    def fit(self, X, y=None):
        if not isinstance(X, Dataset):
            raise TypeError("QuantileRepair expects a Dataset")
        self.map_ = fit_dirm(X, self.repair_level)
        return self

    def transform(self, X):
        if not hasattr(self, "map_"):
            from sklearn.exceptions import NotFittedError
            raise NotFittedError("QuantileRepair is not fitted")
        return apply_dirm(self.map_.with_level(self.repair_level), X, om=self.om)
