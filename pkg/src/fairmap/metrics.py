"""Protection, utility, transformation and group-fairness metrics.

Group labels are 0-based integers with 0 the privileged group.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist

from .data import CATEGORICAL, OTHER, EncodedMatrix
from .exceptions import DegenerateGroupWarning, MissingGroup, ShapeMismatch

VARIANTS = ("og_prv", "rc_prv")
SCOPES = ("all", "priv", "prot")


def _as_probs(pred, k):
    pred = np.asarray(pred)
    if pred.ndim == 1:
        probs = np.zeros((len(pred), k))
        probs[np.arange(len(pred)), pred.astype(np.intp)] = 1.0
        return probs
    if pred.shape[1] != k:
        raise ShapeMismatch(f"expected {k} probability columns, got {pred.shape[1]}")
    return pred.astype(np.float64)


def _k(labels, k):
    return int(k) if k is not None else int(np.max(labels)) + 1


def ber(pred, labels, k=None):
    """Balanced error rate of a group predictor.

    ``pred`` is either an ``N x k`` probability matrix or a vector of hard
    labels (treated as one-hot rows).  Every group must appear in ``labels``.
    """
    labels = np.asarray(labels, dtype=np.intp)
    k = _k(labels, k)
    if k < 2:
        raise ValueError("k must be >= 2")
    probs = _as_probs(pred, k)
    counts = np.bincount(labels, minlength=k)
    if np.any(counts == 0):
        raise MissingGroup(f"groups without rows: {np.flatnonzero(counts == 0).tolist()}")
    correct = probs[np.arange(len(labels)), labels]
    means = np.bincount(labels, weights=correct, minlength=k) / counts
    return float(1.0 - means.mean())


def optimal_protection(k, group_proportions=None):
    """``((k-1)/k, largest group share)``: the BER and SAcc of a predictor
    that carries no information on the group."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if group_proportions is None:
        group_proportions = np.full(k, 1.0 / k)
    return (k - 1) / k, float(np.max(group_proportions))


def sacc(pred, labels):
    """Accuracy of sensitive-attribute inference."""
    pred = np.asarray(pred)
    labels = np.asarray(labels)
    if pred.ndim == 2:
        pred = pred.argmax(axis=1)
    return float(np.mean(pred == labels))


def mi_discrete(pred, labels, base=np.e):
    """Plug-in mutual information between hard predictions and labels."""
    pred = np.asarray(pred)
    if pred.ndim == 2:
        pred = pred.argmax(axis=1)
    table = pd.crosstab(np.asarray(labels), pred).to_numpy(dtype=np.float64)
    joint = table / table.sum()
    outer = joint.sum(axis=1, keepdims=True) * joint.sum(axis=0, keepdims=True)
    pos = joint > 0
    return float((joint[pos] * np.log(joint[pos] / outer[pos])).sum() / np.log(base))


def _scope_mask(groups, scope, n):
    if scope not in SCOPES:
        raise ValueError(f"unknown scope {scope!r}")
    if scope == "all":
        return np.ones(n, dtype=bool)
    if groups is None:
        raise ValueError(f"scope {scope!r} needs group labels")
    groups = np.asarray(groups)
    return groups == 0 if scope == "priv" else groups != 0


def _values_groups(x, groups=None):
    if isinstance(x, EncodedMatrix):
        return x.values, x.groups if groups is None else groups
    return np.asarray(x, dtype=np.float64), groups


def fidelity(original, transformed, scope="all", groups=None):
    """One minus the mean squared difference over the scoped rows (encoded space)."""
    a, groups = _values_groups(original, groups)
    b, _ = _values_groups(transformed)
    if a.shape != b.shape:
        raise ShapeMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    mask = _scope_mask(groups, scope, len(a))
    if not mask.any():
        return float("nan")
    return float(1.0 - np.mean((a[mask] - b[mask]) ** 2))


def permutation_baseline(matrix, seed=0):
    """Rows with every column shuffled independently: the fidelity reference
    for "unrelated records with the right marginals"."""
    values, _ = _values_groups(matrix)
    rng = np.random.default_rng(seed)
    out = np.column_stack([rng.permutation(values[:, j]) for j in range(values.shape[1])])
    return out


def classification_pc(classifier, transformed, scope="prot", groups=None):
    """Share of scoped transformed rows that ``classifier`` (trained on the
    original data to predict the group) assigns to the privileged group."""
    x, groups = _values_groups(transformed, groups)
    mask = _scope_mask(groups, scope, len(x))
    if not mask.any():
        return float("nan")
    pred = classifier.predict(x[mask])
    return float(np.mean(pred == 0))


def diversity(x, chunk_size=2048):
    """Mean pairwise Euclidean distance divided by ``sqrt(d)``."""
    x, _ = _values_groups(x)
    n, d = x.shape
    if n < 2:
        return 0.0
    total = 0.0
    for start in range(0, n, chunk_size):
        total += cdist(x[start:start + chunk_size], x).sum()
    return float(total / (n * (n - 1) * np.sqrt(d)))


def categorical_damage(original, transformed, scope="all"):
    """Per categorical column, the share of scoped rows whose decoded value
    changed; returns ``(rates, median)``."""
    if len(original) != len(transformed):
        raise ShapeMismatch("datasets differ in length")
    mask = _scope_mask(original.groups, scope, len(original))
    rates = {}
    for spec in original.schema:
        if spec.kind != CATEGORICAL or spec.role != OTHER:
            continue
        a = original.frame[spec.name].astype(str).to_numpy()[mask]
        b = transformed.frame[spec.name].astype(str).to_numpy()[mask]
        rates[spec.name] = float(np.mean(a != b)) if len(a) else float("nan")
    median = float(np.median(list(rates.values()))) if rates else float("nan")
    return rates, median


@dataclass
class FairnessGaps:
    demo_parity: float
    tp_gap: float
    fp_gap: float
    epsilon: float = 0.05
    per_group: pd.DataFrame = None
    degenerate: list = field(default_factory=list)

    @property
    def within_epsilon(self):
        gaps = [self.demo_parity, self.tp_gap, self.fp_gap]
        return all(np.isfinite(g) and g <= self.epsilon for g in gaps)

    def to_dict(self):
        return {"demo_parity": self.demo_parity, "tp_gap": self.tp_gap, "fp_gap": self.fp_gap,
                "epsilon": self.epsilon, "degenerate": list(self.degenerate)}


def _max_gap(rates):
    rates = np.asarray([r for r in rates if np.isfinite(r)])
    return float(rates.max() - rates.min()) if len(rates) >= 2 else 0.0


def fairness_gaps(y_true, y_pred, groups, k=None, epsilon=0.05):
    """Positive, true-positive and false-positive rates per group and their
    largest pairwise gaps.

    A group without positives (or negatives) has an undefined TP (FP) rate;
    it is listed in ``degenerate``, a :class:`DegenerateGroupWarning` is
    issued, and the gap is taken over the remaining groups.
    """
    y_true = np.asarray(y_true).astype(np.intp)
    y_pred = np.asarray(y_pred).astype(np.intp)
    groups = np.asarray(groups, dtype=np.intp)
    k = _k(groups, k)
    rows, degenerate = [], []
    for g in range(k):
        m = groups == g
        if not m.any():
            raise MissingGroup(f"group {g} has no rows")
        pos = m & (y_true == 1)
        neg = m & (y_true == 0)
        tpr = y_pred[pos].mean() if pos.any() else np.nan
        fpr = y_pred[neg].mean() if neg.any() else np.nan
        if not pos.any():
            degenerate.append((g, "no positives"))
        if not neg.any():
            degenerate.append((g, "no negatives"))
        rows.append({"group": g, "n": int(m.sum()), "pos_rate": y_pred[m].mean(),
                     "tp_rate": tpr, "fp_rate": fpr, "accuracy": np.mean(y_pred[m] == y_true[m])})
    if degenerate:
        warnings.warn(f"undefined rates: {degenerate}", DegenerateGroupWarning, stacklevel=2)
    table = pd.DataFrame(rows)
    return FairnessGaps(_max_gap(table.pos_rate), _max_gap(table.tp_rate),
                        _max_gap(table.fp_rate), epsilon, table, degenerate)


# -- protection against external classifiers -----------------------------
@dataclass
class ProtectionReport:
    ber: float
    sacc: float
    mi: float
    variant: str
    worst: dict = field(default_factory=dict)
    per_classifier: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")

    def to_rows(self):
        """Flat (metric, scope, variant, value, classifier) rows."""
        out = []
        for metric in ("ber", "sacc", "mi"):
            out.append({"metric": metric, "scope": "all", "variant": self.variant,
                        "value": getattr(self, metric), "classifier": self.worst.get(metric)})
        return out


# direction of "worst" for each reported metric
WORST = {"ber": min, "sacc": max, "mi": max, "pc": max}


def worst_case(per_classifier):
    """``{metric: classifier}`` picking, for each metric, the classifier with
    the least favourable value (lowest BER, highest SAcc / MI / Pc)."""
    if not per_classifier:
        raise ValueError("no classifier results")
    metrics = next(iter(per_classifier.values())).keys()
    return {m: WORST[m](per_classifier, key=lambda c: per_classifier[c][m]) for m in metrics}


def variant_matrix(original, transformed, groups, variant):
    """Rows evaluated for a protection variant: ``og_prv`` keeps the
    original privileged rows, ``rc_prv`` uses their reconstruction.  The
    protected rows are always transformed."""
    original = np.asarray(original, dtype=np.float64)
    transformed = np.asarray(transformed, dtype=np.float64)
    if variant == "rc_prv":
        return transformed.copy()
    if variant != "og_prv":
        raise ValueError(f"unknown variant {variant!r}")
    priv = np.asarray(groups) == 0
    return np.where(priv[:, None], original, transformed)


def protection_report(classifiers, train, test, variant, k=None, seed=0):
    """Train every external classifier on ``train`` to predict the group and
    report the worst case on ``test``: lowest BER, highest SAcc, highest MI.

    ``train`` and ``test`` are ``(X, groups)`` pairs already built for the
    variant (see :func:`variant_matrix`).  ``classifiers`` holds kind names
    or unfitted :class:`~fairmap.classifiers.ExternalClassifier` instances.
    BER uses predicted probabilities, SAcc and MI the hard predictions.
    """
    from .classifiers import make_classifier

    x_tr, g_tr = train
    x_te, g_te = test
    g_tr = np.asarray(g_tr, dtype=np.intp)
    g_te = np.asarray(g_te, dtype=np.intp)
    k = _k(np.concatenate([g_tr, g_te]), k)
    per = {}
    if not classifiers:
        raise ValueError("no external classifiers given")
    for spec in classifiers:
        clf = make_classifier(spec, seed=seed)
        clf.fit(x_tr, g_tr)
        probs = clf.predict_proba(x_te, k=k)
        pred = probs.argmax(axis=1)
        per[clf.kind] = {"ber": ber(probs, g_te, k), "sacc": sacc(pred, g_te),
                         "mi": mi_discrete(pred, g_te)}
    worst = worst_case(per)
    return ProtectionReport(per[worst["ber"]]["ber"], per[worst["sacc"]]["sacc"],
                            per[worst["mi"]]["mi"], variant, worst, per)


def worst_pc(classifiers, original, transformed, seed=0, k=None):
    """Highest Pc_prot over classifiers trained on the original data.

    ``original`` and ``transformed`` are ``(X, groups)`` pairs; the
    classifiers are fitted on the first and applied to the protected rows of
    the second.  Returns ``(value, classifier_kind, per_classifier)``.
    """
    from .classifiers import make_classifier

    x_o, g_o = original
    x_t, g_t = transformed
    per = {}
    for spec in classifiers:
        clf = make_classifier(spec, seed=seed).fit(x_o, g_o)
        per[clf.kind] = {"pc": classification_pc(clf, x_t, "prot", g_t)}
    best = worst_case(per)["pc"]
    return per[best]["pc"], best, {c: v["pc"] for c, v in per.items()}
