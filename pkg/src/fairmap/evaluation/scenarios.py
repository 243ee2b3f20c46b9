"""Deployment scenarios: which side of a task classifier sees mapped data.

The task is always to predict the original decision from the encoded
attributes other than the decision column.
"""

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ..classifiers import make_classifier
from ..metrics import fairness_gaps, variant_matrix
from .scoring import as_mapper

# scenario -> (training attributes, test attributes)
SCENARIOS = {
    "baseline": ("original", "original"),
    "data_publishing": ("transformed", "transformed"),
    "fair_classification": ("transformed", "original"),
    "local_sanitization": ("original", "transformed"),
}


@dataclass(frozen=True)
class ScenarioSpec:
    scenario: str
    variant: str = "rc_prv"

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")

    @property
    def composition(self):
        return SCENARIOS[self.scenario]


@dataclass
class ScenarioResult:
    scenario: str
    classifier: str
    accuracy: float
    per_group_accuracy: list
    gaps: object = None
    per_group: pd.DataFrame = field(default=None, repr=False)

    def to_row(self):
        row = {"scenario": self.scenario, "classifier": self.classifier,
               "accuracy": self.accuracy}
        for g, acc in enumerate(self.per_group_accuracy):
            row[f"accuracy_g{g}"] = acc
        row.update({k: v for k, v in self.gaps.to_dict().items() if k != "degenerate"})
        return row


def _task_view(matrix, values):
    col = matrix.decision_column
    keep = [j for j in range(values.shape[1]) if j != col]
    y = np.rint(matrix.values[:, col]).astype(np.intp)
    return values[:, keep], y


def run_scenario(spec, mapping, train, test, task_classifier="mlp", seed=0, epsilon=0.05):
    """Train the task classifier on the scenario's training composition and
    evaluate it on its test composition, always against the original labels."""
    if isinstance(spec, str):
        spec = ScenarioSpec(spec)
    mapper = as_mapper(mapping)
    sides = []
    for which, matrix in zip(spec.composition, (train, test)):
        values = matrix.values
        if which == "transformed":
            values = variant_matrix(values, mapper(values), matrix.groups, spec.variant)
        sides.append(_task_view(matrix, values))
    (x_tr, y_tr), (x_te, y_te) = sides
    clf = make_classifier(task_classifier, seed=seed).fit(x_tr, y_tr)
    pred = clf.predict(x_te)
    k = int(max(train.groups.max(), test.groups.max()) + 1)
    gaps = fairness_gaps(y_te, pred, test.groups, k=k, epsilon=epsilon)
    per_group = [float(np.mean(pred[test.groups == g] == y_te[test.groups == g])) for g in range(k)]
    return ScenarioResult(spec.scenario, clf.kind, float(np.mean(pred == y_te)), per_group,
                          gaps, gaps.per_group)


def run_all_scenarios(mapping, train, test, task_classifiers=("mlp",), seed=0,
                      variant="rc_prv", epsilon=0.05):
    """Rows for every scenario and task classifier, as a DataFrame."""
    rows = []
    for name in SCENARIOS:
        for kind in task_classifiers:
            res = run_scenario(ScenarioSpec(name, variant), mapping, train, test, kind, seed, epsilon)
            rows.append(res.to_row())
    return pd.DataFrame(rows)
