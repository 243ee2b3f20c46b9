"""Pareto fronts over trained models and approach-specific perspectives."""

from dataclasses import dataclass, field, replace

import numpy as np

from ..exceptions import MissingMetric

MAXIMIZE, MINIMIZE = "max", "min"


@dataclass
class ParetoPoint:
    """One trained model: its id, hyperparameters and named metric values."""

    model_id: int
    hyperparameters: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    error: str = None

    @property
    def failed(self):
        return self.error is not None


@dataclass(frozen=True)
class Perspective:
    name: str
    objectives: tuple  # (metric, direction) pairs

    @property
    def names(self):
        return [m for m, _ in self.objectives]

    def vector(self, point):
        """Objective values of ``point`` oriented so that larger is better."""
        out = []
        for metric, direction in self.objectives:
            value = point.metrics.get(metric)
            if value is None or not np.isfinite(value):
                raise MissingMetric(f"model {point.model_id}: metric {metric!r} missing or not finite")
            out.append(float(value) if direction == MAXIMIZE else -float(value))
        return out


def perspective(name, use_sacc=False, variant="rc_prv"):
    """Objective set of an approach.

    ``use_sacc`` swaps the BER objective of the fairmapping perspective for
    minimising SAcc; ``variant`` picks which protection variant it reads.
    """
    if name == "fairmapping":
        prot = (f"SAcc_{variant}", MINIMIZE) if use_sacc else (f"BER_{variant}", MAXIMIZE)
        objectives = (("Fid_priv", MAXIMIZE), prot, ("Pc_prot", MAXIMIZE))
    elif name == "wgan":
        objectives = (("Pc_all", MAXIMIZE),)
    elif name == "attgan":
        objectives = (("Fid_all", MAXIMIZE), ("Pc_all", MAXIMIZE))
    elif name == "gansan_dirm":
        objectives = (("Fid_all", MAXIMIZE), ("BER_rc_prv", MAXIMIZE))
    else:
        raise ValueError(f"unknown perspective {name!r}")
    return Perspective(name, objectives)


PERSPECTIVES = ("fairmapping", "wgan", "attgan", "gansan_dirm")


def pareto_front(points, persp):
    """Non-dominated subset of ``points`` under the perspective's objectives.

    A point is dominated when another is at least as good everywhere and
    strictly better somewhere.  Points with identical objective vectors are
    kept once (the first one).  Input order is preserved.
    """
    points = list(points)
    if not points:
        raise ValueError("no points to filter")
    values = np.array([persp.vector(p) for p in points], dtype=np.float64)
    _, first = np.unique(values, axis=0, return_index=True)
    unique = np.zeros(len(points), dtype=bool)
    unique[first] = True
    keep = []
    for i in range(len(points)):
        if not unique[i]:
            continue
        ge = np.all(values >= values[i], axis=1)
        gt = np.any(values > values[i], axis=1)
        if not np.any(ge & gt):
            keep.append(points[i])
    return keep


def reevaluate_perspective(front, new_perspective, metric_evaluator):
    """Re-score every member with ``metric_evaluator(point) -> dict`` (merged
    over the existing metrics) and keep the non-dominated ones under the new
    perspective."""
    rescored = [replace(p, metrics={**p.metrics, **metric_evaluator(p)}) for p in front]
    return pareto_front(rescored, new_perspective)
