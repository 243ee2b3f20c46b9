"""Choosing one trade-off from a Pareto front."""

from dataclasses import dataclass

from ..exceptions import MissingMetric


@dataclass(frozen=True)
class SelectionCoefficients:
    alpha: float = 1.0
    beta: float = 0.0
    gamma: float = 0.2
    delta: float = 1.0

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma, self.delta) < 0:
            raise ValueError("selection coefficients must be non-negative")

    @classmethod
    def defaults(cls, k):
        return cls() if k == 2 else cls(1.0, 1.7, 0.2, 1.0)


def selection_score(metrics, coeffs, k):
    """Weighted squared distance to the ideal point
    ``(BER=(k-1)/k, MI=0, Pc=1, Fid=1)``."""
    try:
        b, mi = metrics["BER_rc_prv"], metrics["MI_rc_prv"]
        pc, fid = metrics["Pc_prot"], metrics["Fid_priv"]
    except KeyError as exc:
        raise MissingMetric(f"selection needs {exc.args[0]!r}") from None
    return (coeffs.alpha * (b - (k - 1) / k) ** 2 + coeffs.beta * mi ** 2
            + coeffs.gamma * (pc - 1.0) ** 2 + coeffs.delta * (fid - 1.0) ** 2)


def select_tradeoff(front, coeffs=None, k=2):
    """Front member with the lowest score; ties go to the higher Fid_priv,
    then the lower model id."""
    front = list(front)
    if not front:
        raise ValueError("empty front")
    coeffs = coeffs or SelectionCoefficients.defaults(k)
    scored = [(selection_score(p.metrics, coeffs, k), -p.metrics["Fid_priv"], p.model_id, i)
              for i, p in enumerate(front)]
    best = min(scored)
    return front[best[3]]
