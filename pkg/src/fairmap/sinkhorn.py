"""Debiased entropic optimal-transport (Sinkhorn) divergence between point clouds."""

import warnings
from dataclasses import dataclass

import numpy as np

from ._random import substream
from .data import EncodedMatrix
from .exceptions import NoConvergenceWarning, ShapeMismatch


@dataclass
class SinkhornConfig:
    """``epsilon=None`` picks ``epsilon_scale`` times the median squared
    distance between the two clouds; the same value serves the self terms."""

    epsilon: float = None
    epsilon_scale: float = 0.05
    max_iters: int = 2000
    tolerance: float = 1e-9
    debiased: bool = True
    max_points: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class SinkhornResult:
    value: float
    epsilon: float
    converged: bool
    n_iter: int
    n_a: int
    n_b: int
    subsampled: bool

    def __float__(self):
        return float(self.value)


def _points(x):
    x = x.values if isinstance(x, EncodedMatrix) else x
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise ShapeMismatch("point clouds must be non-empty 2-d arrays")
    return x


def _sq_dist(x, y):
    d = (x * x).sum(1)[:, None] + (y * y).sum(1)[None, :] - 2.0 * x @ y.T
    return np.maximum(d, 0.0)


def _lse(a, axis):
    # log-sum-exp along one axis with the usual max shift
    top = a.max(axis=axis, keepdims=True)
    return np.log(np.exp(a - top).sum(axis=axis)) + np.squeeze(top, axis=axis)


def entropic_ot(x, y, epsilon, max_iters=2000, tolerance=1e-9):
    """Entropic OT cost between uniform clouds, squared Euclidean ground cost.

    Alternating log-domain updates of the dual potentials; iteration stops
    once neither potential moves by more than ``tolerance``.  When both
    clouds are the same point set the problem is symmetric and a single
    potential is iterated with averaged updates, which avoids the slow
    oscillation of the alternating scheme; a divergence between identical
    clouds then cancels exactly.  Returns ``(<a, f> + <b, g>, converged,
    iterations)``.
    """
    cost = _sq_dist(x, y)
    log_a = np.full(len(x), -np.log(len(x)))
    log_b = np.full(len(y), -np.log(len(y)))
    symmetric = x.shape == y.shape and np.array_equal(x, y)
    f = np.zeros(len(x))
    g = np.zeros(len(y))
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        f_new = -epsilon * _lse(log_b[None, :] + (g[None, :] - cost) / epsilon, axis=1)
        if symmetric:
            f_new = 0.5 * (f + f_new)
            g_new = f_new
        else:
            g_new = -epsilon * _lse(log_a[:, None] + (f_new[:, None] - cost) / epsilon, axis=0)
        change = max(np.abs(f_new - f).max(), np.abs(g_new - g).max())
        f, g = f_new, g_new
        if change < tolerance:
            converged = True
            break
    return float(f.mean() + g.mean()), converged, it


def _subsample(x, limit, rng):
    if len(x) <= limit:
        return x, False
    return x[np.sort(rng.choice(len(x), size=limit, replace=False))], True


def sinkhorn_divergence(a, b, config=None):
    """``OT(a, b) - OT(a, a)/2 - OT(b, b)/2`` (or the plain ``OT(a, b)``
    when ``config.debiased`` is false).

    Clouds larger than ``config.max_points`` are subsampled with a fixed
    seed.  When an inner solve hits ``max_iters`` the last value is returned
    with ``converged=False`` and a :class:`NoConvergenceWarning`.
    """
    config = config or SinkhornConfig()
    a, b = _points(a), _points(b)
    if a.shape[1] != b.shape[1]:
        raise ShapeMismatch(f"column counts differ: {a.shape[1]} vs {b.shape[1]}")
    rng = substream(config.seed, "sinkhorn")
    a, sub_a = _subsample(a, config.max_points, rng)
    b, sub_b = _subsample(b, config.max_points, rng)
    eps = config.epsilon
    if eps is None:
        med = float(np.median(_sq_dist(a, b)))
        eps = config.epsilon_scale * med if med > 0 else config.epsilon_scale
    kw = dict(max_iters=config.max_iters, tolerance=config.tolerance)
    value, ok, n_iter = entropic_ot(a, b, eps, **kw)
    if config.debiased:
        aa, ok_a, it_a = entropic_ot(a, a, eps, **kw)
        bb, ok_b, it_b = entropic_ot(b, b, eps, **kw)
        value = value - 0.5 * aa - 0.5 * bb
        ok = ok and ok_a and ok_b
        n_iter = max(n_iter, it_a, it_b)
    if not ok:
        warnings.warn(f"Sinkhorn iterations did not converge within {config.max_iters} steps",
                      NoConvergenceWarning, stacklevel=2)
    return SinkhornResult(float(value), float(eps), ok, n_iter, len(a), len(b), sub_a or sub_b)


def audit_divergences(original, transformed, groups, config=None):
    """The three audited pairs for a trained mapping: protected originals vs
    their images, reconstructed privileged vs mapped protected, original
    privileged vs mapped protected."""
    x = _points(original)
    t = _points(transformed)
    groups = np.asarray(groups)
    priv, prot = groups == 0, groups != 0
    return {
        "sk_prot_vs_mapped": sinkhorn_divergence(x[prot], t[prot], config).value,
        "sk_recpriv_vs_mapped": sinkhorn_divergence(t[priv], t[prot], config).value,
        "sk_priv_vs_mapped": sinkhorn_divergence(x[priv], t[prot], config).value,
    }
