"""Loss terms of the mapping procedure.

Each function returns ``(value, gradient)`` where the gradient is taken with
respect to the array the loss reads from the networks (probabilities, critic
scores or generator output), so callers chain it through
:meth:`fairmap.nn.DenseNet.backward`.

Group labels are integers ``0..k-1`` with ``0`` the privileged group.
Per-group averages only involve groups present in the batch.
"""

import numpy as np

from .exceptions import RowNotNormalized, ShapeMismatch


def _group_stats(groups, k):
    groups = np.asarray(groups, dtype=np.intp)
    counts = np.bincount(groups, minlength=k).astype(np.float64)
    return groups, counts


def _correct_class_probs(probs, groups):
    return probs[np.arange(len(groups)), groups]


def per_group_correct_means(probs, groups, k):
    """Mean probability assigned to the true group, for every group present."""
    groups, counts = _group_stats(groups, k)
    sums = np.bincount(groups, weights=_correct_class_probs(probs, groups), minlength=k)
    present = counts > 0
    means = np.zeros(k)
    means[present] = sums[present] / counts[present]
    return means, counts, present


def recons_loss(original, reconstructed):
    """Mean absolute difference over every entry (L1 reconstruction)."""
    original = np.asarray(original, dtype=np.float64)
    reconstructed = np.asarray(reconstructed, dtype=np.float64)
    if original.shape != reconstructed.shape:
        raise ShapeMismatch("reconstruction shapes differ")
    if original.size == 0:
        return 0.0, np.zeros_like(reconstructed)
    diff = reconstructed - original
    return float(np.abs(diff).mean()), np.sign(diff) / diff.size


def classification_term(probs):
    """Mean probability of the privileged class over the mapped protected rows.

    The generator maximises this, i.e. subtracts it (weighted) from its loss.
    """
    probs = np.asarray(probs, dtype=np.float64)
    n = probs.shape[0]
    grad = np.zeros_like(probs)
    if n == 0:
        return 0.0, grad
    grad[:, 0] = 1.0 / n
    return float(probs[:, 0].mean()), grad


def critic_distance(scores, is_privileged):
    """Mean critic score on privileged rows minus mean score on mapped rows."""
    scores = np.asarray(scores, dtype=np.float64).reshape(len(is_privileged), -1)
    is_privileged = np.asarray(is_privileged, dtype=bool)
    n_priv = is_privileged.sum()
    n_map = (~is_privileged).sum()
    grad = np.zeros_like(scores)
    value = 0.0
    if n_priv:
        value += scores[is_privileged, 0].mean()
        grad[is_privileged, 0] = 1.0 / n_priv
    if n_map:
        value -= scores[~is_privileged, 0].mean()
        grad[~is_privileged, 0] = -1.0 / n_map
    return float(value), grad


def gan_term(scores_mapped):
    """Generator side of the critic game: minus the mean critic score."""
    scores = np.asarray(scores_mapped, dtype=np.float64)
    n = scores.shape[0]
    if n == 0:
        return 0.0, np.zeros_like(scores)
    return float(-scores.mean()), np.full_like(scores, -1.0 / scores.size)


def discriminator_loss(probs, groups, k, kind="ber"):
    """Loss minimised by the sensitive-attribute discriminator.

    ``acc``: one minus the mean correct-class probability over all rows.
    ``ber``: one minus the average over groups of the per-group mean
    correct-class probability.
    """
    probs = np.asarray(probs, dtype=np.float64)
    groups = np.asarray(groups, dtype=np.intp)
    n = len(groups)
    grad = np.zeros_like(probs)
    rows = np.arange(n)
    if kind == "acc":
        grad[rows, groups] = -1.0 / n
        return float(1.0 - _correct_class_probs(probs, groups).mean()), grad
    if kind != "ber":
        raise ValueError(f"unknown loss kind {kind!r}")
    means, counts, present = per_group_correct_means(probs, groups, k)
    k_eff = present.sum()
    grad[rows, groups] = -1.0 / (k_eff * counts[groups])
    return float(1.0 - means[present].sum() / k_eff), grad


def protection_loss(probs, groups, k, kind="ber"):
    """Protection term the generator minimises.

    ``ber``: ``-1/k + (1/k) * sum_j mean_j``, zero when the discriminator's
    per-group correct rates sum to one (balanced error at ``(k-1)/k``).
    ``acc``: mean correct-class probability over all rows of the batch.
    """
    probs = np.asarray(probs, dtype=np.float64)
    groups = np.asarray(groups, dtype=np.intp)
    n = len(groups)
    grad = np.zeros_like(probs)
    rows = np.arange(n)
    if kind == "acc":
        grad[rows, groups] = 1.0 / n
        return float(_correct_class_probs(probs, groups).mean()), grad
    if kind != "ber":
        raise ValueError(f"unknown loss kind {kind!r}")
    means, counts, present = per_group_correct_means(probs, groups, k)
    k_eff = present.sum()
    grad[rows, groups] = 1.0 / (k_eff * counts[groups])
    return float((means[present].sum() - 1.0) / k_eff), grad


def mi_soft(probs, groups, k=None, priors=None, base=np.e, check=True):
    """Differentiable mutual information between true and predicted groups.

    The joint ``P(S=i, S_hat=j)`` is the mean predicted probability of ``j``
    over rows of group ``i`` times ``P(S=i)``; the predicted marginal is the
    mean predicted probability over all rows.  ``priors`` defaults to the
    empirical group proportions.  ``0 log 0`` counts as 0.
    """
    probs = np.asarray(probs, dtype=np.float64)
    groups = np.asarray(groups, dtype=np.intp)
    n, n_cls = probs.shape
    k = n_cls if k is None else k
    if check and np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-6):
        raise RowNotNormalized("prediction rows must sum to 1")
    counts = np.bincount(groups, minlength=k).astype(np.float64)
    if priors is None:
        priors = counts / n
    priors = np.asarray(priors, dtype=np.float64)

    sums = np.zeros((k, n_cls))
    np.add.at(sums, groups, probs)
    safe_counts = np.where(counts > 0, counts, 1.0)
    cond = sums / safe_counts[:, None]
    joint = cond * priors[:, None]
    marginal = probs.mean(axis=0)

    outer = priors[:, None] * marginal[None, :]
    pos = joint > 0
    log_ratio = np.zeros_like(joint)
    log_ratio[pos] = np.log(joint[pos] / outer[pos])
    value = float((joint * log_ratio).sum())

    # d/dJ of J log(J / (p q)) is log(J / (p q)) + 1; the marginal enters
    # through -J/q for every row
    d_joint = np.where(pos, log_ratio + 1.0, 0.0)
    d_marg = -(joint / np.where(marginal > 0, marginal, 1.0)[None, :]).sum(axis=0)
    row_scale = (priors / safe_counts)[groups]
    grad = d_joint[groups] * row_scale[:, None] + d_marg[None, :] / n
    scale = 1.0 / np.log(base)
    return value * scale, grad * scale
