"""Every metric of a trained mapping on a held-out split."""

import numpy as np

from .. import metrics as mt
from ..classifiers import COMPARISON_SET
from ..data import EncodedMatrix
from ..mapping import MappingEnsemble, transform_values
from ..nn import DenseNet

PROTECTION_ROWS = ("BER_rc_prv", "SAcc_rc_prv", "MI_rc_prv",
                   "BER_og_prv", "SAcc_og_prv", "MI_og_prv")
CROSSVAL_ROWS = PROTECTION_ROWS + ("Pc_prot", "Fid_priv")


def as_mapper(mapping):
    """Callable ``values -> values`` from an ensemble, a generator network or
    a plain function (the identity case of the scenario harness)."""
    if isinstance(mapping, MappingEnsemble):
        return mapping.map_values
    if isinstance(mapping, DenseNet):
        return lambda v: transform_values(mapping, v)
    if callable(mapping):
        return mapping
    raise TypeError(f"cannot map records with {type(mapping).__name__}")


def _xg(m):
    return (m.values, m.groups) if isinstance(m, EncodedMatrix) else m


def score_mapping(mapping, train, test, classifiers=COMPARISON_SET, seed=0, k=None):
    """Protection (both variants), transformation and fidelity metrics.

    ``train``/``test`` are EncodedMatrix objects (or ``(values, groups)``
    pairs) in the encoded space the mapping was trained on.  External
    classifiers learn the group from the mapped training split and are
    scored on the mapped test split; Pc classifiers learn it from the
    original training split.  Returns ``(metrics, details)``.
    """
    mapper = as_mapper(mapping)
    x_tr, g_tr = _xg(train)
    x_te, g_te = _xg(test)
    k = int(k or max(g_tr.max(), g_te.max()) + 1)
    t_tr, t_te = mapper(x_tr), mapper(x_te)
    out, details = {}, {}
    for variant in mt.VARIANTS:
        rep = mt.protection_report(
            classifiers,
            (mt.variant_matrix(x_tr, t_tr, g_tr, variant), g_tr),
            (mt.variant_matrix(x_te, t_te, g_te, variant), g_te),
            variant, k=k, seed=seed)
        out[f"BER_{variant}"], out[f"SAcc_{variant}"], out[f"MI_{variant}"] = rep.ber, rep.sacc, rep.mi
        details[variant] = {"worst": rep.worst, "per_classifier": rep.per_classifier}
    pc, pc_kind, pc_per = mt.worst_pc(classifiers, (x_tr, g_tr), (t_te, g_te), seed=seed, k=k)
    out["Pc_prot"] = pc
    details["Pc_prot"] = {"worst": pc_kind, "per_classifier": pc_per}
    out["Pc_all"] = max(_pc_all(c, x_tr, g_tr, t_te, seed) for c in classifiers)
    for scope in mt.SCOPES:
        out[f"Fid_{scope}"] = mt.fidelity(x_te, t_te, scope, g_te)
    out["diversity"] = mt.diversity(t_te)
    return out, details


def _pc_all(kind, x_tr, g_tr, t_te, seed):
    from ..classifiers import make_classifier
    clf = make_classifier(kind, seed=seed).fit(x_tr, g_tr)
    return float(np.mean(clf.predict(t_te) == 0))


def divergence_triple(mapping, test, config=None):
    from ..sinkhorn import audit_divergences
    x, g = _xg(test)
    return audit_divergences(x, as_mapper(mapping)(x), g, config)
