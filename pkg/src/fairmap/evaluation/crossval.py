"""K-fold retraining of a selected configuration."""

import warnings

import numpy as np
import pandas as pd

from ..classifiers import COMPARISON_SET
from ..data import TabularEncoder, split_kfold
from ..exceptions import ClampWarning
from ..mapping import train
from .scoring import CROSSVAL_ROWS, score_mapping


def aggregate_folds(fold_metrics, rows=CROSSVAL_ROWS):
    """``metric, mean, std`` table (sample standard deviation across folds)."""
    frame = pd.DataFrame(list(fold_metrics))
    out = []
    for name in rows:
        values = frame[name].to_numpy(dtype=np.float64)
        std = float(values.std(ddof=1)) if len(values) > 1 else 0.0
        out.append({"metric": name, "mean": float(values.mean()), "std": std})
    return pd.DataFrame(out, columns=["metric", "mean", "std"])


def crossval(dataset, config, n_folds=3, seed=0, classifiers=COMPARISON_SET, fit=None):
    """Retrain on every fold split and report mean/std of the metric rows.

    The encoder is refitted on each training part.  ``fit(train_matrix)``
    replaces the training call (any returned mapping works with
    :func:`score_mapping`), which also allows fixed transforms.  Returns
    ``(table, per_fold)``.
    """
    plan = split_kfold(dataset, n_folds=n_folds, seed=seed)
    per_fold = []
    for fold, (tr, te) in enumerate(plan):
        enc = TabularEncoder().fit(dataset.subset(tr))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ClampWarning)
            x_tr = enc.transform(dataset.subset(tr))
            x_te = enc.transform(dataset.subset(te))
        mapping = fit(x_tr) if fit is not None else train(x_tr, config)
        metrics, _ = score_mapping(mapping, x_tr, x_te, classifiers, seed=seed)
        per_fold.append({"fold": fold, **metrics})
    return aggregate_folds(per_fold), pd.DataFrame(per_fold)
