"""External classifiers used only for measurement.

Each kind wraps a scikit-learn estimator configured with the hyperparameters
listed in :data:`HYPERPARAMETERS`; probabilities are always returned with one
column per class ``0..k-1`` and :meth:`ExternalClassifier.predict` is the
arg-max of those probabilities (lowest index on ties).
"""

import json
import warnings
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, clone
from sklearn.ensemble import GradientBoostingClassifier
from sklearn.exceptions import ConvergenceWarning, NotFittedError
from sklearn.linear_model import LogisticRegression, SGDClassifier
from sklearn.neural_network import MLPClassifier
from sklearn.tree import DecisionTreeClassifier
from sklearn.utils.validation import check_array

from .data import EncodedMatrix
from .exceptions import SingleClass
from .nn import DenseNet

KINDS = ("gbc", "svm_linear", "dtree", "logistic", "mlp")
FAIRNESS_SET = ("mlp", "dtree", "logistic")
COMPARISON_SET = ("gbc", "svm_linear")

HYPERPARAMETERS = {
    "gbc": {"n_estimators": 100, "learning_rate": 0.1, "max_depth": 3},
    "mlp": {"hidden_layer_sizes": (100,), "activation": "relu", "solver": "adam",
            "max_iter": 200},
    "dtree": {"criterion": "gini", "max_depth": None},
    "logistic": {"solver": "lbfgs", "max_iter": 1000},
    "svm_linear": {"loss": "hinge", "alpha": 1e-4, "max_iter": 1000, "tol": 1e-3},
}

_ESTIMATORS = {
    "gbc": GradientBoostingClassifier,
    "mlp": MLPClassifier,
    "dtree": DecisionTreeClassifier,
    "logistic": LogisticRegression,
    "svm_linear": SGDClassifier,
}


def _matrix(x):
    if isinstance(x, EncodedMatrix):
        x = x.values
    return check_array(x, dtype=np.float64)


class ExternalClassifier(ClassifierMixin, BaseEstimator):
    """One of the fixed measurement classifiers.

    Parameters
    ----------
    kind : {"gbc", "svm_linear", "dtree", "logistic", "mlp"}
    random_state : int
    params : dict, optional
        Overrides of the default hyperparameters.
    """

    def __init__(self, kind="logistic", random_state=0, params=None):
        self.kind = kind
        self.random_state = random_state
        self.params = params

    def _make(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown classifier kind {self.kind!r}")
        params = dict(HYPERPARAMETERS[self.kind])
        params.update(self.params or {})
        if self.kind != "logistic":
            params["random_state"] = self.random_state
        return _ESTIMATORS[self.kind](**params)

    def fit(self, X, y):
        X = _matrix(X)
        y = np.asarray(y).astype(np.intp)
        classes = np.unique(y)
        if len(classes) < 2:
            raise SingleClass("training labels contain a single class")
        self.classes_ = classes
        self.estimator_ = self._make()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            self.estimator_.fit(X, y)
        if self.kind == "svm_linear":
            # Platt-style link: a logistic model on the hinge margins
            self.link_ = LogisticRegression().fit(self._margins(X), y)
        self.n_features_in_ = X.shape[1]
        return self

    def _margins(self, X):
        m = self.estimator_.decision_function(X)
        return m.reshape(len(X), -1)

    def _check(self):
        if not hasattr(self, "estimator_"):
            raise NotFittedError(f"{self.kind} classifier is not fitted")

    def predict_proba(self, X, k=None):
        """Class probabilities; with ``k`` the columns cover classes ``0..k-1``
        (classes absent from training get probability 0)."""
        self._check()
        X = _matrix(X)
        if self.kind == "svm_linear":
            probs = self.link_.predict_proba(self._margins(X))
        else:
            probs = self.estimator_.predict_proba(X)
        probs = probs / probs.sum(axis=1, keepdims=True)
        if k is None:
            return probs
        full = np.zeros((len(X), k))
        full[:, self.classes_] = probs
        return full

    def predict(self, X):
        return self.classes_[self.predict_proba(X).argmax(axis=1)]

    # -- export ------------------------------------------------------------
    def to_densenet(self):
        """Equivalent :class:`~fairmap.nn.DenseNet` (``mlp`` and ``logistic``)."""
        self._check()
        est = self.estimator_
        if self.kind == "logistic":
            weights, biases, acts = [est.coef_.T], [est.intercept_], []
        elif self.kind == "mlp":
            weights, biases = list(est.coefs_), list(est.intercepts_)
            acts = [est.activation] * (len(weights) - 1)
        else:
            raise ValueError(f"{self.kind} cannot be exported as a dense network")
        w, b = weights[-1], biases[-1]
        if w.shape[1] == 1:
            # binary models emit one logit z; softmax over (0, z) is the same sigmoid
            w = np.hstack([np.zeros_like(w), w])
            b = np.concatenate([[0.0], b])
        weights[-1], biases[-1] = w, b
        return DenseNet.from_arrays(weights, biases, tuple(acts) + ("softmax",))

    def save(self, path):
        """Write a dense-network checkpoint (mlp, logistic) or a JSON tree dump."""
        path = Path(path)
        if self.kind in ("mlp", "logistic"):
            return self.to_densenet().save(path)
        path = path.with_suffix(".json")
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.tree_dump(), indent=1))
        return path

    def tree_dump(self):
        """Exact split structure of ``dtree`` / ``gbc`` models as plain data."""
        self._check()
        est = self.estimator_
        if self.kind == "dtree":
            return {"kind": "dtree", "classes": self.classes_.tolist(),
                    "tree": _tree_dict(est.tree_)}
        if self.kind == "gbc":
            init = est.init_
            prior = getattr(init, "class_prior_", None)
            return {"kind": "gbc", "classes": self.classes_.tolist(),
                    "learning_rate": est.learning_rate,
                    "prior": None if prior is None else np.asarray(prior).tolist(),
                    "stages": [[_tree_dict(t.tree_) for t in stage] for stage in est.estimators_]}
        raise ValueError(f"{self.kind} has no tree structure")


def _tree_dict(tree):
    return {
        "children_left": tree.children_left.tolist(),
        "children_right": tree.children_right.tolist(),
        "feature": tree.feature.tolist(),
        "threshold": [float(t).hex() for t in tree.threshold],
        "value": tree.value[:, 0, :].tolist(),
    }


def make_classifier(spec, seed=0):
    """Fresh unfitted classifier from a kind name or a template instance."""
    if isinstance(spec, ExternalClassifier):
        return clone(spec)
    return ExternalClassifier(kind=spec, random_state=seed)
