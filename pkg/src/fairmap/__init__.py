"""Adversarial mapping of protected groups onto the privileged distribution.

Submodules: ``data`` (schemas, encoding, synthetic data, folds), ``nn``
(dense networks), ``losses`` and ``mapping`` (training), ``baselines``
(quantile repair), ``metrics``, ``sinkhorn``, ``classifiers``,
``evaluation`` and ``cli``.
"""

from .baselines import QuantileRepair, apply_dirm, fit_dirm
from .data import Dataset, EncodedMatrix, TabularEncoder, generate_lipton, load_csv
from .exceptions import FairMapError
from .mapping import FairMapping, TrainConfig, load_ensemble, save_ensemble, train, transform

__version__ = "0.1.0"

__all__ = [
    "Dataset", "EncodedMatrix", "FairMapError", "FairMapping", "QuantileRepair",
    "TabularEncoder", "TrainConfig", "apply_dirm", "fit_dirm", "generate_lipton",
    "load_csv", "load_ensemble", "save_ensemble", "train", "transform",
]
