"""Seeded random search over the loss weights."""

import math
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .._random import child_seed, substream
from ..classifiers import COMPARISON_SET
from ..mapping import LossWeights, TrainConfig, pretrain_classifier, save_ensemble, train
from .pareto import ParetoPoint
from .scoring import divergence_triple, score_mapping

DEFAULT_RANGES = {name: (1e-2, 1e2) for name in ("lambda_rec", "lambda_c", "lambda_gan", "lambda_d")}
# weights a mode forces to zero (see mapping.check_mode)
MODE_ZEROS = {"wgan": ("lambda_rec", "lambda_c", "lambda_d"),
              "gansan": ("lambda_c", "lambda_gan"),
              "gansan_om": ("lambda_c", "lambda_gan")}


@dataclass
class SearchSpace:
    """Log-uniform ranges per loss weight on top of a fixed base config."""

    base: TrainConfig = field(default_factory=TrainConfig)
    ranges: dict = field(default_factory=lambda: dict(DEFAULT_RANGES))

    def __post_init__(self):
        known = set(LossWeights.__dataclass_fields__)
        for name, (lo, hi) in self.ranges.items():
            if name not in known:
                raise ValueError(f"unknown loss weight {name!r}")
            if not 0 < lo <= hi:
                raise ValueError(f"bad range for {name}: {(lo, hi)}")

    def sample(self, seed, trial):
        """``TrainConfig`` for one trial: its own weights and init seed."""
        rng = substream(seed, "sweep", trial)
        weights = self.base.weights.to_dict()
        zeros = MODE_ZEROS.get(self.base.mode, ())
        for name in sorted(self.ranges):
            lo, hi = self.ranges[name]
            value = float(np.exp(rng.uniform(math.log(lo), math.log(hi))))
            weights[name] = 0.0 if name in zeros else value
        cfg = self.base.to_dict()
        cfg["weights"] = weights
        cfg["seed"] = child_seed(seed, "sweep-init", trial)
        return TrainConfig.from_dict(cfg)


def _hyper(cfg):
    return {"seed": cfg.seed, **cfg.weights.to_dict()}


def run_trial(trial, config, train_matrix, test_matrix, classifier, classifiers, eval_seed,
              divergences=False, checkpoint_dir=None, sinkhorn=None):
    """Train and score one configuration; failures come back as a point
    carrying the error message."""
    try:
        ens = train(train_matrix, config, classifier=classifier.copy())
        metrics, _ = score_mapping(ens, train_matrix, test_matrix, classifiers, seed=eval_seed)
        if divergences:
            metrics.update(divergence_triple(ens, test_matrix, sinkhorn))
        if checkpoint_dir is not None:
            save_ensemble(ens, Path(checkpoint_dir) / f"trial_{trial:04d}")
        return ParetoPoint(trial, _hyper(config), metrics)
    except Exception as exc:  # recorded, the sweep goes on
        msg = "".join(traceback.format_exception_only(type(exc), exc)).strip()
        return ParetoPoint(trial, _hyper(config), {}, error=msg)


def sweep(train_matrix, test_matrix, space=None, budget=100, seed=0, classifiers=COMPARISON_SET,
          workers=1, csv_path=None, resume=False, divergences=False, checkpoint_dir=None,
          sinkhorn=None):
    """Run ``budget`` trials and return their points ordered by trial id.

    With ``csv_path`` every finished trial is appended to that Pareto CSV
    as it completes; ``resume`` reloads the trials already in the file and
    only runs the missing ones.  The group classifier C is pretrained once
    and shared (copied) by all trials.
    """
    space = space or SearchSpace()
    done = {}
    if csv_path is not None and resume and Path(csv_path).exists():
        done = {p.model_id: p for p in read_pareto_csv(csv_path)}
    pending = [t for t in range(budget) if t not in done]
    configs = {t: space.sample(seed, t) for t in pending}
    classifier = pretrain_classifier(train_matrix, config=space.base)
    eval_seed = child_seed(seed, "sweep-eval")
    jobs = (delayed(run_trial)(t, configs[t], train_matrix, test_matrix, classifier, classifiers,
                               eval_seed, divergences, checkpoint_dir, sinkhorn)
            for t in pending)
    runner = Parallel(n_jobs=workers, return_as="generator_unordered")
    for point in runner(jobs):
        done[point.model_id] = point
        if csv_path is not None:
            append_pareto_csv(csv_path, point)
    return [done[t] for t in sorted(done) if t < budget]


# -- CSV ---------------------------------------------------------------------
def point_row(point):
    row = {"model_id": point.model_id}
    row.update(point.hyperparameters)
    row.update({f"m:{k}": v for k, v in point.metrics.items()})
    row["error"] = point.error or ""
    return row


def points_frame(points):
    return pd.DataFrame([point_row(p) for p in points])


def append_pareto_csv(path, point):
    path = Path(path)
    row = pd.DataFrame([point_row(point)])
    if path.exists() and path.stat().st_size > 0:
        header = pd.read_csv(path, nrows=0).columns.tolist()
        merged = list(header) + [c for c in row.columns if c not in header]
        if merged != header:
            # a later trial brought new columns: rewrite with the wider header
            old = pd.read_csv(path)
            pd.concat([old, row], ignore_index=True)[merged].to_csv(path, index=False)
            return
        row.reindex(columns=header).to_csv(path, mode="a", header=False, index=False)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        row.to_csv(path, index=False)


def write_pareto_csv(path, points):
    frame = points_frame(points)
    frame.to_csv(path, index=False)
    return frame


def read_pareto_csv(path):
    frame = pd.read_csv(path, keep_default_na=False, na_values=[""])
    points = []
    for rec in frame.to_dict("records"):
        error = rec.pop("error", "")
        error = None if error is None or (isinstance(error, float) and math.isnan(error)) \
            or error == "" else str(error)
        model_id = int(rec.pop("model_id"))
        metrics = {k[2:]: float(v) for k, v in rec.items()
                   if k.startswith("m:") and not pd.isna(v)}
        hyper = {k: v for k, v in rec.items() if not k.startswith("m:")}
        points.append(ParetoPoint(model_id, hyper, metrics, error))
    return points
