"""Command-line entry point: ``fairmap <command> --config run.json``.

Commands
--------
prepare   load or generate the dataset, split it, write it with its fingerprint
train     train one mapping with the ``train`` section
sweep     random search over the loss weights, Pareto CSV
select    Pareto front + trade-off selection (optionally cross-validated)
scenario  task classifiers under the four deployment scenarios
report    consolidated JSON (validated against the shipped schema) + CSV bundle

Every run writes under ``output``; the effective configuration is echoed to
``<output>/config.json``.
"""

import argparse
import copy
import json
import shutil
import sys
import warnings
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import pandas as pd

from . import data as fd
from .classifiers import COMPARISON_SET, FAIRNESS_SET, KINDS
from .evaluation import (
    SearchSpace,
    SelectionCoefficients,
    crossval,
    pareto_front,
    perspective,
    read_pareto_csv,
    run_all_scenarios,
    select_tradeoff,
    selection_score,
    sweep,
    write_pareto_csv,
)
from .evaluation.pareto import PERSPECTIVES
from .exceptions import ClampWarning, ConfigError, FairMapError, SchemaError
from .mapping import TrainConfig, load_ensemble, save_ensemble, train
from .sinkhorn import SinkhornConfig

COMMANDS = ("prepare", "train", "sweep", "select", "scenario", "report")

DEFAULTS = {
    "dataset": {"generator": None, "n": 2000, "path": None, "schema": None,
                "sensitive": None, "decision": None, "privileged": None,
                "test_fraction": 1 / 3},
    "train": {},
    "sweep": {"budget": 100, "ranges": None, "divergences": False},
    "eval": {"perspective": "fairmapping", "use_sacc": False, "variant": "rc_prv",
             "classifiers": list(COMPARISON_SET), "task_classifiers": list(FAIRNESS_SET),
             "selection": None, "epsilon": 0.05, "sinkhorn": {}, "n_folds": 3},
    "seed": 0,
    "output": "run",
}


CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "dataset": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "generator": {"enum": [None, "lipton"]},
                "n": {"type": "integer", "minimum": 2},
                "path": {"type": ["string", "null"]},
                "schema": {"type": ["array", "null"], "items": {"type": "object"}},
                "sensitive": {"type": ["array", "null"], "items": {"type": "string"}},
                "decision": {"type": ["string", "null"]},
                "privileged": {"type": ["string", "null"]},
                "test_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            },
        },
        "train": {"type": "object"},
        "sweep": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "budget": {"type": "integer", "minimum": 1},
                "ranges": {"type": ["object", "null"],
                           "additionalProperties": {"type": "array", "items": {"type": "number"},
                                                    "minItems": 2, "maxItems": 2}},
                "divergences": {"type": "boolean"},
            },
        },
        "eval": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "perspective": {"enum": list(PERSPECTIVES)},
                "use_sacc": {"type": "boolean"},
                "variant": {"enum": ["og_prv", "rc_prv"]},
                "classifiers": {"type": "array", "items": {"enum": list(KINDS)}, "minItems": 1},
                "task_classifiers": {"type": "array", "items": {"enum": list(KINDS)},
                                     "minItems": 1},
                "selection": {"type": ["object", "null"], "additionalProperties": False,
                              "properties": {c: {"type": "number", "minimum": 0}
                                             for c in ("alpha", "beta", "gamma", "delta")}},
                "epsilon": {"type": "number", "minimum": 0},
                "sinkhorn": {"type": "object"},
                "n_folds": {"type": "integer", "minimum": 2},
            },
        },
        "seed": {"type": "integer"},
        "output": {"type": "string"},
    },
}


# -- configuration -----------------------------------------------------------
def _merge(base, override):
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict) and key != "train":
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(config, assignment):
    """Apply one ``section.key=value`` (``value`` parsed as JSON when it can be)."""
    if "=" not in assignment:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    path, raw = assignment.split("=", 1)
    keys = path.strip().split(".")
    node = config
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"--set {path}: {key!r} is not a section")
    node[keys[-1]] = _parse_value(raw)
    return config


def load_config(path=None, overrides=(), seed=None):
    """Read, merge with defaults, apply overrides and validate a run config."""
    user = {}
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: the config must be a JSON object")
    for assignment in overrides:
        apply_override(user, assignment)
    if seed is not None:
        user["seed"] = seed
    try:
        jsonschema.validate(user, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config {where}: {exc.message}") from None
    config = _merge(DEFAULTS, user)
    train_cfg = dict(config["train"])
    train_cfg.setdefault("seed", config["seed"])
    config["train"] = TrainConfig.from_dict(train_cfg).to_dict()
    ds = config["dataset"]
    if (ds["generator"] is None) == (ds["path"] is None):
        raise ConfigError("dataset needs exactly one of 'generator' and 'path'")
    if ds["path"] is not None and not ds["schema"]:
        raise ConfigError("dataset.schema is required with dataset.path")
    return config


# -- data --------------------------------------------------------------------
def load_dataset(config):
    ds_cfg = config["dataset"]
    if ds_cfg["generator"] == "lipton":
        dataset = fd.generate_lipton(ds_cfg["n"], config["seed"])
    else:
        schema = [fd.AttributeSpec.from_dict(a) for a in ds_cfg["schema"]]
        if ds_cfg["sensitive"]:
            names = set(ds_cfg["sensitive"])
            schema = [fd.AttributeSpec(a.name, a.kind,
                                       fd.SENSITIVE if a.name in names else
                                       (fd.OTHER if a.role == fd.SENSITIVE else a.role),
                                       a.categories, a.numeric_range) for a in schema]
        path = ds_cfg["path"]
        try:
            dataset = fd.load_csv(path, schema, privileged=ds_cfg["privileged"])
        except SchemaError as exc:
            line = f":{exc.row}" if exc.row is not None else ""
            raise SchemaError(f"{path}{line}: {exc}") from None
    if ds_cfg["decision"] is not None and dataset.decision.name != ds_cfg["decision"]:
        raise ConfigError(f"dataset.decision is {ds_cfg['decision']!r} but the schema's "
                          f"decision attribute is {dataset.decision.name!r}")
    return dataset


def split_data(config, dataset):
    """Train/test EncodedMatrix pair, the encoder being fitted on train."""
    tr, te = fd.stratified_split(dataset, config["dataset"]["test_fraction"], config["seed"])
    encoder = fd.TabularEncoder().fit(dataset.subset(tr))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ClampWarning)
        return encoder.transform(dataset.subset(tr)), encoder.transform(dataset.subset(te)), (tr, te)


def _out(config, *parts):
    path = Path(config["output"]).joinpath(*parts)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _echo_config(config):
    _write_json(_out(config, "config.json"), config)


def _train_config(config):
    return TrainConfig.from_dict(config["train"])


# -- commands ----------------------------------------------------------------
def cmd_prepare(config, args=None):
    dataset = load_dataset(config)
    x_tr, x_te, (tr, te) = split_data(config, dataset)
    dataset.to_csv(_out(config, "data", "dataset.csv"))
    _write_json(_out(config, "data", "schema.json"), [a.to_dict() for a in dataset.schema])
    _write_json(_out(config, "data", "split.json"), {"train": tr.tolist(), "test": te.tolist()})
    info = {"fingerprint": fd.fingerprint(dataset),
            "train_fingerprint": fd.fingerprint(x_tr.values, x_tr.groups),
            "n_rows": len(dataset), "k": dataset.k, "group_labels": list(dataset.group_labels),
            "group_proportions": dataset.group_proportions().tolist(),
            "positive_rates": dataset.positive_rates().tolist(),
            "n_train": len(tr), "n_test": len(te), "n_columns": int(x_tr.values.shape[1])}
    _write_json(_out(config, "data", "fingerprint.json"), info)
    _echo_config(config)
    print(info["fingerprint"])
    return 0


def cmd_train(config, args=None):
    dataset = load_dataset(config)
    x_tr, x_te, _ = split_data(config, dataset)
    ens = train(x_tr, _train_config(config))
    save_ensemble(ens, _out(config, "model", "manifest.json").parent)
    _echo_config(config)
    last = ens.history[-1] if ens.history else {}
    print(json.dumps({"epochs": ens.epoch, "mode": ens.config.mode,
                      **{k: round(v, 6) for k, v in last.items() if k != "epoch"}}))
    return 0


def _space(config):
    ranges = config["sweep"]["ranges"]
    base = _train_config(config)
    return SearchSpace(base, {k: tuple(v) for k, v in ranges.items()}) if ranges \
        else SearchSpace(base)


def cmd_sweep(config, args=None):
    dataset = load_dataset(config)
    x_tr, x_te, _ = split_data(config, dataset)
    csv_path = _out(config, "sweep", "pareto.csv")
    resume = bool(getattr(args, "resume", False))
    if csv_path.exists() and not resume:
        csv_path.unlink()
    workers = getattr(args, "workers", None) or -1
    points = sweep(x_tr, x_te, _space(config), budget=config["sweep"]["budget"],
                   seed=config["seed"], classifiers=config["eval"]["classifiers"],
                   workers=workers, csv_path=csv_path, resume=resume,
                   divergences=config["sweep"]["divergences"],
                   sinkhorn=SinkhornConfig(**config["eval"]["sinkhorn"]),
                   checkpoint_dir=_out(config, "sweep", "trials", "x").parent)
    write_pareto_csv(csv_path, points)  # final file in trial order
    _echo_config(config)
    failed = sum(p.failed for p in points)
    print(f"{len(points)} trials, {failed} failed -> {csv_path}")
    return 0


def _coefficients(config, k):
    sel = config["eval"]["selection"]
    return SelectionCoefficients(**sel) if sel else SelectionCoefficients.defaults(k)


def cmd_select(config, args=None):
    pareto = Path(getattr(args, "pareto", None) or _out(config, "sweep", "pareto.csv"))
    if not pareto.exists():
        raise FileNotFoundError(f"no Pareto CSV at {pareto}")
    points = [p for p in read_pareto_csv(pareto) if not p.failed]
    if not points:
        raise FairMapError(f"{pareto}: no successful trial")
    k = getattr(args, "k", None)
    if k is None:
        info = Path(config["output"]) / "data" / "fingerprint.json"
        k = json.loads(info.read_text())["k"] if info.exists() else load_dataset(config).k
    ev = config["eval"]
    persp = perspective(ev["perspective"], ev["use_sacc"], ev["variant"])
    front = pareto_front(points, persp)
    coeffs = _coefficients(config, k)
    best = select_tradeoff(front, coeffs, k)
    score = selection_score(best.metrics, coeffs, k)
    result = {"model_id": best.model_id, "score": score, "k": k,
              "perspective": persp.name, "front": [p.model_id for p in front],
              "coefficients": vars(coeffs), "metrics": best.metrics,
              "hyperparameters": best.hyperparameters}
    if getattr(args, "crossval", False):
        cfg = _train_config(config).to_dict()
        cfg["seed"] = int(best.hyperparameters["seed"])
        cfg["weights"].update({k_: float(v) for k_, v in best.hyperparameters.items()
                               if k_.startswith("lambda_")})
        table, per_fold = crossval(load_dataset(config), TrainConfig.from_dict(cfg),
                                   n_folds=ev["n_folds"], seed=config["seed"],
                                   classifiers=ev["classifiers"])
        table.to_csv(_out(config, "crossval.csv"), index=False)
        per_fold.to_csv(_out(config, "crossval_folds.csv"), index=False)
    _write_json(_out(config, "selection.json"), result)
    print(f"{best.model_id} {score:.6f}")
    return 0


def _default_checkpoint(config):
    sel = Path(config["output"]) / "selection.json"
    if sel.exists():
        model_id = json.loads(sel.read_text())["model_id"]
        return Path(config["output"]) / "sweep" / "trials" / f"trial_{model_id:04d}"
    return Path(config["output"]) / "model"


def cmd_scenario(config, args=None):
    ckpt = Path(getattr(args, "checkpoint", None) or _default_checkpoint(config))
    if not (ckpt / "manifest.json").exists():
        raise FileNotFoundError(f"no checkpoint at {ckpt}")
    ens = load_ensemble(ckpt)
    dataset = load_dataset(config)
    x_tr, x_te, _ = split_data(config, dataset)
    if ens.fingerprint and ens.fingerprint != fd.fingerprint(x_tr.values, x_tr.groups):
        warnings.warn(f"checkpoint {ckpt} was trained on different data")
    ev = config["eval"]
    table = run_all_scenarios(ens, x_tr, x_te, ev["task_classifiers"], seed=config["seed"],
                              variant=ev["variant"], epsilon=ev["epsilon"])
    table.insert(0, "checkpoint", str(ckpt))
    path = _out(config, "scenarios.csv")
    table.to_csv(path, index=False)
    _echo_config(config)
    print(f"{len(table)} scenario rows -> {path}")
    return 0


def report_schema():
    return json.loads(resources.files("fairmap").joinpath("report_schema.json").read_text())


def _records(path):
    frame = pd.read_csv(path)
    return json.loads(frame.to_json(orient="records"))


def cmd_report(config, args=None):
    run = Path(getattr(args, "run_dir", None) or config["output"])
    if not run.is_dir() or not any(run.iterdir()):
        raise FileNotFoundError(f"run directory {run} is empty or missing")
    parts = {
        "config": run / "config.json", "dataset": run / "data" / "fingerprint.json",
        "selection": run / "selection.json",
    }
    report = {"format": "fairmap.report", "version": 1}
    for key, path in parts.items():
        report[key] = json.loads(path.read_text()) if path.exists() else None
    pareto = run / "sweep" / "pareto.csv"
    if pareto.exists():
        points = read_pareto_csv(pareto)
        report["sweep"] = {"n_trials": len(points), "n_failed": sum(p.failed for p in points)}
    else:
        report["sweep"] = None
    history = run / "model" / "history.csv"
    report["training"] = _records(history)[-1] if history.exists() and history.stat().st_size > 1 \
        else None
    for key, name in (("scenarios", "scenarios.csv"), ("crossval", "crossval.csv")):
        report[key] = _records(run / name) if (run / name).exists() else None
    if all(report[k] is None for k in ("dataset", "selection", "sweep", "training", "scenarios")):
        raise FairMapError(f"{run}: nothing to report")
    jsonschema.validate(report, report_schema())
    bundle = run / "report"
    bundle.mkdir(exist_ok=True)
    for src in (pareto, run / "scenarios.csv", run / "crossval.csv", history):
        if src.exists():
            shutil.copyfile(src, bundle / src.name)
    _write_json(bundle / "report.json", report)
    print(bundle / "report.json")
    return 0


HANDLERS = {"prepare": cmd_prepare, "train": cmd_train, "sweep": cmd_sweep,
            "select": cmd_select, "scenario": cmd_scenario, "report": cmd_report}


def build_parser():
    parser = argparse.ArgumentParser(prog="fairmap", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override one config field (repeatable)")
        p.add_argument("--seed", type=int, help="root seed")
        p.add_argument("--workers", type=int, help="parallel trials (default: all cores)")
        if name == "sweep":
            p.add_argument("--resume", action="store_true", help="keep finished trials")
        if name == "select":
            p.add_argument("--pareto", help="Pareto CSV (default: <output>/sweep/pareto.csv)")
            p.add_argument("--k", type=int, help="number of groups")
            p.add_argument("--crossval", action="store_true",
                           help="cross-validate the selected configuration")
        if name == "scenario":
            p.add_argument("--checkpoint", help="ensemble directory")
        if name == "report":
            p.add_argument("--run-dir", help="run directory (default: <output>)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, args.set, args.seed)
        return HANDLERS[args.command](config, args)
    except (FairMapError, FileNotFoundError, jsonschema.ValidationError) as exc:
        print(f"fairmap {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
