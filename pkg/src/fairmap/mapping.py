"""Adversarial fair mapping: classifier pretraining, alternating
critic/discriminator/generator updates and the instantiation modes of the
related adversarial methods.

The generator ``G`` maps encoded rows (decision column included) to the same
space without seeing the sensitive attribute.  ``D`` (group predictor) and
``D_std`` (Wasserstein critic) share a trunk; ``C`` is a frozen group
classifier pretrained on the original data.
"""

import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin

from . import losses
from ._random import substream
from .data import Dataset, EncodedMatrix, TabularEncoder, fingerprint
from .exceptions import ConfigError, EncoderMismatch, ModeConflict, NonFiniteLoss
from .nn import DenseNet, adam, clip_weights, step

log = logging.getLogger(__name__)

MODES = ("fairmapping", "wgan", "attgan", "gansan", "gansan_om")
MANIFEST_VERSION = 1


@dataclass
class LossWeights:
    lambda_rec: float = 1.0
    lambda_c: float = 1.0
    lambda_gan: float = 1.0
    lambda_d: float = 1.0
    lambda_d_mi: float = 1.0
    lambda_g_mi: float = 1.0
    lambda_dstd_gan: float = 1.0

    # alternative spellings accepted in configs
    ALIASES = {"lambda_R": "lambda_rec", "lambda_C": "lambda_c",
               "lambda_Dstd": "lambda_gan", "lambda_D": "lambda_d"}

    def __post_init__(self):
        for f in fields(self):
            value = float(getattr(self, f.name))
            if not np.isfinite(value) or value < 0:
                raise ConfigError(f"{f.name} must be finite and >= 0, got {value}")
            setattr(self, f.name, value)

    @classmethod
    def from_dict(cls, d):
        out = {}
        for key, value in dict(d).items():
            name = cls.ALIASES.get(key, key)
            if name not in {f.name for f in fields(cls)}:
                raise ConfigError(f"unknown loss weight {key!r}")
            if name in out:
                raise ConfigError(f"loss weight {name!r} given twice")
            out[name] = value
        return cls(**out)

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 128
    critic_steps: int = 5
    clip_c: float = 0.01
    seed: int = 0
    protection_loss: str = "ber"
    use_mi: bool = True
    mode: str = "fairmapping"
    weights: LossWeights = field(default_factory=LossWeights)
    generator_hidden: tuple = None
    trunk_hidden: tuple = (64, 64)
    classifier_hidden: tuple = (64, 64)
    lr_generator: float = 1e-3
    lr_discriminator: float = 1e-3
    lr_critic: float = 5e-5
    clip_scope: str = "shared"
    privileged_view: str = "original"
    keep_decision: bool = True
    standardize_discriminator: bool = False
    classifier_epochs: int = 200
    classifier_patience: int = 10

    def __post_init__(self):
        if isinstance(self.weights, dict):
            self.weights = LossWeights.from_dict(self.weights)
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.protection_loss not in ("ber", "acc"):
            raise ConfigError(f"unknown protection loss {self.protection_loss!r}")
        if self.clip_scope not in ("shared", "critic_head", "separate"):
            raise ConfigError(f"unknown clip scope {self.clip_scope!r}")
        if self.privileged_view not in ("original", "reconstructed"):
            raise ConfigError(f"unknown privileged view {self.privileged_view!r}")
        for name in ("epochs", "batch_size", "critic_steps"):
            if int(getattr(self, name)) < (0 if name == "epochs" else 1):
                raise ConfigError(f"{name} out of range")
        if not self.clip_c > 0:
            raise ConfigError("clip_c must be positive")
        for name in ("generator_hidden", "trunk_hidden", "classifier_hidden"):
            value = getattr(self, name)
            if value is not None:
                setattr(self, name, tuple(int(v) for v in value))
        check_mode(self.mode, self.weights)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown training keys: {sorted(unknown)}")
        if "weights" in d:
            d["weights"] = LossWeights.from_dict(d["weights"])
        return cls(**d)

    def to_dict(self):
        out = asdict(self)
        for name in ("generator_hidden", "trunk_hidden", "classifier_hidden"):
            if out[name] is not None:
                out[name] = list(out[name])
        return out

    def validate_for(self, k):
        if k < 2:
            raise ConfigError("at least two groups are required")
        if k > 2 and not self.use_mi:
            raise ConfigError("the MI regularizer is mandatory with more than two groups")
        if self.protection_loss == "acc" and k == 2 and not self.use_mi:
            raise ConfigError("protection_loss='acc' with two groups needs use_mi=True")


def check_mode(mode, weights):
    """Raise ModeConflict when ``weights`` activate terms ``mode`` excludes."""
    zero = {"wgan": ("lambda_rec", "lambda_c", "lambda_d"),
            "gansan": ("lambda_c", "lambda_gan"),
            "gansan_om": ("lambda_c", "lambda_gan")}.get(mode, ())
    active = [name for name in zero if getattr(weights, name) != 0]
    if active:
        raise ModeConflict(f"mode {mode!r} requires {', '.join(active)} = 0")


# -- networks --------------------------------------------------------------
@dataclass
class Discriminator:
    """Shared trunk with a group head (softmax over k) and a critic head."""

    trunk: DenseNet
    group_head: DenseNet
    critic_head: DenseNet
    critic_trunk: DenseNet = None
    standardize: bool = False

    @classmethod
    def build(cls, n_inputs, k, hidden=(64, 64), rng=None, shared=True):
        trunk = DenseNet((n_inputs,) + tuple(hidden), ("relu",) * len(hidden), seed=rng)
        disc = cls(trunk,
                   DenseNet((hidden[-1], k), ("softmax",), seed=rng),
                   DenseNet((hidden[-1], 1), ("linear",), seed=rng))
        if not shared:
            disc.critic_trunk = DenseNet((n_inputs,) + tuple(hidden),
                                         ("relu",) * len(hidden), seed=rng)
        return disc

    def forward(self, x):
        if self.standardize:
            # batch statistics are treated as constants in the backward pass
            self._scale = 1.0 / (x.std(axis=0) + 1e-3)
            x = (x - x.mean(axis=0)) * self._scale
        feats = self.trunk.forward(x)
        cfeats = feats if self.critic_trunk is None else self.critic_trunk.forward(x)
        return self.group_head.forward(feats), self.critic_head.forward(cfeats)

    def backward(self, g_probs, g_scores):
        """Gradients for (trunk, group head, critic head, critic trunk); the
        first buffer's ``input`` field is the gradient w.r.t. the input."""
        g_head = self.group_head.backward(g_probs)
        g_crit = self.critic_head.backward(g_scores)
        if self.critic_trunk is None:
            g_trunk = self.trunk.backward(g_head.input + g_crit.input)
            g_ctrunk = None
        else:
            g_trunk = self.trunk.backward(g_head.input)
            g_ctrunk = self.critic_trunk.backward(g_crit.input)
            g_trunk.input = g_trunk.input + g_ctrunk.input
        if self.standardize:
            g_trunk.input = g_trunk.input * self._scale
        return g_trunk, g_head, g_crit, g_ctrunk

    def copy(self):
        return Discriminator(self.trunk.copy(), self.group_head.copy(), self.critic_head.copy(),
                             None if self.critic_trunk is None else self.critic_trunk.copy(),
                             self.standardize)


@dataclass
class MappingEnsemble:
    generator: DenseNet
    discriminator: Discriminator
    classifier: DenseNet
    config: TrainConfig
    k: int
    history: list = field(default_factory=list)
    epoch: int = 0
    fingerprint: str = ""
    decision_column: int = None

    def map_values(self, values):
        """Generator images of encoded rows, with the original decision
        column put back when the ensemble keeps decisions."""
        values = np.asarray(values, dtype=np.float64)
        out = transform_values(self.generator, values)
        return _restore_decision(out, values, self.decision_column)

    def copy(self):
        return replace(self, generator=self.generator.copy(),
                       discriminator=self.discriminator.copy(),
                       classifier=self.classifier.copy(), history=list(self.history))

    def history_frame(self):
        return pd.DataFrame(self.history)


def _values(x):
    return x.values if isinstance(x, EncodedMatrix) else np.asarray(x, dtype=np.float64)


def _groups(x, groups):
    if groups is not None:
        return np.asarray(groups, dtype=np.intp)
    if isinstance(x, EncodedMatrix):
        return x.groups
    raise ValueError("group indices are required")


def _check_finite(value, what, last_good):
    if not np.isfinite(value):
        raise NonFiniteLoss(f"non-finite {what} loss", last_good=last_good)


# -- classifier pretraining ------------------------------------------------
def pretrain_classifier(train, groups=None, k=None, config=None):
    """Train the frozen group classifier ``C`` on original rows.

    Minimises one minus the mean probability of the true group with Adam,
    holding out 20% of the rows (stratified) for early stopping: training
    ends after ``classifier_patience`` epochs in which neither validation
    accuracy nor validation loss improved by at least 1e-4, and the weights
    with the best validation accuracy are kept.
    """
    config = config or TrainConfig()
    x = _values(train)
    g = _groups(train, groups)
    k = int(k or g.max() + 1)
    if k < 2 or len(np.unique(g)) < 2:
        raise ConfigError("classifier pretraining needs at least two groups")
    rng = substream(config.seed, "classifier")
    hidden = tuple(config.classifier_hidden)
    net = DenseNet((x.shape[1],) + hidden + (k,), ("relu",) * len(hidden) + ("softmax",),
                   seed=rng)
    val_mask = np.zeros(len(g), dtype=bool)
    for grp in np.unique(g):
        rows = rng.permutation(np.flatnonzero(g == grp))
        val_mask[rows[:int(round(0.2 * len(rows)))]] = True
    if not val_mask.any() or val_mask.all():
        val_mask[:] = False
    x_tr, g_tr = x[~val_mask], g[~val_mask]
    x_val, g_val = (x[val_mask], g[val_mask]) if val_mask.any() else (x_tr, g_tr)
    opt = adam(1e-3)
    best, best_acc, best_loss, stale = net.copy(), -1.0, np.inf, 0
    n = len(g_tr)
    bs = min(config.batch_size, n)
    for _ in range(config.classifier_epochs):
        order = rng.permutation(n)
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            probs = net.forward(x_tr[idx])
            value, grad = losses.discriminator_loss(probs, g_tr[idx], k, kind="acc")
            _check_finite(value, "classifier", best)
            step(net, net.backward(grad), opt)
        val_probs = net.forward(x_val, cache=False)
        acc = float((val_probs.argmax(axis=1) == g_val).mean())
        val_loss = losses.discriminator_loss(val_probs, g_val, k, kind="acc")[0]
        if acc >= best_acc + 1e-4:
            best, best_acc, best_loss, stale = net.copy(), acc, val_loss, 0
        elif val_loss <= best_loss - 1e-4:
            # accuracy plateaus while the symmetric start breaks; loss progress counts
            if acc >= best_acc - 1e-4:
                best, best_loss = net.copy(), val_loss
            stale = 0
        else:
            stale += 1
            if stale >= config.classifier_patience:
                break
    return best


# -- losses ----------------------------------------------------------------
def _weights(config):
    w = config.weights
    mi_g = w.lambda_g_mi if config.use_mi else 0.0
    mi_d = w.lambda_d_mi if config.use_mi else 0.0
    return w, mi_g, mi_d


def _reconstructed_view(config):
    # gansan always trains its discriminator on reconstructed privileged rows
    return config.mode == "gansan" or (
        config.privileged_view == "reconstructed" and config.mode != "gansan_om")


def _discriminator_inputs(config, x_priv, out_priv):
    return out_priv if _reconstructed_view(config) else x_priv


def generator_terms(ensemble, x_priv, x_prot, groups_prot, out_priv, out_prot):
    """Generator objective for one batch given the generator outputs.

    Returns ``(total, terms, grad_priv, grad_prot)`` where the gradients are
    taken w.r.t. ``out_priv`` and ``out_prot``.  Terms with a zero weight are
    skipped entirely (their networks are not evaluated).
    """
    cfg = ensemble.config
    w, mi_g, _ = _weights(cfg)
    k = ensemble.k
    g_priv = np.zeros_like(out_priv)
    g_prot = np.zeros_like(out_prot)
    terms = {"rec": 0.0, "l_c": 0.0, "l_gan": 0.0, "l_s": 0.0, "mi_g": 0.0}
    total = 0.0

    if w.lambda_rec:
        if cfg.mode in ("attgan", "gansan"):
            src = np.vstack([x_priv, x_prot])
            out = np.vstack([out_priv, out_prot])
            value, grad = losses.recons_loss(src, out)
            g_priv += w.lambda_rec * grad[:len(x_priv)]
            g_prot += w.lambda_rec * grad[len(x_priv):]
        elif cfg.mode == "gansan_om":
            value, grad = losses.recons_loss(x_prot, out_prot)
            g_prot += w.lambda_rec * grad
        else:
            value, grad = losses.recons_loss(x_priv, out_priv)
            g_priv += w.lambda_rec * grad
        terms["rec"] = value
        total += w.lambda_rec * value

    if w.lambda_c and len(out_prot):
        clf = ensemble.classifier
        probs = clf.forward(out_prot)
        value, grad = losses.classification_term(probs)
        g_prot -= w.lambda_c * clf.backward(grad).input
        terms["l_c"] = value
        total -= w.lambda_c * value

    if w.lambda_gan or w.lambda_d:
        disc = ensemble.discriminator
        side = _discriminator_inputs(cfg, x_priv, out_priv)
        probs, scores = disc.forward(np.vstack([side, out_prot]))
        n_priv = len(side)
        groups = np.concatenate([np.zeros(n_priv, dtype=np.intp), groups_prot])
        g_probs = np.zeros_like(probs)
        g_scores = np.zeros_like(scores)
        if w.lambda_gan and len(out_prot):
            value, grad = losses.gan_term(scores[n_priv:])
            g_scores[n_priv:] += w.lambda_gan * grad
            terms["l_gan"] = value
            total += w.lambda_gan * value
        if w.lambda_d:
            sign = -1.0 if cfg.mode == "attgan" else 1.0
            value, grad = losses.protection_loss(probs, groups, k, cfg.protection_loss)
            terms["l_s"] = value
            protect, g_protect = value, grad
            if mi_g:
                mi, g_mi = losses.mi_soft(probs, groups, k, check=False)
                terms["mi_g"] = mi
                protect += mi_g * mi
                g_protect = g_protect + mi_g * g_mi
            g_probs += sign * w.lambda_d * g_protect
            total += sign * w.lambda_d * protect
        g_in = disc.backward(g_probs, g_scores)[0].input
        if _reconstructed_view(cfg):
            g_priv += g_in[:n_priv]
        g_prot += g_in[n_priv:]
    return float(total), terms, g_priv, g_prot


def generator_loss(ensemble, x_priv, x_prot, groups_prot):
    """Scalar generator objective on one batch (forward only)."""
    batch = np.vstack([x_priv, x_prot])
    out = _restore_decision(ensemble.generator.forward(batch, cache=False), batch,
                            ensemble.decision_column)
    n = len(x_priv)
    return generator_terms(ensemble, x_priv, x_prot, groups_prot, out[:n], out[n:])[0]


def discriminator_terms(ensemble, side_priv, out_prot, groups_prot):
    """Loss of the shared (D, D_std) update on one batch and its gradients.

    ``L_D - lambda_d_mi * MI - lambda_dstd_gan * L_Dstd``; the critic part is
    only included when the generator consumes the critic (lambda_gan > 0).
    """
    cfg = ensemble.config
    w, _, mi_d = _weights(cfg)
    k = ensemble.k
    disc = ensemble.discriminator
    x = np.vstack([side_priv, out_prot])
    n_priv = len(side_priv)
    groups = np.concatenate([np.zeros(n_priv, dtype=np.intp), groups_prot])
    probs, scores = disc.forward(x)
    terms = {}
    value, g_probs = losses.discriminator_loss(probs, groups, k, cfg.protection_loss)
    terms["l_d"] = value
    total = value
    if mi_d:
        mi, g_mi = losses.mi_soft(probs, groups, k, check=False)
        terms["mi_d"] = mi
        total -= mi_d * mi
        g_probs = g_probs - mi_d * g_mi
    g_scores = np.zeros_like(scores)
    terms["l_dstd"] = 0.0
    if w.lambda_gan and w.lambda_dstd_gan:
        dist, g_dist = losses.critic_distance(scores, np.arange(len(x)) < n_priv)
        terms["l_dstd"] = dist
        total -= w.lambda_dstd_gan * dist
        g_scores = -w.lambda_dstd_gan * g_dist
    return float(total), terms, disc.backward(g_probs, g_scores)


# -- training --------------------------------------------------------------
class _Optimizers:
    def __init__(self, cfg):
        trunk_lr = cfg.lr_critic if cfg.clip_scope == "shared" else cfg.lr_discriminator
        self.generator = adam(cfg.lr_generator)
        self.trunk = adam(trunk_lr)
        self.critic_trunk = adam(cfg.lr_critic)
        self.group_head = adam(cfg.lr_discriminator)
        self.critic_head = adam(cfg.lr_critic)


def _stratified_batches(groups, batch_size, rng):
    """One epoch of batches, each holding the dataset's group proportions."""
    n = len(groups)
    n_batches = max(1, int(np.ceil(n / batch_size)))
    chunks = [np.array_split(rng.permutation(np.flatnonzero(groups == g)), n_batches)
              for g in np.unique(groups)]
    return [np.concatenate([c[b] for c in chunks]) for b in range(n_batches)]


def _random_batch(by_group, sizes, rng):
    return np.concatenate([rng.choice(rows, size=s, replace=False)
                           for rows, s in zip(by_group, sizes)])


def _split(x, g, idx):
    rows, grp = x[idx], g[idx]
    priv = grp == 0
    return rows[priv], rows[~priv], grp[~priv]


def build_ensemble(n_columns, k, config, classifier):
    rng = substream(config.seed, "init")
    hidden = config.generator_hidden or (2 * n_columns, 2 * n_columns)
    gen = DenseNet((n_columns,) + tuple(hidden) + (n_columns,),
                   ("relu",) * len(hidden) + ("sigmoid",), seed=rng)
    disc = Discriminator.build(n_columns, k, config.trunk_hidden, rng=rng,
                               shared=config.clip_scope != "separate")
    disc.standardize = config.standardize_discriminator
    return MappingEnsemble(gen, disc, classifier, config, k)


def train(data, config=None, groups=None, classifier=None, k=None, callback=None):
    """Alternating optimisation of the mapping.

    Each generator step is preceded by ``critic_steps`` updates of the shared
    discriminator on independent stratified batches, after which weights are
    clipped (trunk and critic head with ``clip_scope='shared'``).  The
    history holds per-epoch means of every loss term.
    """
    config = config or TrainConfig()
    check_mode(config.mode, config.weights)
    matrix = data if isinstance(data, EncodedMatrix) else None
    x = _values(data)
    g = _groups(data, groups)
    k = int(k or g.max() + 1)
    config.validate_for(k)
    if classifier is None:
        classifier = pretrain_classifier(x, g, k, config)
    ens = build_ensemble(x.shape[1], k, config, classifier)
    if matrix is not None and matrix.encoder is not None:
        ens.fingerprint = matrix_fingerprint(matrix)
        if config.keep_decision:
            ens.decision_column = matrix.decision_column
    dcol = ens.decision_column
    opts = _Optimizers(config)
    rng_batch = substream(config.seed, "batching")
    by_group = [np.flatnonzero(g == grp) for grp in range(k)]
    if any(len(rows) == 0 for rows in by_group):
        raise ConfigError("every group needs training rows")
    props = np.array([len(r) for r in by_group]) / len(g)
    sizes = np.minimum(np.maximum(1, np.round(props * config.batch_size).astype(int)),
                       [len(r) for r in by_group])
    disc = ens.discriminator
    gen = ens.generator
    last_good = ens.copy()

    for epoch in range(config.epochs):
        sums, count = {}, 0
        for idx in _stratified_batches(g, config.batch_size, rng_batch):
            for _ in range(config.critic_steps):
                cidx = _random_batch(by_group, sizes, rng_batch)
                x_priv, x_prot, g_prot = _split(x, g, cidx)
                out = gen.forward(np.vstack([x_priv, x_prot]), cache=False)
                out = _restore_decision(out, np.vstack([x_priv, x_prot]), dcol)
                side = _discriminator_inputs(config, x_priv, out[:len(x_priv)])
                d_total, d_terms, (gt, gh, gc, gct) = discriminator_terms(
                    ens, side, out[len(x_priv):], g_prot)
                _check_finite(d_total, "discriminator", last_good)
                step(disc.trunk, gt, opts.trunk)
                step(disc.group_head, gh, opts.group_head)
                step(disc.critic_head, gc, opts.critic_head)
                clip_weights(disc.critic_head, config.clip_c)
                if gct is not None:
                    step(disc.critic_trunk, gct, opts.critic_trunk)
                    clip_weights(disc.critic_trunk, config.clip_c)
                if config.clip_scope == "shared":
                    clip_weights(disc.trunk, config.clip_c)
            x_priv, x_prot, g_prot = _split(x, g, idx)
            n_priv = len(x_priv)
            batch = np.vstack([x_priv, x_prot])
            out = _restore_decision(gen.forward(batch), batch, dcol)
            g_total, g_terms, gp, gq = generator_terms(
                ens, x_priv, x_prot, g_prot, out[:n_priv], out[n_priv:])
            _check_finite(g_total, "generator", last_good)
            grad_out = np.vstack([gp, gq])
            if dcol is not None:
                grad_out[:, dcol] = 0.0  # the decision output is discarded
            step(gen, gen.backward(grad_out), opts.generator)
            record = {"d_loss": d_total, "g_loss": g_total, **d_terms, **g_terms}
            for key, value in record.items():
                sums[key] = sums.get(key, 0.0) + value
            count += 1
        ens.epoch = epoch + 1
        ens.history.append({"epoch": epoch + 1, **{k_: v / count for k_, v in sums.items()}})
        last_good = ens.copy()
        if callback is not None:
            callback(ens)
    return ens


def _restore_decision(out, values, column):
    if column is not None:
        out[:, column] = values[:, column]
    return out


def transform_values(generator, values):
    values = np.asarray(values, dtype=np.float64)
    if values.shape[0] == 0:
        return np.empty((0, generator.n_outputs))
    return generator.forward(values, cache=False)


def transform(ensemble, records, encoder=None, restore_decision=None):
    """Pass every row through the generator, whatever its group.

    An EncodedMatrix comes back as an EncodedMatrix.  Its decision column
    holds the original decisions when ``restore_decision`` is true, which
    is the default for ensembles trained with ``keep_decision``.  A Dataset
    is encoded with ``encoder``, mapped and decoded, always keeping the
    original decision values.
    """
    gen = ensemble.generator if isinstance(ensemble, MappingEnsemble) else ensemble
    if isinstance(records, Dataset):
        if encoder is None:
            raise EncoderMismatch("an encoder is needed to map a Dataset")
        matrix = encoder.transform(records)
        mapped = transform(gen, matrix, restore_decision=True)
        return encoder.inverse_transform(mapped)
    if isinstance(records, EncodedMatrix):
        if records.values.shape[1] != gen.n_inputs:
            raise EncoderMismatch(
                f"matrix has {records.values.shape[1]} columns, generator expects {gen.n_inputs}")
        out = transform_values(gen, records.values)
        if restore_decision is None:
            restore_decision = getattr(ensemble, "decision_column", None) is not None
        if restore_decision and records.encoder is not None:
            col = records.decision_column
            out[:, col] = records.values[:, col]
        return records.with_values(out)
    values = np.asarray(records, dtype=np.float64)
    if values.ndim != 2 or values.shape[1] != gen.n_inputs:
        raise EncoderMismatch(f"expected {gen.n_inputs} columns, got shape {values.shape}")
    if isinstance(ensemble, MappingEnsemble):
        return ensemble.map_values(values)
    return transform_values(gen, values)


# -- persistence -----------------------------------------------------------
def matrix_fingerprint(matrix):
    return fingerprint(matrix.values, matrix.groups)


_NETS = ("generator", "trunk", "group_head", "critic_head", "classifier")


def _net_map(ens):
    d = ens.discriminator
    nets = {"generator": ens.generator, "trunk": d.trunk, "group_head": d.group_head,
            "critic_head": d.critic_head, "classifier": ens.classifier}
    if d.critic_trunk is not None:
        nets["critic_trunk"] = d.critic_trunk
    return nets


def save_ensemble(ensemble, directory):
    """Write every network checkpoint plus ``manifest.json`` and ``history.csv``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    nets = _net_map(ensemble)
    for name, net in nets.items():
        net.save(directory / name)
    manifest = {
        "format": "fairmap.ensemble",
        "version": MANIFEST_VERSION,
        "mode": ensemble.config.mode,
        "weights": ensemble.config.weights.to_dict(),
        "seed": ensemble.config.seed,
        "epoch": ensemble.epoch,
        "k": ensemble.k,
        "dataset_fingerprint": ensemble.fingerprint,
        "decision_column": ensemble.decision_column,
        "config": ensemble.config.to_dict(),
        "networks": {name: f"{name}.json" for name in nets},
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2))
    ensemble.history_frame().to_csv(directory / "history.csv", index=False)
    return directory


def load_ensemble(directory):
    directory = Path(directory)
    path = directory / "manifest.json"
    if not path.exists():
        raise FileNotFoundError(f"no ensemble manifest in {directory}")
    manifest = json.loads(path.read_text())
    if manifest.get("format") != "fairmap.ensemble":
        raise ValueError(f"{path}: not an ensemble manifest")
    nets = {name: DenseNet.load(directory / name) for name in manifest["networks"]}
    missing = set(_NETS) - set(nets)
    if missing:
        raise ValueError(f"{path}: networks missing from manifest: {sorted(missing)}")
    config = TrainConfig.from_dict(manifest["config"])
    history = []
    hist_path = directory / "history.csv"
    if hist_path.exists() and hist_path.stat().st_size > 1:
        history = pd.read_csv(hist_path).to_dict("records")
    disc = Discriminator(nets["trunk"], nets["group_head"], nets["critic_head"],
                         critic_trunk=nets.get("critic_trunk"),
                         standardize=config.standardize_discriminator)
    return MappingEnsemble(nets["generator"], disc, nets["classifier"], config,
                           manifest["k"], history, manifest["epoch"],
                           manifest.get("dataset_fingerprint", ""),
                           manifest.get("decision_column"))


# -- estimator -------------------------------------------------------------
class FairMapping(TransformerMixin, BaseEstimator):
    """Scikit-learn style wrapper around :func:`train` / :func:`transform`.

    ``fit`` accepts a Dataset (encoded internally) or an EncodedMatrix;
    ``transform`` returns the same kind it receives.
    """

    def __init__(self, mode="fairmapping", lambda_rec=1.0, lambda_c=1.0, lambda_gan=1.0,
                 lambda_d=1.0, lambda_d_mi=1.0, lambda_g_mi=1.0, lambda_dstd_gan=1.0,
                 epochs=100, batch_size=128, critic_steps=5, clip_c=0.01,
                 protection_loss="ber", use_mi=True, clip_scope="shared",
                 privileged_view="original", keep_decision=True, generator_hidden=None,
                 lr_generator=1e-3, lr_discriminator=1e-3, lr_critic=5e-5, seed=0,
                 classifier=None):
        self.mode = mode
        self.lambda_rec = lambda_rec
        self.lambda_c = lambda_c
        self.lambda_gan = lambda_gan
        self.lambda_d = lambda_d
        self.lambda_d_mi = lambda_d_mi
        self.lambda_g_mi = lambda_g_mi
        self.lambda_dstd_gan = lambda_dstd_gan
        self.epochs = epochs
        self.batch_size = batch_size
        self.critic_steps = critic_steps
        self.clip_c = clip_c
        self.protection_loss = protection_loss
        self.use_mi = use_mi
        self.clip_scope = clip_scope
        self.privileged_view = privileged_view
        self.keep_decision = keep_decision
        self.generator_hidden = generator_hidden
        self.lr_generator = lr_generator
        self.lr_discriminator = lr_discriminator
        self.lr_critic = lr_critic
        self.seed = seed
        self.classifier = classifier

    def train_config(self):
        weights = LossWeights(**{f.name: getattr(self, f.name) for f in fields(LossWeights)})
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size,
                           critic_steps=self.critic_steps, clip_c=self.clip_c, seed=self.seed,
                           protection_loss=self.protection_loss, use_mi=self.use_mi,
                           mode=self.mode, weights=weights, clip_scope=self.clip_scope,
                           privileged_view=self.privileged_view,
                           keep_decision=self.keep_decision,
                           generator_hidden=self.generator_hidden,
                           lr_generator=self.lr_generator,
                           lr_discriminator=self.lr_discriminator, lr_critic=self.lr_critic)

    def fit(self, X, y=None):
        if isinstance(X, Dataset):
            self.encoder_ = TabularEncoder().fit(X)
            X = self.encoder_.transform(X)
        elif isinstance(X, EncodedMatrix):
            self.encoder_ = X.encoder
        else:
            raise TypeError("fit expects a Dataset or an EncodedMatrix")
        self.ensemble_ = train(X, self.train_config(), classifier=self.classifier)
        self.n_features_in_ = X.values.shape[1]
        return self

    def transform(self, X):
        if not hasattr(self, "ensemble_"):
            from sklearn.exceptions import NotFittedError
            raise NotFittedError("FairMapping is not fitted")
        if isinstance(X, Dataset):
            return transform(self.ensemble_, X, encoder=self.encoder_)
        return transform(self.ensemble_, X)
