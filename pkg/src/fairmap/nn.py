"""Small dense networks with hand-written reverse-mode gradients.

Every model in the mapping procedure (generator, classifier, discriminator
trunk and heads) is a :class:`DenseNet`.  Networks are plain numpy: a forward
pass caches the activations it needs, :meth:`DenseNet.backward` turns an
output gradient into parameter gradients plus the gradient with respect to
the input, so networks can be chained by hand.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import NoCachedForward, ShapeMismatch

ACTIVATIONS = ("relu", "sigmoid", "tanh", "linear", "softmax")
CHECKPOINT_VERSION = 1


def _activate(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "sigmoid":
        # split form avoids overflow in exp for large |z|
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    if kind == "tanh":
        return np.tanh(z)
    if kind == "linear":
        return z
    if kind == "softmax":
        shifted = z - z.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)
    raise ValueError(f"unknown activation {kind!r}")


def _activation_backward(grad, z, a, kind):
    if kind == "relu":
        return grad * (z > 0)
    if kind == "sigmoid":
        return grad * a * (1.0 - a)
    if kind == "tanh":
        return grad * (1.0 - a * a)
    if kind == "linear":
        return grad
    if kind == "softmax":
        return a * (grad - (grad * a).sum(axis=1, keepdims=True))
    raise ValueError(f"unknown activation {kind!r}")


@dataclass
class GradientBuffer:
    """Per-parameter gradients (``params``, ordered W0, b0, W1, b1, ...) and
    the gradient with respect to the network input."""

    params: list
    input: np.ndarray = None

    def flat(self):
        return np.concatenate([g.ravel() for g in self.params])

    def zero(self):
        for g in self.params:
            g[...] = 0.0
        return self

    def __iadd__(self, other):
        for g, o in zip(self.params, other.params):
            g += o
        return self

    def scaled(self, c):
        return GradientBuffer([g * c for g in self.params],
                              None if self.input is None else self.input * c)


class DenseNet:
    """Feed-forward network of affine layers, each followed by an activation.

    Parameters
    ----------
    sizes : sequence of int
        Layer widths including input and output, e.g. ``(3, 64, 64, 2)``.
    activations : sequence of str
        One activation per affine layer (``len(sizes) - 1`` entries).
        ``softmax`` is only allowed on the last layer.
    seed : int or numpy Generator
        Initialisation is uniform in ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``.
    """

    def __init__(self, sizes, activations, seed=0):
        sizes = tuple(int(s) for s in sizes)
        activations = tuple(activations)
        if len(sizes) < 2 or len(activations) != len(sizes) - 1:
            raise ValueError("need one activation per layer")
        for i, act in enumerate(activations):
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")
            if act == "softmax" and i != len(activations) - 1:
                raise ValueError("softmax is only allowed as the terminal activation")
        self.sizes = sizes
        self.activations = activations
        self.seed = seed if isinstance(seed, (int, np.integer)) else None
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(rng.uniform(-bound, bound, size=fan_out))
        self._cache = None

    @classmethod
    def from_arrays(cls, weights, biases, activations):
        weights = [np.array(w, dtype=np.float64) for w in weights]
        biases = [np.array(b, dtype=np.float64).ravel() for b in biases]
        sizes = [weights[0].shape[0]] + [w.shape[1] for w in weights]
        for w, b, n_in, n_out in zip(weights, biases, sizes[:-1], sizes[1:]):
            if w.shape != (n_in, n_out) or b.shape != (n_out,):
                raise ShapeMismatch("consecutive layer dimensions do not chain")
        net = cls(sizes, activations, seed=0)
        net.weights = weights
        net.biases = biases
        return net

    @classmethod
    def identity(cls, width, hidden=(), activation="relu"):
        """Network computing ``x -> x`` exactly on non-negative inputs.

        Hidden layers copy the input into their first ``width`` units (relu
        is the identity on ``[0, inf)``), remaining units are zero.
        """
        sizes = (width,) + tuple(hidden) + (width,)
        acts = tuple([activation] * len(hidden)) + ("linear",)
        weights, biases = [], []
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            if n_in < width or n_out < width:
                raise ValueError("hidden layers must be at least as wide as the input")
            w = np.zeros((n_in, n_out))
            w[np.arange(width), np.arange(width)] = 1.0
            weights.append(w)
            biases.append(np.zeros(n_out))
        return cls.from_arrays(weights, biases, acts)

    # -- parameters --------------------------------------------------------
    @property
    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    @property
    def param_count(self):
        return int(sum(p.size for p in self.params))

    @property
    def n_inputs(self):
        return self.sizes[0]

    @property
    def n_outputs(self):
        return self.sizes[-1]

    def get_flat(self):
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.param_count:
            raise ShapeMismatch(f"expected {self.param_count} parameters, got {flat.size}")
        pos = 0
        for p in self.params:
            p[...] = flat[pos:pos + p.size].reshape(p.shape)
            pos += p.size
        self._cache = None

    def zero_grad(self):
        return GradientBuffer([np.zeros_like(p) for p in self.params])

    def copy(self):
        other = DenseNet.from_arrays([w.copy() for w in self.weights],
                                     [b.copy() for b in self.biases], self.activations)
        other.seed = self.seed
        return other

    # -- evaluation --------------------------------------------------------
    def forward(self, batch, cache=True):
        x = np.asarray(batch, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.sizes[0]:
            raise ShapeMismatch(
                f"batch has shape {x.shape}, network expects {self.sizes[0]} columns")
        inputs, pre, post = [], [], []
        for w, b, act in zip(self.weights, self.biases, self.activations):
            z = x @ w + b
            a = _activate(z, act)
            if cache:
                inputs.append(x)
                pre.append(z)
                post.append(a)
            x = a
        self._cache = (inputs, pre, post) if cache else None
        return x

    __call__ = forward

    def backward(self, grad_output):
        """Back-propagate ``dL/d(output)`` through the last cached forward.

        Returns a :class:`GradientBuffer` whose ``input`` field is ``dL/d(batch)``.
        """
        if self._cache is None:
            raise NoCachedForward("backward called without a cached forward pass")
        inputs, pre, post = self._cache
        grad = np.asarray(grad_output, dtype=np.float64)
        if grad.shape != post[-1].shape:
            raise ShapeMismatch(
                f"output gradient shape {grad.shape} != output shape {post[-1].shape}")
        grads = [None] * (2 * len(self.weights))
        for i in range(len(self.weights) - 1, -1, -1):
            dz = _activation_backward(grad, pre[i], post[i], self.activations[i])
            grads[2 * i] = inputs[i].T @ dz
            grads[2 * i + 1] = dz.sum(axis=0)
            grad = dz @ self.weights[i].T
        return GradientBuffer(grads, grad)

    # -- persistence -------------------------------------------------------
    def header(self):
        return {
            "format": "fairmap.densenet",
            "version": CHECKPOINT_VERSION,
            "sizes": list(self.sizes),
            "activations": list(self.activations),
            "seed": self.seed,
            "param_count": self.param_count,
            "dtype": "<f8",
        }

    def save(self, path):
        """Write ``<path>.json`` (header) and ``<path>.bin`` (little-endian float64)."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.with_suffix(".json").write_text(json.dumps(self.header(), indent=2))
        self.get_flat().astype("<f8").tofile(path.with_suffix(".bin"))
        return path

    @classmethod
    def load(cls, path):
        path = Path(path)
        header = json.loads(path.with_suffix(".json").read_text())
        if header.get("format") != "fairmap.densenet":
            raise ValueError(f"{path}: not a dense network checkpoint")
        flat = np.fromfile(path.with_suffix(".bin"), dtype="<f8")
        net = cls(header["sizes"], header["activations"], seed=0)
        net.set_flat(flat.astype(np.float64))
        net.seed = header.get("seed")
        return net


# -- optimisers ------------------------------------------------------------
@dataclass
class OptimizerState:
    kind: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.kind!r}")
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be positive")


def adam(learning_rate=1e-3):
    return OptimizerState("adam", learning_rate)


def sgd(learning_rate=1e-2):
    return OptimizerState("sgd", learning_rate)


def step(net, grads, opt):
    """Apply one in-place update to ``net`` and advance ``opt``.

    ``grads`` is a GradientBuffer (or list of arrays) aligned with ``net.params``.
    """
    params = net.params
    g_list = grads.params if isinstance(grads, GradientBuffer) else list(grads)
    if len(g_list) != len(params):
        raise ShapeMismatch("gradient buffer does not match the network")
    opt.step_count += 1
    if opt.kind == "sgd":
        for p, g in zip(params, g_list):
            p -= opt.learning_rate * g
    else:
        if not opt.m:
            opt.m = [np.zeros_like(p) for p in params]
            opt.v = [np.zeros_like(p) for p in params]
        t = opt.step_count
        corr1 = 1.0 - opt.beta1 ** t
        corr2 = 1.0 - opt.beta2 ** t
        for p, g, m, v in zip(params, g_list, opt.m, opt.v):
            m *= opt.beta1
            m += (1.0 - opt.beta1) * g
            v *= opt.beta2
            v += (1.0 - opt.beta2) * g * g
            p -= opt.learning_rate * (m / corr1) / (np.sqrt(v / corr2) + opt.eps)
    net._cache = None
    return net, opt


def clip_weights(net, c):
    """Clamp every weight and bias of ``net`` into ``[-c, c]`` in place."""
    if not c > 0:
        raise ValueError("clip value must be positive")
    for p in net.params:
        np.clip(p, -c, c, out=p)
    return net


# -- gradient verification -------------------------------------------------
@dataclass
class GradCheckReport:
    max_rel_error: float
    max_abs_error: float
    n_params: int
    tol: float

    @property
    def passed(self):
        return self.max_rel_error <= self.tol


def grad_check(net, loss, batch, tol=1e-4, step_size=1e-4, floor=1e-7):
    """Compare analytic gradients with central finite differences.

    ``loss(output) -> (value, dvalue/doutput)`` is any scalar objective of the
    network output; it may close over other (frozen) networks.  Relative error
    per parameter is ``|a - n| / max(|a| + |n|, floor)``.
    """
    out = net.forward(batch)
    _, g_out = loss(out)
    analytic = net.backward(g_out).flat()
    theta = net.get_flat()
    numeric = np.empty_like(theta)
    for i in range(theta.size):
        orig = theta[i]
        theta[i] = orig + step_size
        net.set_flat(theta)
        plus = loss(net.forward(batch, cache=False))[0]
        theta[i] = orig - step_size
        net.set_flat(theta)
        minus = loss(net.forward(batch, cache=False))[0]
        theta[i] = orig
        numeric[i] = (plus - minus) / (2.0 * step_size)
    net.set_flat(theta)
    abs_err = np.abs(analytic - numeric)
    rel = abs_err / np.maximum(np.abs(analytic) + np.abs(numeric), floor)
    return GradCheckReport(float(rel.max()), float(abs_err.max()), theta.size, tol)
