"""Feed-forward regression network with batch normalization and dropout.

Layers act on row-major mini-batches ``(n, width)``.  Batch normalization
sits between each hidden dense layer and its activation; dropout (for MC
dropout models) acts on the input of every dense layer.

Four forward modes exist:

* :class:`Train` - BN normalizes with the statistics of the batch itself
  and gradients flow through those statistics.
* :class:`StochasticBN` - BN normalizes with externally supplied batch
  statistics (one MCBN sample of the stochastic parameters).
* :class:`Deterministic` - BN uses the population statistics.
* :class:`MCDropout` - fresh dropout masks, BN (if any) on population stats.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError, DomainError, NumericError

FORMAT_NAME = "mcbn-network"
FORMAT_VERSION = 1
DEFAULT_EPS = 1e-5


class Dense:
    kind = "dense"
    param_names = ("W", "b")

    def __init__(self, W, b):
        self.W = np.asarray(W, dtype=float)
        self.b = np.asarray(b, dtype=float)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise DimensionError(f"dense layer W {self.W.shape} / b {self.b.shape} mismatch")

    @property
    def n_in(self):
        return self.W.shape[1]

    @property
    def n_out(self):
        return self.W.shape[0]


class BatchNorm:
    kind = "batchnorm"

    def __init__(self, gamma, beta, pop_mean=None, pop_var=None, eps=DEFAULT_EPS, affine=True):
        self.gamma = np.asarray(gamma, dtype=float)
        self.beta = np.asarray(beta, dtype=float)
        n = self.gamma.shape[0]
        self.pop_mean = np.zeros(n) if pop_mean is None else np.asarray(pop_mean, dtype=float)
        self.pop_var = np.ones(n) if pop_var is None else np.asarray(pop_var, dtype=float)
        if not (self.beta.shape == self.pop_mean.shape == self.pop_var.shape == (n,)):
            raise DimensionError("batch-norm vectors must share one length")
        if eps < 0 or np.any(self.pop_var < 0):
            raise DomainError("eps and population variances must be non-negative")
        self.eps = float(eps)
        self.affine = bool(affine)

    @property
    def param_names(self):
        return ("gamma", "beta") if self.affine else ()

    @property
    def n_units(self):
        return self.gamma.shape[0]


class Dropout:
    kind = "dropout"
    param_names = ()

    def __init__(self, rate):
        if not 0.0 <= rate < 1.0:
            raise DomainError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = float(rate)


class Activation:
    kind = "activation"
    param_names = ()

    def __init__(self, name="relu"):
        if name not in ("relu", "identity"):
            raise DomainError(f"unknown activation {name!r}")
        self.name = name


@dataclass(frozen=True)
class BatchStats:
    """Per-BN-layer mini-batch means and (biased) variances.

    Variances are stored rather than standard deviations so that the
    population statistics and a full-dataset batch coincide bit for bit.
    """

    mean: tuple
    var: tuple

    @property
    def sigma(self):
        return tuple(np.sqrt(v) for v in self.var)


@dataclass(frozen=True)
class Train:
    """Batch statistics from the batch itself; dropout masks if ``rng`` is given."""
    rng: object = None


@dataclass(frozen=True)
class StochasticBN:
    stats: BatchStats


@dataclass(frozen=True)
class Deterministic:
    pass


@dataclass(frozen=True)
class MCDropout:
    rng: object


class Network:
    """Ordered layer stack plus an architecture descriptor."""

    def __init__(self, layers, architecture=None):
        self.layers = list(layers)
        self.architecture = dict(architecture or {})
        self.generation = 0
        dense = [l for l in self.layers if isinstance(l, Dense)]
        if not dense:
            raise DimensionError("a network needs at least one dense layer")
        width = dense[0].n_in
        for layer in self.layers:
            if isinstance(layer, Dense):
                if layer.n_in != width:
                    raise DimensionError(f"dense layer expects {layer.n_in} inputs, gets {width}")
                width = layer.n_out
            elif isinstance(layer, BatchNorm) and layer.n_units != width:
                raise DimensionError(f"batch-norm has {layer.n_units} units, input width {width}")

    @property
    def n_in(self):
        return next(l for l in self.layers if isinstance(l, Dense)).n_in

    @property
    def n_out(self):
        return [l for l in self.layers if isinstance(l, Dense)][-1].n_out

    @property
    def bn_layers(self):
        return [l for l in self.layers if isinstance(l, BatchNorm)]

    @property
    def has_dropout(self):
        return any(isinstance(l, Dropout) for l in self.layers)

    def parameters(self):
        """Learnable arrays ``[(name, array), ...]`` in layer order."""
        out = []
        for i, layer in enumerate(self.layers):
            for name in layer.param_names:
                out.append((f"{i}.{name}", getattr(layer, name)))
        return out

    def touch(self):
        """Mark parameters as modified; invalidates outstanding caches."""
        self.generation += 1

    def copy(self):
        return copy.deepcopy(self)


def build_network(n_in, hidden=(50, 50), norm="batchnorm", dropout=0.0, rng=None,
                  eps=DEFAULT_EPS, affine=True, activation="relu"):
    """Build a regression MLP with He-normal weights and a single output."""
    if rng is None:
        rng = np.random.default_rng(0)
    layers = []
    widths = [n_in, *hidden]
    for k in range(len(hidden)):
        if dropout > 0:
            layers.append(Dropout(dropout))
        fan_in, fan_out = widths[k], widths[k + 1]
        layers.append(Dense(rng.normal(0.0, np.sqrt(2.0 / fan_in), (fan_out, fan_in)), np.zeros(fan_out)))
        if norm == "batchnorm":
            layers.append(BatchNorm(np.ones(fan_out), np.zeros(fan_out), eps=eps, affine=affine))
        layers.append(Activation(activation))
    if dropout > 0:
        layers.append(Dropout(dropout))
    fan_in = widths[-1]
    layers.append(Dense(rng.normal(0.0, np.sqrt(2.0 / fan_in), (1, fan_in)), np.zeros(1)))
    arch = {"n_in": int(n_in), "hidden": [int(h) for h in hidden], "norm": norm,
            "dropout": float(dropout), "eps": float(eps), "affine": bool(affine),
            "activation": activation}
    return Network(layers, arch)


def bn_transform(h, mu, sigma, gamma, beta, eps):
    """``gamma * (h - mu) / sqrt(sigma**2 + eps) + beta`` elementwise."""
    arrs = [np.asarray(a, dtype=float) for a in (h, mu, sigma, gamma, beta)]
    try:
        np.broadcast_shapes(*(a.shape for a in arrs))
    except ValueError:
        raise DimensionError("bn_transform vectors must share one length") from None
    h, mu, sigma, gamma, beta = arrs
    if np.any(sigma < 0):
        raise DomainError("sigma must be non-negative")
    return gamma * (h - mu) / np.sqrt(sigma ** 2 + eps) + beta


def batch_moments(h):
    """Column mean and biased (divide-by-M) variance."""
    mean = h.mean(axis=0)
    # constant columns: the rounded mean need not equal the common value
    same = np.all(h == h[:1], axis=0)
    mean = np.where(same, h[0], mean)
    var = np.square(h - mean).mean(axis=0)
    return mean, var


@dataclass
class Cache:
    net: Network
    generation: int
    mode: object
    records: list = field(default_factory=list)
    stats: BatchStats = None
    bn_inputs: list = field(default_factory=list)


def forward(net, X, mode=Deterministic()):
    """Run ``X`` through ``net``; returns ``(Y, cache)``."""
    h = np.asarray(X, dtype=float)
    if h.ndim == 1:
        h = h.reshape(-1, net.n_in)
    if h.ndim != 2 or h.shape[1] != net.n_in:
        raise DimensionError(f"input has shape {np.shape(X)}, network expects {net.n_in} features")
    if isinstance(mode, StochasticBN) and len(mode.stats.mean) != len(net.bn_layers):
        raise DimensionError("batch statistics do not match the network's BN layers")
    train = isinstance(mode, Train)
    if train and net.bn_layers and h.shape[0] < 2:
        raise DomainError("train-mode batch normalization needs at least 2 rows")
    drop_rng = mode.rng if isinstance(mode, (Train, MCDropout)) else None

    records = []
    bn_inputs = []
    means, variances = [], []
    bn_i = 0
    for layer in net.layers:
        if isinstance(layer, Dense):
            records.append(h)
            h = h @ layer.W.T + layer.b
        elif isinstance(layer, BatchNorm):
            bn_inputs.append(h)
            if train:
                mean, var = batch_moments(h)
                means.append(mean)
                variances.append(var)
            elif isinstance(mode, StochasticBN):
                mean, var = mode.stats.mean[bn_i], mode.stats.var[bn_i]
            else:
                mean, var = layer.pop_mean, layer.pop_var
            bn_i += 1
            denom = np.sqrt(var + layer.eps)
            if np.any(denom == 0):
                raise NumericError("zero batch-norm variance with eps = 0")
            inv = 1.0 / denom
            xhat = (h - mean) * inv
            records.append((xhat, inv))
            h = layer.gamma * xhat + layer.beta if layer.affine else xhat
        elif isinstance(layer, Dropout):
            if drop_rng is not None and layer.rate > 0:
                mask = (drop_rng.random(h.shape) >= layer.rate) / (1.0 - layer.rate)
                h = h * mask
            else:
                mask = None
            records.append(mask)
        else:
            if layer.name == "relu":
                mask = h > 0
                h = np.where(mask, h, 0.0)
            else:
                mask = None
            records.append(mask)
    stats = BatchStats(tuple(means), tuple(variances)) if train else None
    return h, Cache(net, net.generation, mode, records, stats, bn_inputs)


def backward(net, cache, dY):
    """Gradients of a scalar loss w.r.t. every learnable array.

    Returns a list aligned with ``net.parameters()``.
    """
    if cache.net is not net or cache.generation != net.generation:
        raise ContractError("stale cache: network changed since the forward pass")
    train = isinstance(cache.mode, Train)
    g = np.asarray(dY, dtype=float)
    grads = {}
    for i in range(len(net.layers) - 1, -1, -1):
        layer, rec = net.layers[i], cache.records[i]
        if isinstance(layer, Dense):
            grads[f"{i}.W"] = g.T @ rec
            grads[f"{i}.b"] = g.sum(axis=0)
            if i > 0:
                g = g @ layer.W
        elif isinstance(layer, BatchNorm):
            xhat, inv = rec
            if layer.affine:
                grads[f"{i}.gamma"] = np.sum(g * xhat, axis=0)
                grads[f"{i}.beta"] = g.sum(axis=0)
                g = g * layer.gamma
            if train:
                m = g.shape[0]
                g = (inv / m) * (m * g - g.sum(axis=0) - xhat * np.sum(g * xhat, axis=0))
            else:
                g = g * inv
        elif rec is not None:
            g = g * rec
    return [grads[name] for name, _ in net.parameters()]


def compute_batch_stats(net, B):
    """Per-unit batch mean and biased variance of every BN layer on ``B``."""
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] < 2:
        raise DomainError("batch statistics need a batch of at least 2 rows")
    _, cache = forward(net, B, Train())
    return cache.stats


def compute_population_stats(net, D):
    """Set every BN layer's population statistics from one full pass over ``D``."""
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] == 0:
        raise DomainError("population statistics need a non-empty data matrix")
    if not net.bn_layers:
        return net
    if D.shape[0] == 1:
        D = np.vstack([D, D])
    stats = compute_batch_stats(net, D)
    for layer, mean, var in zip(net.bn_layers, stats.mean, stats.var):
        layer.pop_mean = mean
        layer.pop_var = var
    net.touch()
    return net


def predict(net, X):
    """Deterministic forward pass, flattened to one value per row."""
    return forward(net, X)[0][:, 0]


# -- serialization -----------------------------------------------------------

def _hex(a):
    return [float(x).hex() for x in np.ravel(a)]


def _unhex(values, shape):
    return np.array([float.fromhex(v) for v in values], dtype=float).reshape(shape)


def network_to_dict(net):
    layers = []
    for layer in net.layers:
        if isinstance(layer, Dense):
            layers.append({"kind": "dense", "shape": list(layer.W.shape),
                           "W": _hex(layer.W), "b": _hex(layer.b)})
        elif isinstance(layer, BatchNorm):
            layers.append({"kind": "batchnorm", "units": layer.n_units, "eps": float(layer.eps).hex(),
                           "affine": layer.affine, "gamma": _hex(layer.gamma), "beta": _hex(layer.beta),
                           "pop_mean": _hex(layer.pop_mean), "pop_var": _hex(layer.pop_var)})
        elif isinstance(layer, Dropout):
            layers.append({"kind": "dropout", "rate": float(layer.rate).hex()})
        else:
            layers.append({"kind": "activation", "name": layer.name})
    return {"format": FORMAT_NAME, "version": FORMAT_VERSION,
            "architecture": net.architecture, "layers": layers}


def network_from_dict(doc):
    if doc.get("format") != FORMAT_NAME or doc.get("version") != FORMAT_VERSION:
        raise ContractError(f"unsupported network document {doc.get('format')!r} v{doc.get('version')!r}")
    layers = []
    for d in doc["layers"]:
        kind = d["kind"]
        if kind == "dense":
            shape = tuple(d["shape"])
            layers.append(Dense(_unhex(d["W"], shape), _unhex(d["b"], (shape[0],))))
        elif kind == "batchnorm":
            n = d["units"]
            layers.append(BatchNorm(_unhex(d["gamma"], (n,)), _unhex(d["beta"], (n,)),
                                    _unhex(d["pop_mean"], (n,)), _unhex(d["pop_var"], (n,)),
                                    eps=float.fromhex(d["eps"]), affine=d["affine"]))
        elif kind == "dropout":
            layers.append(Dropout(float.fromhex(d["rate"])))
        elif kind == "activation":
            layers.append(Activation(d["name"]))
        else:
            raise ContractError(f"unknown layer kind {kind!r}")
    return Network(layers, doc.get("architecture"))


def save_network(net, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(network_to_dict(net), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_network(path):
    with open(path, encoding="utf-8") as fh:
        return network_from_dict(json.load(fh))
