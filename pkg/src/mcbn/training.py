"""Mini-batch Adam training, k-fold grid search and noise-precision fitting."""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import metrics
from .errors import DimensionError, DomainError, EdgeSolutionWarning, NumericError, TrainingError
from .mathcore import grid_then_refine, rng_stream
from .network import Train, backward, compute_population_stats, forward, predict

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

FULL_WEIGHT_DECAYS = tuple(10.0 ** -k for k in range(1, 16))
FULL_BATCH_SIZES = tuple(2 ** k for k in range(5, 11))
FULL_DROPOUT_RATES = (0.2, 0.1, 0.05, 0.01, 0.005, 0.001)
DESK_WEIGHT_DECAYS = (1e-2, 1e-4, 1e-6, 1e-8)
DESK_BATCH_SIZES = (32, 128)
DESK_DROPOUT_RATES = (0.1, 0.01)

TAU_LOG10_RANGE = (-4.0, 6.0)
TAU_GRID_POINTS = 101


@dataclass(frozen=True)
class TrainConfig:
    weight_decay: float = 0.0
    batch_size: int = 32
    max_epochs: int = 2000
    learning_rate: float = 1e-3
    eval_every: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 2:
            raise DomainError("batch size must be at least 2")
        if not self.learning_rate > 0:
            raise DomainError("learning rate must be positive")
        if self.weight_decay < 0:
            raise DomainError("weight decay must be non-negative")


@dataclass(frozen=True)
class HyperGrid:
    weight_decays: tuple
    batch_sizes: tuple = (32,)
    dropout_rates: tuple = (0.0,)

    def __post_init__(self):
        if not (self.weight_decays and self.batch_sizes and self.dropout_rates):
            raise DomainError("hyperparameter grid lists must be non-empty")

    def points(self):
        """Grid points in a fixed order (weight decay outermost)."""
        return [{"weight_decay": float(wd), "batch_size": int(m), "dropout": float(p)}
                for wd in self.weight_decays for m in self.batch_sizes for p in self.dropout_rates]

    @classmethod
    def preset(cls, name, model="mcbn", max_batch=None):
        if name not in ("desk", "full"):
            raise DomainError(f"unknown grid preset {name!r}")
        full = name == "full"
        wds = FULL_WEIGHT_DECAYS if full else DESK_WEIGHT_DECAYS
        if model in ("mcdo", "cudo"):
            rates = FULL_DROPOUT_RATES if full else DESK_DROPOUT_RATES
            return cls(wds, (32,), rates)
        sizes = FULL_BATCH_SIZES if full else DESK_BATCH_SIZES
        if max_batch is not None:
            capped = tuple(m for m in sizes if m <= max_batch)
            sizes = capped or (min(sizes[0], max_batch),)
        return cls(wds, sizes, (0.0,))


@dataclass(frozen=True)
class TauEstimate:
    tau: float
    at_edge: bool = False


@dataclass
class History:
    epochs: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    val_rmse: list = field(default_factory=list)
    best_epoch: int = 0

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_rmse"])
        for e, l, r in zip(self.epochs, self.train_loss, self.val_rmse):
            w.writerow([e, repr(float(l)), repr(float(r))])
        return buf.getvalue()


def sse_loss(Y_hat, Y):
    """Mean squared error and its gradient w.r.t. ``Y_hat``."""
    Y_hat = np.asarray(Y_hat, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y_hat.shape != Y.shape:
        raise DimensionError(f"prediction shape {Y_hat.shape} != target shape {Y.shape}")
    diff = Y_hat - Y
    m = diff.shape[0]
    return float(np.sum(diff * diff) / m), (2.0 / m) * diff


class AdamState:
    def __init__(self, params):
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0


def adam_step(params, grads, state, lr, weight_decay=0.0, decay_mask=None):
    """One in-place Adam update; ``2 * weight_decay * p`` is added where ``decay_mask``."""
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient")
    if decay_mask is None:
        decay_mask = [False] * len(params)
    state.t += 1
    c1 = 1.0 - ADAM_BETA1 ** state.t
    c2 = 1.0 - ADAM_BETA2 ** state.t
    for p, g, m, v, decay in zip(params, grads, state.m, state.v, decay_mask):
        if decay and weight_decay:
            g = g + (2.0 * weight_decay) * p
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)


def rmse_on(net, X, y):
    return metrics.rmse(predict(net, X), y)


def train(net, data, cfg, val=None):
    """Train ``net`` on ``data = (X, y)``.

    Every ``cfg.eval_every`` epochs the population statistics are refreshed
    and the validation RMSE recorded.  With validation data the snapshot
    at the best recorded epoch is returned, otherwise the final network.
    """
    X, y = (np.asarray(a, dtype=float) for a in data)
    y = y.reshape(-1, 1)
    n = X.shape[0]
    net = net.copy()
    history = History()
    if cfg.max_epochs == 0:
        return net, history

    shuffle_rng = rng_stream(cfg.seed, 0)
    mode = Train(rng_stream(cfg.seed, 1) if net.has_dropout else None)
    named = net.parameters()
    params = [p for _, p in named]
    decay_mask = [name.endswith(".W") for name, _ in named]
    state = AdamState(params)
    m = min(cfg.batch_size, n)
    best, best_rmse = None, math.inf

    for epoch in range(1, cfg.max_epochs + 1):
        perm = shuffle_rng.permutation(n)
        total, count = 0.0, 0
        for start in range(0, n, m):
            idx = perm[start:start + m]
            if idx.size < 2:
                continue
            out, cache = forward(net, X[idx], mode)
            loss, dY = sse_loss(out, y[idx])
            if not math.isfinite(loss):
                raise TrainingError(f"loss diverged at epoch {epoch}", epoch)
            grads = backward(net, cache, dY)
            try:
                adam_step(params, grads, state, cfg.learning_rate, cfg.weight_decay, decay_mask)
            except NumericError as exc:
                raise TrainingError(f"{exc} at epoch {epoch}", epoch) from exc
            net.touch()
            total += loss * idx.size
            count += idx.size
        if epoch % cfg.eval_every == 0 or epoch == cfg.max_epochs:
            compute_population_stats(net, X)
            history.epochs.append(epoch)
            history.train_loss.append(total / max(count, 1))
            if val is not None:
                r = rmse_on(net, val[0], val[1])
                if not math.isfinite(r):
                    raise TrainingError(f"validation RMSE diverged at epoch {epoch}", epoch)
                history.val_rmse.append(r)
                if r < best_rmse:
                    best_rmse, best = r, net.copy()
                    history.best_epoch = epoch
            else:
                history.val_rmse.append(math.nan)
    if val is None or best is None:
        history.best_epoch = cfg.max_epochs
        compute_population_stats(net, X)
        return net, history
    return best, history


def kfold_indices(n, k, rng):
    """Random partition of ``range(n)`` into ``k`` validation folds."""
    if k < 2:
        raise DomainError("need at least 2 folds")
    return [np.sort(f) for f in np.array_split(rng.permutation(n), k)]


@dataclass
class CVResult:
    best: dict
    best_epoch: int
    best_rmse: float
    epochs: list
    mean_rmse: list  # one list of per-epoch mean RMSE per grid point (inf if diverged)
    points: list


def cv_fold_data(X, y, folds, k):
    val = folds[k]
    tr = np.sort(np.concatenate([f for j, f in enumerate(folds) if j != k]))
    return (X[tr], y[tr]), (X[val], y[val])


def grid_search_cv(points, X, y, folds, make_net, base_cfg):
    """Choose the grid point and epoch with the lowest mean validation RMSE.

    ``make_net(point, seed)`` builds a fresh network for one job.  Ties go
    to the earlier grid point, then the earlier epoch.
    """
    if not points:
        raise DomainError("empty hyperparameter grid")
    if len(folds) < 2:
        raise DomainError("need at least 2 folds")
    epochs = list(range(base_cfg.eval_every, base_cfg.max_epochs + 1, base_cfg.eval_every))
    if not epochs or epochs[-1] != base_cfg.max_epochs:
        epochs.append(base_cfg.max_epochs)
    table = []
    for gi, point in enumerate(points):
        cfg = replace(base_cfg, weight_decay=point["weight_decay"], batch_size=point["batch_size"])
        curves = []
        for k in range(len(folds)):
            tr, va = cv_fold_data(X, y, folds, k)
            net = make_net(point, base_cfg.seed)
            try:
                _, hist = train(net, tr, replace(cfg, seed=base_cfg.seed + 1000 * gi + k), va)
            except TrainingError:
                curves = None
                break
            curves.append(hist.val_rmse)
        if curves is None:
            table.append([math.inf] * len(epochs))
        else:
            table.append(list(np.mean(np.array(curves), axis=0)))
    best_g, best_e, best_r = 0, 0, math.inf
    for gi, row in enumerate(table):
        for ei, r in enumerate(row):
            if r < best_r:
                best_g, best_e, best_r = gi, ei, r
    if not math.isfinite(best_r):
        raise TrainingError("every grid point diverged")
    return CVResult(points[best_g], epochs[best_e], best_r, epochs, table, list(points))


def tau_objective(sample_sets, targets):
    """Mean Gaussian CRPS as a function of ``log10(tau)``."""
    means = np.concatenate([np.mean(s, axis=1) for s in sample_sets])
    spread = np.concatenate([np.var(s, axis=1) for s in sample_sets])
    y = np.concatenate([np.ravel(t) for t in targets])
    if means.size == 0:
        raise DomainError("no predictions to fit tau on")

    def objective(log_tau):
        return float(np.mean(metrics.crps_gaussian(means, spread + 10.0 ** -log_tau, y)))

    return objective


def optimize_tau(sample_sets, targets):
    """Noise precision minimizing mean CRPS of the MC predictive distributions.

    ``sample_sets`` holds one ``(n_i, T)`` array of stochastic outputs per
    validation fold, ``targets`` the matching ``(n_i,)`` targets.
    """
    if len(sample_sets) == 0:
        raise DomainError("no predictions to fit tau on")
    f = tau_objective(sample_sets, targets)
    log_tau, _, at_edge = grid_then_refine(f, *TAU_LOG10_RANGE, n=TAU_GRID_POINTS)
    if at_edge:
        warnings.warn(f"tau optimum on the search edge (log10 tau = {log_tau:g})", EdgeSolutionWarning)
    return TauEstimate(10.0 ** log_tau, at_edge)
