"""Monte Carlo predictive distributions from batch-norm and dropout noise.

MCBN: every stochastic pass draws a mini-batch from the training inputs,
normalizes each BN unit with that batch's statistics and evaluates all
query rows.  The query rows never enter the batch statistics, so each
query's distribution is independent of which other rows are evaluated.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass

import numpy as np

from . import metrics
from .errors import ContractError, DomainError, EdgeSolutionWarning
from .mathcore import grid_then_refine, rng_stream
from .network import (BatchStats, MCDropout, StochasticBN, compute_batch_stats, forward)

CU_LOG10_RANGE = (-12.0, 6.0)
CU_GRID_POINTS = 181


@dataclass(frozen=True)
class InferenceConfig:
    passes: int = 500
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.passes < 1:
            raise DomainError("need at least one stochastic pass")
        if self.batch_size < 2:
            raise DomainError("batch size must be at least 2")


@dataclass
class PredictiveDistribution:
    """Per-query predictive moments; arrays of length ``n``, samples ``(n, T)``."""

    mean: np.ndarray
    variance: np.ndarray
    samples: np.ndarray
    tau: float
    spread: np.ndarray = None  # biased sample variance of the passes

    def __len__(self):
        return self.mean.shape[0]

    @property
    def std(self):
        return np.sqrt(self.variance)

    def to_csv(self, include_samples=False, ids=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        t = self.samples.shape[1]
        head = ["query_id", "mean", "variance"]
        if include_samples:
            head += [f"s{j}" for j in range(t)]
        w.writerow(head)
        ids = range(len(self)) if ids is None else ids
        for i, q in enumerate(ids):
            row = [q, repr(float(self.mean[i])), repr(float(self.variance[i]))]
            if include_samples:
                row += [repr(float(s)) for s in self.samples[i]]
            w.writerow(row)
        return buf.getvalue()


def predictive_moments(samples, tau):
    """Mean and ``1/tau + biased sample variance`` of the stochastic passes."""
    if not tau > 0:
        raise DomainError("tau must be positive")
    s = np.atleast_2d(np.asarray(samples, dtype=float))
    mean = s.mean(axis=1)
    spread = np.square(s - mean[:, None]).mean(axis=1)
    # identical passes: report the exact common value and zero spread
    same = np.all(s == s[:, :1], axis=1)
    mean = np.where(same, s[:, 0], mean)
    spread = np.where(same, 0.0, spread)
    return PredictiveDistribution(mean, spread + 1.0 / tau, s, float(tau), spread)


def draw_batch(n, m, rng):
    """Sorted row indices of a uniform size-``m`` subset of ``range(n)``."""
    return np.sort(rng.choice(n, size=m, replace=False))


def mcbn_samples(net, X, train_X, passes, batch_size, rng, source="data", moments=None):
    """``(n, passes)`` outputs, one column per sampled set of batch statistics.

    ``source="gaussian"`` is experimental: batch statistics are drawn from
    their CLT approximation (see :mod:`mcbn.analysis`) instead of from
    actual training batches.
    """
    train_X = np.asarray(train_X, dtype=float)
    n_train = train_X.shape[0]
    if passes < 1:
        raise DomainError("need at least one stochastic pass")
    if batch_size > n_train:
        raise DomainError(f"batch size {batch_size} exceeds {n_train} training rows")
    if batch_size < 2:
        raise DomainError("batch size must be at least 2")
    if source == "gaussian" and moments is None:
        from .analysis import unit_moment_summaries
        moments = unit_moment_summaries(net, train_X)
    X = np.asarray(X, dtype=float)
    out = np.empty((X.shape[0] if X.ndim == 2 else 1, passes))
    for t in range(passes):
        if source == "data":
            stats = compute_batch_stats(net, train_X[draw_batch(n_train, batch_size, rng)])
        elif source == "gaussian":
            stats = sample_gaussian_stats(moments, batch_size, rng)
        else:
            raise DomainError(f"unknown batch-statistics source {source!r}")
        out[:, t] = forward(net, X, StochasticBN(stats))[0][:, 0]
    return out


def sample_gaussian_stats(moments, batch_size, rng):
    means, variances = [], []
    for s in moments:
        mu_b = rng.normal(s.mean, s.std / np.sqrt(batch_size))
        sd_var = np.where(s.std > 0, (s.fourth - s.std ** 4) / np.maximum(4 * s.std ** 2 * batch_size, 1e-300), 0.0)
        sigma_b = np.maximum(rng.normal(s.std, np.sqrt(np.maximum(sd_var, 0.0))), 0.0)
        means.append(mu_b)
        variances.append(sigma_b ** 2)
    return BatchStats(tuple(means), tuple(variances))


def mcbn_predict(net, X, train_X, cfg, tau, rng=None, source="data"):
    rng = rng_stream(cfg.seed, 0) if rng is None else rng
    s = mcbn_samples(net, X, train_X, cfg.passes, cfg.batch_size, rng, source)
    return predictive_moments(s, tau)


def mcdo_samples(net, X, passes, rng):
    if not net.has_dropout:
        raise ContractError("MC dropout needs a network with dropout layers")
    if passes < 1:
        raise DomainError("need at least one stochastic pass")
    X = np.asarray(X, dtype=float)
    out = np.empty((X.shape[0] if X.ndim == 2 else 1, passes))
    mode = MCDropout(rng)
    for t in range(passes):
        out[:, t] = forward(net, X, mode)[0][:, 0]
    return out


def mcdo_predict(net, X, cfg, tau, rng=None):
    rng = rng_stream(cfg.seed, 0) if rng is None else rng
    return predictive_moments(mcdo_samples(net, X, cfg.passes, rng), tau)


def stochastic_samples(model, net, X, train_X, passes, batch_size, rng):
    """Dispatch on model kind: batch-norm noise or dropout noise."""
    if model in ("mcbn", "cubn"):
        return mcbn_samples(net, X, train_X, passes, batch_size, rng)
    if model in ("mcdo", "cudo"):
        return mcdo_samples(net, X, passes, rng)
    raise DomainError(f"unknown model kind {model!r}")


def constant_objective(means, targets):
    means = np.asarray(means, dtype=float)
    targets = np.asarray(targets, dtype=float)
    return lambda log_v: float(np.mean(metrics.crps_gaussian(means, 10.0 ** log_v, targets)))


def fit_constant_uncertainty(means, targets):
    """Single variance minimizing mean Gaussian CRPS over validation predictions."""
    means = np.ravel(np.asarray(means, dtype=float))
    if means.size == 0:
        raise DomainError("no validation predictions")
    f = constant_objective(means, np.ravel(targets))
    log_v, _, at_edge = grid_then_refine(f, *CU_LOG10_RANGE, n=CU_GRID_POINTS)
    if at_edge:
        warnings.warn(f"constant variance on the search edge (log10 v = {log_v:g})", EdgeSolutionWarning)
    return 10.0 ** log_v


def cu_predict(means, v, tau):
    """Constant-uncertainty predictions: the given means, variance ``v`` everywhere."""
    if v < 0:
        raise DomainError("variance must be non-negative")
    means = np.ravel(np.asarray(means, dtype=float))
    return PredictiveDistribution(means.copy(), np.full(means.shape, float(v)), means[:, None].copy(),
                                  float(tau), np.zeros(means.shape))
