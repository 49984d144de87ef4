"""Checks of the Bayesian interpretation of batch normalization.

* CLT approximations for the batch mean and batch standard deviation of a
  BN unit's input, and Monte Carlo collection of real batch statistics to
  compare against them.
* KL divergence between factorized Gaussians.
* The Gaussian prior on BN statistics implied by weight decay.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError
from .mathcore import Gaussian, gauss_cdf, ks_test, quadrature
from .network import Train, forward
from .inference import draw_batch


@dataclass(frozen=True)
class UnitMomentSummary:
    """Population moments of every unit's input in one BN layer."""

    mean: np.ndarray
    std: np.ndarray
    fourth: np.ndarray  # fourth central moment

    def __post_init__(self):
        if np.any(self.std < 0):
            raise DomainError("standard deviations must be non-negative")


@dataclass(frozen=True)
class PriorParams:
    mu_mu_p: float
    sigma_mu_p: float
    mu_sigma_p: float
    sigma_sigma_p: float
    improper: bool = False


def unit_moment_summaries(net, D):
    """One :class:`UnitMomentSummary` per BN layer over the data ``D``.

    Each layer's inputs are computed with all earlier layers normalized by
    their statistics over ``D`` (i.e. the population statistics).
    """
    _, cache = forward(net, np.asarray(D, dtype=float), Train())
    out = []
    for h in cache.bn_inputs:
        mu = h.mean(axis=0)
        c = h - mu
        out.append(UnitMomentSummary(mu, np.sqrt(np.mean(c * c, axis=0)), np.mean(c ** 4, axis=0)))
    return out


def predicted_mean_dist(mean, std, batch_size):
    """CLT law of the batch mean: ``N(mean, std**2 / M)``; returns ``(mean, var)``."""
    if batch_size < 2:
        raise DomainError("batch size must be at least 2")
    std = np.asarray(std, dtype=float)
    if np.any(std == 0):
        warnings.warn("zero population std: degenerate batch-mean distribution")
    return np.asarray(mean, dtype=float), std ** 2 / batch_size


def predicted_std_dist(std, fourth, batch_size):
    """CLT law of the batch std: ``N(std, (E4 - std**4) / (4 std**2 M))``; returns ``(mean, var)``."""
    std = np.asarray(std, dtype=float)
    fourth = np.asarray(fourth, dtype=float)
    if np.any(std <= 0):
        raise DomainError("batch-std distribution needs a positive population std")
    if np.any(fourth < std ** 4 * (1 - 1e-12)):
        raise DomainError("fourth central moment below std**4")
    return std, (fourth - std ** 4) / (4.0 * std ** 2 * batch_size)


def collect_bn_stat_samples(net, train_X, batch_size, draws, rng):
    """Batch means and stds of every BN unit over ``draws`` random batches.

    Returns ``(mu_samples, sigma_samples)``: per BN layer an array of shape
    ``(draws, units)``.
    """
    train_X = np.asarray(train_X, dtype=float)
    n = train_X.shape[0]
    if draws < 100:
        raise DomainError("need at least 100 draws")
    if batch_size > n:
        raise DomainError(f"batch size {batch_size} exceeds {n} rows")
    n_layers = len(net.bn_layers)
    mus = [[] for _ in range(n_layers)]
    sigmas = [[] for _ in range(n_layers)]
    for _ in range(draws):
        _, cache = forward(net, train_X[draw_batch(n, batch_size, rng)], Train())
        for k in range(n_layers):
            mus[k].append(cache.stats.mean[k])
            sigmas[k].append(np.sqrt(cache.stats.var[k]))
    return [np.array(m) for m in mus], [np.array(s) for s in sigmas]


@dataclass
class UnitKS:
    layer: int
    unit: int
    d_mu: float
    p_mu: float
    d_sigma: float
    p_sigma: float
    d_sigma_shape: float
    p_sigma_shape: float


def normality_table(net, train_X, batch_size, draws, rng, layers=None):
    """KS tests of sampled batch statistics against their CLT laws.

    ``p_mu`` / ``p_sigma`` test against the predicted Gaussians.
    ``p_sigma_shape`` standardizes the sampled stds by their own mean and
    std first, testing only the Gaussian shape.
    """
    summaries = unit_moment_summaries(net, train_X)
    mus, sigmas = collect_bn_stat_samples(net, train_X, batch_size, draws, rng)
    rows = []
    layers = range(len(summaries)) if layers is None else layers
    for k in layers:
        s = summaries[k]
        m_mean, m_var = predicted_mean_dist(s.mean, s.std, batch_size)
        s_mean, s_var = predicted_std_dist(s.std, s.fourth, batch_size)
        for u in range(s.mean.size):
            d_mu, p_mu = ks_test(mus[k][:, u], lambda x: gauss_cdf(x, Gaussian(m_mean[u], m_var[u])))
            d_sd, p_sd = ks_test(sigmas[k][:, u], lambda x: gauss_cdf(x, Gaussian(s_mean[u], s_var[u])))
            z = sigmas[k][:, u]
            z = (z - z.mean()) / z.std()
            d_sh, p_sh = ks_test(z, lambda x: gauss_cdf(x, Gaussian(0.0, 1.0)))
            rows.append(UnitKS(k, u, d_mu, p_mu, d_sd, p_sd, d_sh, p_sh))
    return rows


def kl_gaussian(q, p):
    """``KL(q || p)`` for univariate Gaussians."""
    sq, sp = math.sqrt(q.variance), math.sqrt(p.variance)
    return math.log(sp / sq) + (q.variance + (q.mean - p.mean) ** 2) / (2.0 * p.variance) - 0.5


def kl_factorized(q_list, p_list):
    if len(q_list) != len(p_list):
        raise DimensionError("factor lists differ in length")
    return math.fsum(kl_gaussian(q, p) for q, p in zip(q_list, p_list))


def kl_quadrature(q, p, width=12.0, tol=1e-11):
    """Numerical ``int q log(q / p)`` over ``q.mean +- width * q.std``."""
    def integrand(x):
        lq = -0.5 * (math.log(2 * math.pi * q.variance) + (x - q.mean) ** 2 / q.variance)
        lp = -0.5 * (math.log(2 * math.pi * p.variance) + (x - p.mean) ** 2 / p.variance)
        return math.exp(lq) * (lq - lp)
    sd = math.sqrt(q.variance)
    return quadrature(integrand, q.mean - width * sd, q.mean + width * sd, tol=tol)


def prior_params(n, tau, weight_decay):
    """Prior on BN statistics implied by weight decay ``lambda``.

    Wide prior on batch means, ``N(0, 1 / (2 N tau lambda))`` on batch stds.
    ``lambda = 0`` gives an improper prior, reported as ``inf``.
    """
    if n < 1 or not tau > 0 or weight_decay < 0:
        raise DomainError("need N >= 1, tau > 0, lambda >= 0")
    if weight_decay == 0:
        warnings.warn("zero weight decay: improper prior on batch std")
        return PriorParams(0.0, math.inf, 0.0, math.inf, improper=True)
    return PriorParams(0.0, math.inf, 0.0, 1.0 / (2.0 * n * tau * weight_decay))
