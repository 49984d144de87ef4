"""Numeric substrate: Gaussians, log-sum-exp, 1-D search, quadrature, KS test.

Matrices are plain ``float64`` numpy arrays throughout the package.  Random
streams are numpy ``Generator`` objects seeded from ``(seed, stream_id)`` so
that independent jobs can draw from non-overlapping streams.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy import integrate, optimize, special

from .errors import DomainError, NumericError

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Gaussian:
    mean: float
    variance: float

    def __post_init__(self):
        if not self.variance > 0:
            raise DomainError(f"Gaussian variance must be positive, got {self.variance!r}")

    @property
    def std(self):
        return math.sqrt(self.variance)


def rng_stream(seed, stream_id=0):
    """Return a reproducible generator for the stream ``(seed, stream_id)``.

    Identical arguments always yield identical draw sequences; distinct
    stream ids give statistically independent sequences.
    """
    if seed < 0 or stream_id < 0:
        raise DomainError("seed and stream_id must be non-negative")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(stream_id)])))


def _check_var(variance):
    variance = np.asarray(variance, dtype=float)
    if np.any(~(variance > 0)):
        raise DomainError("variance must be strictly positive")
    return variance


def gauss_pdf(x, g):
    var = _check_var(g.variance)
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * (x - g.mean) ** 2 / var) / np.sqrt(2.0 * np.pi * var)
    return out[()] if out.ndim == 0 else out


def gauss_cdf(x, g):
    """Gaussian CDF via ``scipy.special.ndtr`` (double-precision erf)."""
    var = _check_var(g.variance)
    out = special.ndtr((np.asarray(x, dtype=float) - g.mean) / np.sqrt(var))
    return out[()] if np.ndim(out) == 0 else out


def std_normal_pdf(z):
    return np.exp(-0.5 * np.square(z)) / math.sqrt(2.0 * math.pi)


def log_sum_exp(v, axis=None):
    """``log(sum(exp(v)))`` with max-shift, optionally along ``axis``."""
    v = np.asarray(v, dtype=float)
    if v.size == 0 or (axis is not None and v.shape[axis] == 0):
        raise DomainError("log_sum_exp of an empty vector")
    vmax = np.max(v, axis=axis, keepdims=True)
    vmax = np.where(np.isfinite(vmax), vmax, 0.0)
    out = np.log(np.sum(np.exp(v - vmax), axis=axis, keepdims=True)) + vmax
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def quadrature(f, lo, hi, tol=1e-10, limit=200):
    """Adaptive Gauss-Kronrod integral of ``f`` over ``[lo, hi]``."""
    if not lo < hi:
        raise DomainError(f"invalid integration interval ({lo}, {hi})")
    res = integrate.quad(f, lo, hi, epsabs=tol, epsrel=0.0, limit=limit, full_output=1)
    value, err = res[0], res[1]
    if len(res) > 3 or not math.isfinite(value):
        raise NumericError(f"quadrature did not converge on ({lo}, {hi}): est. error {err:g}")
    return value


def minimize_scalar(f, bracket, tol=1e-8):
    """Bounded scalar minimization; returns ``(argmin, min)``.

    ``f`` should be unimodal on ``bracket``; this is not checked.
    """
    lo, hi = bracket
    if not lo < hi:
        raise DomainError(f"invalid bracket ({lo}, {hi})")
    res = optimize.minimize_scalar(f, bounds=(lo, hi), method="bounded",
                                   options={"xatol": tol, "maxiter": 500})
    x, fx = float(res.x), float(res.fun)
    # Brent never evaluates the endpoints themselves
    for edge in (lo, hi):
        fe = float(f(edge))
        if fe < fx:
            x, fx = edge, fe
    return x, fx


def grid_then_refine(f, lo, hi, n=101, tol=1e-10):
    """Scan ``f`` on ``n`` equispaced points, then refine around the best one.

    Returns ``(x, f(x), at_edge)``; ``at_edge`` is true when the grid
    minimum lies on an end point of ``[lo, hi]``.
    """
    grid = np.linspace(lo, hi, n)
    vals = np.array([f(x) for x in grid])
    i = int(np.argmin(vals))
    at_edge = i in (0, n - 1)
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, n - 1)]
    x, fx = minimize_scalar(f, (a, b), tol=tol)
    if vals[i] <= fx:
        x, fx = float(grid[i]), float(vals[i])
    return x, fx, at_edge


def ks_test(samples, cdf):
    """One-sample Kolmogorov-Smirnov test against a continuous ``cdf``.

    The p-value uses the asymptotic Kolmogorov distribution
    ``Q(t) = 2 sum (-1)^(k-1) exp(-2 k^2 t^2)`` at ``t = sqrt(n) D``.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n < 8:
        raise DomainError(f"ks_test needs at least 8 samples, got {n}")
    F = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    d = max(np.max(i / n - F), np.max(F - (i - 1) / n))
    return float(d), float(special.kolmogorov(math.sqrt(n) * d))
