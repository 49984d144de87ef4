"""Proper scoring rules and their normalization between fixed bounds.

All functions accept scalars or equal-shaped arrays.  Lower CRPS and
higher PLL are better.  The normalized scores place a model between a
constant-variance baseline (0) and the per-observation optimal variance
(100).
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special, stats

from .errors import DimensionError, DomainError
from .mathcore import LOG_2PI, log_sum_exp, minimize_scalar, std_normal_pdf

VARIANCE_FLOOR = 1e-12
CRPS_LOG10_BRACKET = (-12.0, 6.0)
_INV_SQRT_PI = 1.0 / math.sqrt(math.pi)


def _positive(var, name="variance"):
    var = np.asarray(var, dtype=float)
    if np.any(~(var > 0)):
        raise DomainError(f"{name} must be strictly positive")
    return var


def _out(a):
    a = np.asarray(a)
    return float(a) if a.ndim == 0 else a


def crps_gaussian(mean, var, y):
    """Closed-form CRPS of ``N(mean, var)`` at observation ``y``."""
    sigma = np.sqrt(_positive(var))
    z = (np.asarray(y, dtype=float) - mean) / sigma
    val = sigma * (z * (2.0 * special.ndtr(z) - 1.0) + 2.0 * std_normal_pdf(z) - _INV_SQRT_PI)
    return _out(np.maximum(val, 0.0))


def pll_gaussian(mean, var, y):
    var = _positive(var)
    return _out(-0.5 * (LOG_2PI + np.log(var) + (np.asarray(y, dtype=float) - mean) ** 2 / var))


def pll_mc(samples, y, tau):
    """Log of the average of ``N(y; f_j, 1/tau)`` over the samples ``f_j``.

    ``samples`` has shape ``(T,)`` or ``(n, T)`` with ``y`` of shape ``(n,)``.
    """
    if not tau > 0:
        raise DomainError("tau must be positive")
    s = np.asarray(samples, dtype=float)
    if s.shape[-1] < 1:
        raise DomainError("need at least one sample")
    y = np.asarray(y, dtype=float)
    r = -0.5 * tau * (y[..., None] - s) ** 2
    t = s.shape[-1]
    return _out(log_sum_exp(r, axis=-1) - math.log(t) - 0.5 * LOG_2PI + 0.5 * math.log(tau))


def optimal_variance_pll(mean, y):
    """Variance maximizing the Gaussian log density at ``y``: the squared residual.

    Exact hits are floored at ``VARIANCE_FLOOR``; see :func:`degenerate`.
    """
    r2 = (np.asarray(y, dtype=float) - mean) ** 2
    return _out(np.maximum(r2, VARIANCE_FLOOR))


@lru_cache(maxsize=1)
def crps_optimal_ratio():
    """``argmin_v CRPS(N(0, v), 1)``; the CRPS-optimal variance is this times r**2."""
    f = lambda lv: crps_gaussian(0.0, 10.0 ** lv, 1.0)
    # the optimum sits at v = 1/ln 2 ~ 1.4427, far from the bracket ends
    lv, _ = minimize_scalar(f, (-2.0, 2.0), tol=1e-12)
    return 10.0 ** lv


def optimal_variance_crps(mean, y):
    """Variance minimizing Gaussian CRPS at ``y`` for the given mean.

    By scale equivariance the answer is ``c * (y - mean)**2`` for a
    universal constant ``c``.  Exact hits fall back to the lower end of the
    search bracket.
    """
    r2 = (np.asarray(y, dtype=float) - mean) ** 2
    v = crps_optimal_ratio() * r2
    return _out(np.maximum(v, 10.0 ** CRPS_LOG10_BRACKET[0]))


def degenerate(mean, y):
    """Observations where the optimal variance is undefined (``y == mean``)."""
    return np.asarray(y, dtype=float) == np.asarray(mean, dtype=float)


def rmse(preds, targets):
    p = np.ravel(np.asarray(preds, dtype=float))
    t = np.ravel(np.asarray(targets, dtype=float))
    if p.shape != t.shape:
        raise DimensionError("predictions and targets differ in length")
    if p.size == 0:
        raise DomainError("rmse of empty vectors")
    return float(np.sqrt(np.mean((p - t) ** 2)))


def one_sample_t_test(values, mu0=0.0):
    """One-sided one-sample t-test of ``mean(values) > mu0``; returns ``(t, p)``."""
    x = np.asarray(values, dtype=float)
    n = x.size
    if n < 2:
        raise DomainError("t-test needs at least 2 values")
    s = np.std(x, ddof=1)
    if s == 0:
        raise DomainError("t-test undefined for zero sample variance")
    t = (np.mean(x) - mu0) / (s / math.sqrt(n))
    return float(t), float(stats.t.sf(t, n - 1))


@dataclass
class ScoreRecord:
    """Per-observation scores of one predictive model on one test set."""

    crps: np.ndarray
    pll: np.ndarray
    variance: np.ndarray = None
    flagged: np.ndarray = None

    def __post_init__(self):
        self.crps = np.asarray(self.crps, dtype=float)
        self.pll = np.asarray(self.pll, dtype=float)
        if self.crps.shape != self.pll.shape:
            raise DimensionError("crps and pll must align")
        if np.any(self.crps < 0):
            raise DomainError("negative CRPS")

    @property
    def n_flagged(self):
        return 0 if self.flagged is None else int(np.sum(self.flagged))


def score_gaussian(means, variances, y):
    """Scores for Gaussian predictions (constant-uncertainty baselines)."""
    variances = np.broadcast_to(np.asarray(variances, dtype=float), np.shape(means))
    return ScoreRecord(crps_gaussian(means, variances, y), pll_gaussian(means, variances, y),
                       variance=np.array(variances))


def score_samples(samples, variances, y, tau):
    """Scores for MC predictions: Gaussian CRPS, sample-mixture PLL."""
    means = np.mean(samples, axis=-1)
    return ScoreRecord(np.atleast_1d(crps_gaussian(means, variances, y)),
                       np.atleast_1d(pll_mc(samples, y, tau)),
                       variance=np.asarray(variances, dtype=float))


def score_bounds(means, y):
    """Per-observation best attainable CRPS and PLL at the given means."""
    v_crps = optimal_variance_crps(means, y)
    v_pll = optimal_variance_pll(means, y)
    return ScoreRecord(np.atleast_1d(crps_gaussian(means, v_crps, y)),
                       np.atleast_1d(pll_gaussian(means, v_pll, y)),
                       variance=np.atleast_1d(v_crps), flagged=np.atleast_1d(degenerate(means, y)))


def _normalize(model, base, bound, name):
    gap = bound - base
    if gap == 0 or not math.isfinite(gap):
        warnings.warn(f"{name}: bound equals baseline, normalized score undefined")
        return math.nan
    return float((model - base) / gap * 100.0)


def normalized_scores(model, baseline, bound, per_observation=False):
    """``(crps_bar, pll_bar)`` in percent; positive means better than baseline.

    By default the dataset-mean scores are normalized.  With
    ``per_observation`` each observation is normalized separately and the
    ratios averaged; observations with a zero bound gap are skipped.
    """
    if not (model.crps.shape == baseline.crps.shape == bound.crps.shape):
        raise DimensionError("score records cover different observations")
    if not per_observation:
        return (_normalize(np.mean(model.crps), np.mean(baseline.crps), np.mean(bound.crps), "CRPS"),
                _normalize(np.mean(model.pll), np.mean(baseline.pll), np.mean(bound.pll), "PLL"))
    out = []
    for m, b, u in ((model.crps, baseline.crps, bound.crps), (model.pll, baseline.pll, bound.pll)):
        gap = u - b
        ok = gap != 0
        out.append(float(np.mean((m[ok] - b[ok]) / gap[ok]) * 100.0) if ok.any() else math.nan)
    return tuple(out)


@dataclass
class MetricReport:
    n: int
    mean_crps: float
    mean_pll: float
    rmse: float
    crps_bar: float
    pll_bar: float
    baseline_crps: float
    baseline_pll: float
    bound_crps: float
    bound_pll: float
    n_flagged: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def build_report(model, baseline, bound, means, y, per_observation=False):
    crps_bar, pll_bar = normalized_scores(model, baseline, bound, per_observation)
    return MetricReport(
        n=int(model.crps.size), mean_crps=float(np.mean(model.crps)), mean_pll=float(np.mean(model.pll)),
        rmse=rmse(means, y), crps_bar=crps_bar, pll_bar=pll_bar,
        baseline_crps=float(np.mean(baseline.crps)), baseline_pll=float(np.mean(baseline.pll)),
        bound_crps=float(np.mean(bound.crps)), bound_pll=float(np.mean(bound.pll)),
        n_flagged=bound.n_flagged)


def dumps_json(obj):
    """Stable JSON text: sorted keys, non-finite floats as null."""
    def clean(o):
        if isinstance(o, dict):
            return {str(k): clean(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [clean(v) for v in o]
        if isinstance(o, (np.floating, float)):
            o = float(o)
            return o if math.isfinite(o) else None
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.bool_):
            return bool(o)
        return o
    return json.dumps(clean(obj), indent=2, sort_keys=True) + "\n"


SCORE_COLUMNS = ["query_id", "target", "mean", "variance", "cu_variance", "crps", "pll",
                 "cu_crps", "cu_pll", "bound_crps", "bound_pll", "flagged"]


def scores_to_csv(y, means, model, baseline, bound, ids=None):
    """Per-observation score table for plotting."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCORE_COLUMNS)
    ids = range(len(y)) if ids is None else ids
    for i, q in enumerate(ids):
        w.writerow([q, repr(float(y[i])), repr(float(means[i])), repr(float(model.variance[i])),
                    repr(float(baseline.variance[i])), repr(float(model.crps[i])), repr(float(model.pll[i])),
                    repr(float(baseline.crps[i])), repr(float(baseline.pll[i])),
                    repr(float(bound.crps[i])), repr(float(bound.pll[i])), int(bound.flagged[i])])
    return buf.getvalue()
