"""End-to-end protocol: grid search, final model, tau and constant-variance
fits, test-set evaluation, and sensitivity sweeps.

Networks are trained on z-scored inputs and targets; ``tau`` lives in
those normalized units.  Predictions are mapped back to the original target
scale before any metric is computed.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import metrics
from .data import Normalizer, Split, denormalize_prediction, fit_normalizer, make_split
from .errors import DomainError
from .inference import fit_constant_uncertainty, predictive_moments, stochastic_samples
from .mathcore import rng_stream
from .network import build_network
from .training import HyperGrid, TrainConfig, cv_fold_data, grid_search_cv, optimize_tau, train

MODELS = ("mcbn", "mcdo", "cubn", "cudo")
BATCH_AXIS = (8, 16, 32, 64, 128, 256, 512, 1024)
PASSES_AXIS = (50, 100, 250)


def noise_kind(model):
    if model not in MODELS:
        raise DomainError(f"unknown model {model!r}; expected one of {', '.join(MODELS)}")
    return "mcbn" if model in ("mcbn", "cubn") else "mcdo"


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = "toy"
    model: str = "mcbn"
    hidden: tuple = (50, 50)
    grid: str = "desk"
    passes: int = 500
    seed: int = 0  # split seed
    eval_seeds: tuple = (0, 1, 2, 3, 4)
    max_epochs: int = 2000
    eval_every: int = 20
    batch_size: int = None  # inference batch size; default: the chosen training batch size
    out: str = "runs"

    def __post_init__(self):
        noise_kind(self.model)
        if self.passes < 1:
            raise DomainError("passes must be at least 1")
        if self.grid not in ("desk", "full"):
            raise DomainError(f"unknown grid preset {self.grid!r}")


def make_net_factory(n_in, hidden, model):
    kind = noise_kind(model)

    def make_net(point, seed):
        rng = rng_stream(seed, 2)
        if kind == "mcbn":
            return build_network(n_in, hidden, "batchnorm", 0.0, rng)
        return build_network(n_in, hidden, "none", point["dropout"], rng)
    return make_net


@dataclass
class TrainedSplit:
    net: object
    norm: Normalizer
    split: Split
    point: dict
    best_epoch: int
    cv_rmse: float
    tau: float
    tau_at_edge: bool
    cu_variance: float
    fold_nets: list = field(default_factory=list)
    cv_table: list = field(default_factory=list)
    cv_epochs: list = field(default_factory=list)

    def hyper_dict(self):
        return {"weight_decay": self.point["weight_decay"], "batch_size": self.point["batch_size"],
                "dropout": self.point["dropout"], "best_epoch": self.best_epoch,
                "cv_rmse": self.cv_rmse, "tau": self.tau, "tau_at_edge": self.tau_at_edge,
                "cu_variance": self.cu_variance, "split_seed": self.split.seed,
                "y_mean": self.norm.y_mean, "y_std": self.norm.y_std}


def fold_predictions(kind, nets, Xn, split, passes, batch_size, seed):
    """MC samples (normalized units) on each fold's validation rows."""
    out = []
    for k, net in enumerate(nets):
        (tr_X, _), (va_X, _) = cv_fold_data(Xn, Xn[:, 0], split.folds, k)
        m = min(batch_size, tr_X.shape[0])
        out.append(stochastic_samples(kind, net, va_X, tr_X, passes, m, rng_stream(seed, 20 + k)))
    return out


def fit_tau_and_cu(kind, nets, Xn, yn, y, norm, split, passes, batch_size, seed):
    """Fit tau on normalized fold predictions and the constant variance in original units."""
    samples = fold_predictions(kind, nets, Xn, split, passes, batch_size, seed)
    targets_n = [yn[f] for f in split.folds]
    est = optimize_tau(samples, targets_n)
    means = np.concatenate([norm.y_inverse(s.mean(axis=1)) for s in samples])
    v = fit_constant_uncertainty(means, np.concatenate([y[f] for f in split.folds]))
    return est, v


def train_split(ds, split, model="mcbn", hidden=(50, 50), grid=None, max_epochs=2000,
                eval_every=20, passes=500, seed=0):
    """Run the training protocol on one split; ``ds`` holds raw (unnormalized) data."""
    kind = noise_kind(model)
    n_fold_train = min(len(split.train) - len(f) for f in split.folds)
    grid = grid or HyperGrid.preset("desk", kind, max_batch=n_fold_train)
    points = grid.points()
    norm = fit_normalizer(ds, split.train)
    Xn, yn = norm.x(ds.X), norm.y(ds.y)
    make_net = make_net_factory(ds.q, hidden, model)
    base = TrainConfig(max_epochs=max_epochs, eval_every=eval_every, seed=seed)
    cv = grid_search_cv(points, Xn, yn, split.folds, make_net, base)
    gi = points.index(cv.best)
    win = replace(base, weight_decay=cv.best["weight_decay"], batch_size=cv.best["batch_size"],
                  max_epochs=cv.best_epoch)
    # rerunning each fold job for best_epoch epochs reproduces its snapshot
    fold_nets = []
    for k in range(len(split.folds)):
        tr, _ = cv_fold_data(Xn, yn, split.folds, k)
        net, _ = train(make_net(cv.best, seed), tr, replace(win, seed=seed + 1000 * gi + k))
        fold_nets.append(net)
    final, _ = train(make_net(cv.best, seed), (Xn[split.train], yn[split.train]), replace(win, seed=seed + 999))
    est, v = fit_tau_and_cu(kind, fold_nets, Xn, yn, ds.y, norm, split, passes, cv.best["batch_size"], seed)
    return TrainedSplit(final, norm, split, dict(cv.best), cv.best_epoch, cv.best_rmse, est.tau,
                        est.at_edge, v, fold_nets, cv.mean_rmse, cv.epochs)


@dataclass
class Evaluation:
    report: metrics.MetricReport
    model: metrics.ScoreRecord
    baseline: metrics.ScoreRecord
    bound: metrics.ScoreRecord
    prediction: object  # PredictiveDistribution in original units
    y: np.ndarray
    ids: np.ndarray


def evaluate_split(ds, trained, model="mcbn", passes=500, eval_seed=0, batch_size=None,
                   tau=None, cu_variance=None):
    """Score the MC model, its constant-variance baseline and the bound on the test rows."""
    kind = noise_kind(model)
    split, norm = trained.split, trained.norm
    tau = trained.tau if tau is None else tau
    v = trained.cu_variance if cu_variance is None else cu_variance
    Xn = norm.x(ds.X)
    test_X, train_X, y = Xn[split.test], Xn[split.train], ds.y[split.test]
    m = min(batch_size or trained.point["batch_size"], train_X.shape[0])
    rng = rng_stream(1000 * split.seed + eval_seed, 5)
    s = stochastic_samples(kind, trained.net, test_X, train_X, passes, m, rng)
    pd = denormalize_prediction(predictive_moments(s, tau), norm)
    mc = metrics.score_samples(pd.samples, pd.variance, y, pd.tau)
    cu = metrics.score_gaussian(pd.mean, v, y)
    bound = metrics.score_bounds(pd.mean, y)
    model_rec = cu if model in ("cubn", "cudo") else mc
    report = metrics.build_report(model_rec, cu, bound, pd.mean, y)
    report.extra = {"model": model, "split_seed": split.seed, "eval_seed": eval_seed, "passes": passes,
                    "batch_size": m, "tau": pd.tau, "cu_variance": v}
    return Evaluation(report, model_rec, cu, bound, pd, y, split.test)


@dataclass
class ProtocolResult:
    reports: list
    crps_t: tuple
    pll_t: tuple
    seconds: float

    @property
    def crps_bar(self):
        return np.array([r.crps_bar for r in self.reports])

    @property
    def pll_bar(self):
        return np.array([r.pll_bar for r in self.reports])


def run_protocol(ds, model="mcbn", split_seeds=(0, 1, 2, 3, 4), eval_seeds=(0, 1, 2, 3, 4),
                 hidden=(50, 50), grid=None, max_epochs=2000, eval_every=20, passes=500, log=None):
    """Splits x seeds evaluation; one-sided t-tests of the normalized scores against 0."""
    t0 = time.perf_counter()
    reports = []
    for s in split_seeds:
        split = make_split(ds.n, s)
        trained = train_split(ds, split, model, hidden, grid, max_epochs, eval_every, passes, seed=s)
        for e in eval_seeds:
            reports.append(evaluate_split(ds, trained, model, passes, e).report)
        if log:
            last = reports[-len(eval_seeds):]
            log(f"split {s}: {trained.point} epoch {trained.best_epoch} tau {trained.tau:.4g} "
                f"CRPS-bar {np.mean([r.crps_bar for r in last]):.2f} "
                f"PLL-bar {np.mean([r.pll_bar for r in last]):.2f} ({time.perf_counter() - t0:.0f} s)")
    crps = metrics.one_sample_t_test([r.crps_bar for r in reports])
    pll = metrics.one_sample_t_test([r.pll_bar for r in reports])
    return ProtocolResult(reports, crps, pll, time.perf_counter() - t0)


def sweep(ds, trained, axis, model="mcbn", passes=500, eval_seed=0, values=None):
    """Normalized scores across inference batch sizes or pass counts.

    For every axis value tau and the constant variance are refitted on the
    fold predictions with that setting, then the test split is scored.
    Returns ``(rows, notes)``; values exceeding the data are skipped.
    """
    kind = noise_kind(model)
    if axis not in ("batch_size", "passes"):
        raise DomainError(f"unknown sweep axis {axis!r}")
    values = values or (BATCH_AXIS if axis == "batch_size" else PASSES_AXIS)
    norm, split = trained.norm, trained.split
    Xn, yn = norm.x(ds.X), norm.y(ds.y)
    n_fold_train = min(len(split.train) - len(f) for f in split.folds)
    rows, notes = [], []
    for val in values:
        m = val if axis == "batch_size" else trained.point["batch_size"]
        t = val if axis == "passes" else passes
        if axis == "batch_size" and kind == "mcdo":
            notes.append("batch size has no effect on dropout noise")
            break
        if m > n_fold_train:
            notes.append(f"batch size {m} exceeds {n_fold_train} training rows; skipped")
            continue
        t0 = time.perf_counter()
        est, v = fit_tau_and_cu(kind, trained.fold_nets, Xn, yn, ds.y, norm, split, t, m, trained.split.seed)
        ev = evaluate_split(ds, trained, model, t, eval_seed, batch_size=m, tau=est.tau, cu_variance=v)
        r = ev.report
        rows.append({axis: val, "crps_bar": r.crps_bar, "pll_bar": r.pll_bar, "tau": est.tau,
                     "cu_variance": v, "rmse": r.rmse, "seconds": time.perf_counter() - t0})
    return rows, notes


def finite_mean(values):
    v = [x for x in values if x is not None and math.isfinite(x)]
    return float(np.mean(v)) if v else math.nan
