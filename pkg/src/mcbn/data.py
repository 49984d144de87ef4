"""Dataset loading, z-score normalization and train/test/fold splits.

Regression datasets are user-supplied CSV files (comma separated, one
header row).  ``registry.json`` lists the expected file name, size and
target column of each benchmark dataset.  A synthetic 1-D toy problem and
a multi-feature heteroscedastic problem are built in.
"""

from __future__ import annotations

import csv
import json
import math
import os
import warnings
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from .errors import DomainError, MCBNError
from .inference import PredictiveDistribution
from .mathcore import rng_stream

DATA_DIR_ENV = "MCBN_DATA_DIR"


class DataError(MCBNError, ValueError):
    """Malformed or missing dataset."""


@dataclass(frozen=True)
class Normalizer:
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float
    constant: np.ndarray  # features with zero spread (divided by 1)

    def x(self, X):
        return (np.asarray(X, dtype=float) - self.x_mean) / self.x_std

    def y(self, y):
        return (np.asarray(y, dtype=float) - self.y_mean) / self.y_std

    def y_inverse(self, y):
        return np.asarray(y, dtype=float) * self.y_std + self.y_mean


@dataclass(frozen=True)
class Dataset:
    name: str
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple = ()
    target_name: str = "y"
    norm: Normalizer = None

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def q(self):
        return self.X.shape[1]

    def subset(self, idx):
        return replace(self, X=self.X[idx], y=self.y[idx])


def registry():
    with resources.files("mcbn").joinpath("registry.json").open(encoding="utf-8") as fh:
        return json.load(fh)


def data_dir():
    return os.environ.get(DATA_DIR_ENV, os.path.join(os.getcwd(), "datasets"))


def load_csv(path, target=-1, drop=(), name=None):
    """Read a numeric CSV with a header row.

    ``target`` is a column name or index; ``drop`` lists columns to ignore.
    Non-numeric or missing cells raise :class:`DataError` naming the row.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise DataError(f"{path}: needs a header row and at least one data row")
    header = [h.strip() for h in rows[0]]
    if isinstance(target, str):
        if target not in header:
            raise DataError(f"{path}: target column {target!r} not in header")
        t = header.index(target)
    else:
        t = target % len(header)
    for d in drop:
        if d not in header:
            raise DataError(f"{path}: column {d!r} to drop not in header")
    keep = [j for j, h in enumerate(header) if j != t and h not in drop]
    values = np.empty((len(rows) - 1, len(header)))
    for i, row in enumerate(rows[1:], start=1):
        if len(row) != len(header):
            raise DataError(f"{path}: row {i} has {len(row)} fields, expected {len(header)}")
        try:
            values[i - 1] = [float(c) for c in row]
        except ValueError as exc:
            raise DataError(f"{path}: row {i}: {exc}") from None
    if not np.all(np.isfinite(values)):
        raise DataError(f"{path}: missing or non-finite values")
    return Dataset(name or os.path.splitext(os.path.basename(path))[0], values[:, keep], values[:, t],
                   tuple(header[j] for j in keep), header[t])


def load_registered(name, directory=None):
    reg = registry()
    if name not in reg:
        raise DataError(f"unknown dataset {name!r}; known: {', '.join(sorted(reg))}")
    entry = reg[name]
    path = os.path.join(directory or data_dir(), entry["file"])
    if not os.path.exists(path):
        raise FileNotFoundError(f"{path} missing; obtain it from: {entry['source']}")
    ds = load_csv(path, entry["target"], entry["drop"], name=name)
    if (ds.n, ds.q) != (entry["N"], entry["Q"]):
        raise DataError(f"{name}: got N={ds.n}, Q={ds.q}, expected N={entry['N']}, Q={entry['Q']}")
    return ds


def toy_dataset(n=100, seed=0):
    """1-D heteroscedastic toy problem on two clusters of inputs.

    Inputs fill ``[-4, -1] U [1, 4]``, targets follow ``x sin(x)`` with noise
    whose scale grows with ``|x|``.
    """
    rng = rng_stream(seed, 7)
    x = rng.uniform(1.0, 4.0, n) * np.where(rng.random(n) < 0.5, -1.0, 1.0)
    x = np.sort(x)
    y = x * np.sin(x) + rng.normal(0.0, 0.1 + 0.15 * np.abs(x))
    return Dataset("toy", x[:, None], y, ("x",), "y")


def toy_queries(n=241, lo=-8.0, hi=8.0):
    return np.linspace(lo, hi, n)[:, None]


def heteroscedastic_dataset(n=600, q=4, seed=0):
    """Smooth nonlinear target with input-dependent noise, ``q`` Gaussian features."""
    rng = rng_stream(seed, 8)
    X = rng.normal(size=(n, q))
    signal = np.sin(2.0 * X[:, 0]) + 0.5 * X[:, 1] ** 2 - 0.3 * X[:, 1:].sum(axis=1)
    y = signal + rng.normal(0.0, 0.05 + 0.4 * np.abs(X[:, 0]))
    return Dataset("hetero", X, y, tuple(f"x{j}" for j in range(q)), "y")


def load_dataset(source, directory=None, target=-1):
    """Resolve ``source``: ``"toy"``, ``"hetero"``, a registry name, or a CSV path."""
    if source == "toy":
        return toy_dataset()
    if source == "hetero":
        return heteroscedastic_dataset()
    if source in registry():
        return load_registered(source, directory)
    if source.endswith(".csv") or os.path.sep in source:
        return load_csv(source, target)
    raise DataError(f"unknown dataset {source!r}")


def fit_normalizer(ds, stats_from):
    idx = np.asarray(stats_from)
    if idx.size == 0:
        raise DomainError("normalization needs at least one training row")
    X, y = ds.X[idx], ds.y[idx]
    x_mean, x_std = X.mean(axis=0), X.std(axis=0)
    constant = x_std == 0
    if constant.any():
        warnings.warn(f"{ds.name}: constant features {np.flatnonzero(constant).tolist()} left centered")
    y_std = float(y.std())
    return Normalizer(x_mean, np.where(constant, 1.0, x_std), float(y.mean()), y_std if y_std > 0 else 1.0, constant)


def normalize(ds, stats_from):
    """z-score features and target with statistics of the rows ``stats_from``."""
    norm = fit_normalizer(ds, stats_from)
    return replace(ds, X=norm.x(ds.X), y=norm.y(ds.y), norm=norm)


def denormalize_prediction(pd, norm):
    """Map a normalized-target predictive distribution to original units."""
    s, m = norm.y_std, norm.y_mean
    spread = None if pd.spread is None else pd.spread * s * s
    return PredictiveDistribution(pd.mean * s + m, pd.variance * (s * s), pd.samples * s + m,
                                  pd.tau / (s * s), spread)


@dataclass(frozen=True)
class SplitPlan:
    split_seeds: tuple = (0, 1, 2, 3, 4)
    test_fraction: float = 0.2
    n_folds: int = 5
    eval_seeds: tuple = (0, 1, 2, 3, 4)


@dataclass(frozen=True)
class Split:
    seed: int
    train: np.ndarray
    test: np.ndarray
    folds: list = field(default_factory=list)  # validation folds, indices into the dataset


def make_split(n, seed, test_fraction=0.2, n_folds=5):
    if n < 25:
        raise DomainError(f"need at least 25 rows for a split, got {n}")
    rng = rng_stream(seed, 3)
    perm = rng.permutation(n)
    n_test = int(math.floor(test_fraction * n))
    test, train = np.sort(perm[:n_test]), perm[n_test:]
    folds = [np.sort(f) for f in np.array_split(train, n_folds)]
    return Split(seed, np.sort(train), test, folds)


def make_splits(n, plan=SplitPlan()):
    return [make_split(n, s, plan.test_fraction, plan.n_folds) for s in plan.split_seeds]
