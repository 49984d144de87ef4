"""Uncertainty-error and toy-fit figures as deterministic SVG, plus the
plotted coordinates as CSV."""

from __future__ import annotations

import csv
import io
import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from scipy.ndimage import uniform_filter1d  # noqa: E402

from .data import DataError  # noqa: E402

Z50 = 0.6744897501960817
Z95 = 1.959963984540054

matplotlib.rcParams["svg.hashsalt"] = "mcbn"
matplotlib.rcParams["svg.fonttype"] = "path"


def read_table(path, required):
    """Read a numeric CSV into a dict of float arrays; :class:`DataError` if malformed."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: {exc}") from None
    if len(rows) < 2:
        raise DataError(f"{path}: no data rows")
    header = rows[0]
    missing = [c for c in required if c not in header]
    if missing:
        raise DataError(f"{path}: missing columns {missing}")
    cols = {h: [] for h in header}
    for i, row in enumerate(rows[1:], start=1):
        if len(row) != len(header):
            raise DataError(f"{path}: row {i} has {len(row)} fields, expected {len(header)}")
        for h, c in zip(header, row):
            try:
                cols[h].append(float(c))
            except ValueError:
                raise DataError(f"{path}: row {i}: non-numeric {h}={c!r}") from None
    out = {h: np.array(v) for h, v in cols.items()}
    for c in required:
        if not np.all(np.isfinite(out[c])):
            raise DataError(f"{path}: non-finite values in {c}")
    return out


def running_mean(values, window):
    return uniform_filter1d(np.asarray(values, dtype=float), size=window, mode="nearest")


def uncertainty_error_data(y, mean, variance, cu_variance=None):
    """Observations sorted by predicted std with their error and band half-widths."""
    y, mean, variance = (np.asarray(a, dtype=float) for a in (y, mean, variance))
    order = np.argsort(variance, kind="stable")
    std = np.sqrt(variance[order])
    err = np.abs(y - mean)[order]
    n = err.size
    window = max(5, n // 20)
    data = {"rank": np.arange(n), "order": order, "std": std, "abs_error": err,
            "band50": Z50 * std, "band95": Z95 * std, "running_error": running_mean(err, min(window, n))}
    if cu_variance is not None:
        cu = np.broadcast_to(np.asarray(cu_variance, dtype=float), y.shape)[order]
        data["cu_band95"] = Z95 * np.sqrt(cu)
    return data


def toy_fit_data(x_query, mean, variance):
    x = np.ravel(np.asarray(x_query, dtype=float))
    std = np.sqrt(np.asarray(variance, dtype=float))
    return {"x": x, "mean": np.asarray(mean, dtype=float), "std": std,
            "band50": Z50 * std, "band95": Z95 * std}


def extrapolation_distance(x_query, x_train):
    """Distance from each query to its nearest training input (1-D)."""
    xt = np.sort(np.ravel(x_train))
    xq = np.ravel(x_query)
    pos = np.clip(np.searchsorted(xt, xq), 1, xt.size - 1)
    return np.minimum(np.abs(xq - xt[pos - 1]), np.abs(xq - xt[pos]))


def table_to_csv(data, columns=None):
    columns = columns or list(data)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for i in range(len(data[columns[0]])):
        w.writerow([repr(float(data[c][i])) if isinstance(data[c][i], (float, np.floating))
                    else int(data[c][i]) for c in columns])
    return buf.getvalue()


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def plot_uncertainty_error(data, path, title=""):
    """Errors (dots) sorted by predicted std, 50%/95% bands, running mean and CU line."""
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    r = data["rank"]
    ax.fill_between(r, 0, data["band95"], color="#c6dbef", lw=0, label="95% interval")
    ax.fill_between(r, 0, data["band50"], color="#6baed6", lw=0, label="50% interval")
    ax.plot(r, data["abs_error"], ".", color="0.45", ms=3, label="|error|")
    ax.plot(r, data["running_error"], "-", color="0.2", lw=1.0, label="running mean")
    if "cu_band95" in data:
        ax.plot(r, data["cu_band95"], "--", color="#d62728", lw=1.0, label="constant 95%")
    ax.set_xlabel("test observations, sorted by predicted std")
    ax.set_ylabel("absolute error")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=7, loc="upper left")
    fig.tight_layout()
    _save(fig, path)


def plot_toy_fit(data, path, x_train=None, y_train=None, title=""):
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    x, m = data["x"], data["mean"]
    ax.fill_between(x, m - data["band95"], m + data["band95"], color="#c6dbef", lw=0, label="95% interval")
    ax.fill_between(x, m - data["band50"], m + data["band50"], color="#6baed6", lw=0, label="50% interval")
    ax.plot(x, m, "-", color="#08306b", lw=1.2, label="predictive mean")
    if x_train is not None:
        ax.plot(np.ravel(x_train), y_train, "o", color="k", ms=2.5, label="training data")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=7, loc="upper left")
    fig.tight_layout()
    _save(fig, path)


def band_widening(x_query, x_train, variance, fraction=0.1):
    """``(extrapolated mean half-width, median half-width)`` of the 95% band."""
    d = extrapolation_distance(x_query, x_train)
    half = Z95 * np.sqrt(np.asarray(variance, dtype=float))
    k = max(1, int(math.ceil(fraction * d.size)))
    far = np.argsort(-d, kind="stable")[:k]
    return float(np.mean(half[far])), float(np.median(half))
