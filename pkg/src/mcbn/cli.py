"""Command-line entry point: ``mcbn train|evaluate|sweep|verify|plot``.

Exit codes
  0  all requested outputs written
  1  invalid arguments or configuration
  2  dataset missing or unknown
  3  training diverged on every grid point
  4  saved network does not match the dataset or model
  5  verification property failed
  6  malformed input CSV for plotting
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
import warnings

import numpy as np

from . import analysis, metrics, plotting
from .data import DataError, fit_normalizer, load_dataset, make_split, registry, toy_dataset, toy_queries
from .errors import DomainError, TrainingError
from .experiment import (TrainedSplit, evaluate_split, noise_kind, sweep, train_split)
from .inference import predictive_moments, stochastic_samples
from .mathcore import Gaussian, rng_stream
from .network import build_network, load_network, save_network
from .training import HyperGrid

OUT_ENV = "MCBN_OUT"
EXIT_OK, EXIT_ARGS, EXIT_DATA, EXIT_DIVERGED, EXIT_MISMATCH, EXIT_VERIFY, EXIT_CSV = range(7)

DEFAULTS = {"dataset": "toy", "model": "mcbn", "grid": "desk", "passes": 500, "batch_size": None,
            "seed": 0, "eval_seeds": [0, 1, 2, 3, 4], "hidden": None, "max_epochs": 2000,
            "eval_every": 20, "out": None, "data_dir": None}


class CLIError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def resolve_config(args):
    """Defaults < config file < command-line flags."""
    cfg = dict(DEFAULTS)
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            loaded = json.load(fh)
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise CLIError(f"unknown config keys: {sorted(unknown)}", EXIT_ARGS)
        cfg.update(loaded)
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if cfg["out"] is None:
        cfg["out"] = os.environ.get(OUT_ENV, "runs")
    try:
        noise_kind(cfg["model"])
    except DomainError as exc:
        raise CLIError(str(exc), EXIT_ARGS) from None
    if cfg["passes"] < 1:
        raise CLIError("--passes must be at least 1", EXIT_ARGS)
    if cfg["hidden"] is None:
        cfg["hidden"] = registry().get(cfg["dataset"], {}).get("hidden", [50, 50])
    return cfg


def run_dir(cfg):
    name = os.path.splitext(os.path.basename(cfg["dataset"]))[0]
    return os.path.join(cfg["out"], name, cfg["model"], f"split{cfg['seed']}")


def write_text(path, text):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def log_line(directory, text):
    # timestamps live only in this sidecar log
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "run.log"), "a", encoding="utf-8") as fh:
        fh.write(f"{time.strftime('%Y-%m-%dT%H:%M:%S')} {text}\n")


def get_dataset(cfg):
    try:
        return load_dataset(cfg["dataset"], cfg["data_dir"])
    except (FileNotFoundError, DataError) as exc:
        raise CLIError(f"dataset unavailable: {exc}", EXIT_DATA) from None


def cmd_train(cfg):
    ds = get_dataset(cfg)
    split = make_split(ds.n, cfg["seed"])
    kind = noise_kind(cfg["model"])
    n_fold_train = min(len(split.train) - len(f) for f in split.folds)
    grid = HyperGrid.preset(cfg["grid"], kind, max_batch=n_fold_train)
    try:
        tr = train_split(ds, split, cfg["model"], tuple(cfg["hidden"]), grid, cfg["max_epochs"],
                         cfg["eval_every"], cfg["passes"], seed=cfg["seed"])
    except TrainingError as exc:
        raise CLIError(f"training failed: {exc}", EXIT_DIVERGED) from None
    d = run_dir(cfg)
    os.makedirs(d, exist_ok=True)
    save_network(tr.net, os.path.join(d, "network.json"))
    for k, net in enumerate(tr.fold_nets):
        save_network(net, os.path.join(d, f"fold{k}.json"))
    write_text(os.path.join(d, "hyperparameters.json"), metrics.dumps_json(tr.hyper_dict()))
    lines = ["epoch," + ",".join(f"point{g}" for g in range(len(tr.cv_table)))]
    for e, epoch in enumerate(tr.cv_epochs):
        lines.append(",".join([str(epoch)] + [repr(float(row[e])) for row in tr.cv_table]))
    write_text(os.path.join(d, "cv_history.csv"), "\n".join(lines) + "\n")
    write_text(os.path.join(d, "grid.json"), metrics.dumps_json(grid.points()))
    log_line(d, f"train {cfg['dataset']} {cfg['model']} -> {tr.hyper_dict()}")
    print(f"trained {cfg['model']} on {ds.name} split {cfg['seed']}: {tr.point}, epoch {tr.best_epoch}, "
          f"tau {tr.tau:.4g}; outputs in {d}")
    return EXIT_OK


def load_trained(cfg, ds, need_folds=False):
    d = run_dir(cfg)
    path = os.path.join(d, "hyperparameters.json")
    if not os.path.exists(path):
        raise CLIError(f"no trained network in {d}; run 'mcbn train' first", EXIT_DATA)
    with open(path, encoding="utf-8") as fh:
        hyper = json.load(fh)
    net = load_network(os.path.join(d, "network.json"))
    kind = noise_kind(cfg["model"])
    if net.n_in != ds.q:
        raise CLIError(f"network expects {net.n_in} inputs, dataset has {ds.q}", EXIT_MISMATCH)
    if (kind == "mcbn") != bool(net.bn_layers) or (kind == "mcdo") != net.has_dropout:
        raise CLIError(f"network architecture does not fit model {cfg['model']}", EXIT_MISMATCH)
    split = make_split(ds.n, hyper["split_seed"])
    norm = fit_normalizer(ds, split.train)
    folds = []
    if need_folds:
        folds = [load_network(os.path.join(d, f"fold{k}.json")) for k in range(len(split.folds))]
    point = {"weight_decay": hyper["weight_decay"], "batch_size": hyper["batch_size"],
             "dropout": hyper["dropout"]}
    return TrainedSplit(net, norm, split, point, hyper["best_epoch"], hyper["cv_rmse"], hyper["tau"],
                        hyper["tau_at_edge"], hyper["cu_variance"], folds), d


def cmd_evaluate(cfg):
    ds = get_dataset(cfg)
    tr, d = load_trained(cfg, ds)
    reports = []
    for e in cfg["eval_seeds"]:
        ev = evaluate_split(ds, tr, cfg["model"], cfg["passes"], e, cfg["batch_size"])
        reports.append(ev.report.to_dict())
        write_text(os.path.join(d, f"scores_seed{e}.csv"),
                   metrics.scores_to_csv(ev.y, ev.prediction.mean, ev.model, ev.baseline, ev.bound, ev.ids))
    summary = {"crps_bar": float(np.mean([r["crps_bar"] for r in reports])),
               "pll_bar": float(np.mean([r["pll_bar"] for r in reports]))}
    for key in ("crps", "pll"):
        summary[f"{key}_t"], summary[f"{key}_p"] = safe_t_test([r[f"{key}_bar"] for r in reports])
    write_text(os.path.join(d, "report.json"), metrics.dumps_json({"summary": summary, "runs": reports}))
    if ds.name == "toy":
        write_text(os.path.join(d, "toy_predictions.csv"), toy_prediction_csv(ds, tr, cfg))
    log_line(d, f"evaluate {cfg['model']} passes={cfg['passes']} -> {summary}")
    print(f"CRPS-bar {summary['crps_bar']:.2f}  PLL-bar {summary['pll_bar']:.2f}; outputs in {d}")
    return EXIT_OK


def safe_t_test(values):
    """t-test against 0; ``(nan, nan)`` when undefined (fewer than 2 runs or no spread)."""
    try:
        return metrics.one_sample_t_test(values)
    except DomainError:
        return math.nan, math.nan


def toy_prediction(ds, tr, model, passes, seed=0):
    """Predictive distribution over the toy query grid, original units."""
    xq = toy_queries()
    norm = tr.norm
    s = stochastic_samples(noise_kind(model), tr.net, norm.x(xq), norm.x(ds.X[tr.split.train]), passes,
                           min(tr.point["batch_size"], len(tr.split.train)), rng_stream(seed, 6))
    pd = predictive_moments(s, tr.tau)
    return xq, norm.y_inverse(pd.mean), pd.variance * norm.y_std ** 2


def toy_prediction_csv(ds, tr, cfg):
    xq, mean, var = toy_prediction(ds, tr, cfg["model"], cfg["passes"], cfg["eval_seeds"][0])
    xt = ds.X[tr.split.train]
    data = {"x": xq[:, 0], "mean": mean, "variance": var,
            "extrapolation": plotting.extrapolation_distance(xq, xt)}
    return plotting.table_to_csv(data)


def cmd_sweep(cfg, axis):
    ds = get_dataset(cfg)
    tr, d = load_trained(cfg, ds, need_folds=True)
    rows, notes = sweep(ds, tr, axis, cfg["model"], cfg["passes"], cfg["eval_seeds"][0])
    cols = [axis, "crps_bar", "pll_bar", "tau", "cu_variance", "rmse"]
    lines = [",".join(cols)] + [",".join(repr(float(r[c])) if c != axis else str(r[c]) for c in cols) for r in rows]
    write_text(os.path.join(d, f"sweep_{axis}.csv"), "\n".join(lines) + "\n")
    log_line(d, f"sweep {axis}: " + "; ".join(f"{r[axis]}: {r['seconds']:.2f}s" for r in rows))
    for n in notes:
        print(f"note: {n}")
    print(f"sweep over {axis}: {len(rows)} rows written to {d}")
    return EXIT_OK


def kl_oracle_check(n_pairs=500, seed=0):
    rng = rng_stream(seed, 11)
    worst = 0.0
    for _ in range(n_pairs):
        q = Gaussian(rng.normal(0, 2), 10 ** rng.uniform(-1.5, 1.5))
        p = Gaussian(rng.normal(0, 2), 10 ** rng.uniform(-1.5, 1.5))
        worst = max(worst, abs(analysis.kl_gaussian(q, p) - analysis.kl_quadrature(q, p)))
    return worst


def verification_net(seed=0, n_in=8, hidden=(50, 50), n_train=2000):
    rng = rng_stream(seed, 12)
    X = rng.normal(size=(n_train, n_in))
    return build_network(n_in, hidden, "batchnorm", rng=rng_stream(seed, 13)), X


def cmd_verify(cfg, draws=1000, n_train=None, tau=1.0, weight_decay=1e-2):
    d = os.path.join(cfg["out"], "verify", f"seed{cfg['seed']}")
    m = cfg["batch_size"] or 32
    net, X = verification_net(cfg["seed"], n_train=n_train or 2000)
    rows = analysis.normality_table(net, X, m, draws, rng_stream(cfg["seed"], 14), layers=[0])
    frac_mu = float(np.mean([r.p_mu > 0.01 for r in rows]))
    frac_sigma = float(np.mean([r.p_sigma > 0.01 for r in rows]))
    frac_shape = float(np.mean([r.p_sigma_shape > 0.01 for r in rows]))
    kl_diff = kl_oracle_check(seed=cfg["seed"])
    prior = analysis.prior_params(X.shape[0], tau, weight_decay)
    checks = {"mu_B normal (>= 90% of units p > 0.01)": frac_mu >= 0.9,
              "sigma_B normal (>= 80% of units p > 0.01)": frac_sigma >= 0.8,
              "KL closed form vs quadrature < 1e-6": kl_diff < 1e-6}
    report = {"batch_size": m, "draws": draws, "fraction_mu_pass": frac_mu, "fraction_sigma_pass": frac_sigma,
              "fraction_sigma_shape_pass": frac_shape, "kl_max_abs_diff": kl_diff,
              "prior": {"N": X.shape[0], "tau": tau, "weight_decay": weight_decay,
                        "sigma_sigma_p": prior.sigma_sigma_p}, "checks": checks}
    write_text(os.path.join(d, "verify.json"), metrics.dumps_json(report))
    lines = ["layer,unit,ks_d_mu,p_mu,ks_d_sigma,p_sigma,ks_d_sigma_shape,p_sigma_shape"]
    lines += [f"{r.layer},{r.unit},{r.d_mu!r},{r.p_mu!r},{r.d_sigma!r},{r.p_sigma!r},"
              f"{r.d_sigma_shape!r},{r.p_sigma_shape!r}" for r in rows]
    write_text(os.path.join(d, "normality.csv"), "\n".join(lines) + "\n")
    write_text(os.path.join(d, "histograms.csv"), histogram_csv(net, X, m, draws, cfg["seed"]))
    print(f"mu_B pass {frac_mu:.0%}, sigma_B pass {frac_sigma:.0%} (shape only {frac_shape:.0%}), "
          f"KL max diff {kl_diff:.2e}, prior sigma_sigma_p = 1/(2 N tau lambda) = {prior.sigma_sigma_p:.6g}")
    failed = [k for k, ok in checks.items() if not ok]
    if failed:
        raise CLIError("verification failed: " + "; ".join(failed), EXIT_VERIFY)
    return EXIT_OK


def histogram_csv(net, X, m, draws, seed, bins=30):
    """Histogram of standardized batch statistics of unit 0 in the first BN layer."""
    mus, sigmas = analysis.collect_bn_stat_samples(net, X, m, draws, rng_stream(seed, 14))
    s = analysis.unit_moment_summaries(net, X)[0]
    mm, mv = analysis.predicted_mean_dist(s.mean, s.std, m)
    sm, sv = analysis.predicted_std_dist(s.std, s.fourth, m)
    zm = (mus[0][:, 0] - mm[0]) / math.sqrt(mv[0])
    zs = (sigmas[0][:, 0] - sm[0]) / math.sqrt(sv[0])
    edges = np.linspace(-4, 4, bins + 1)
    hm, _ = np.histogram(zm, edges, density=True)
    hs, _ = np.histogram(zs, edges, density=True)
    lines = ["bin_left,bin_right,density_mu,density_sigma"]
    lines += [f"{edges[i]!r},{edges[i + 1]!r},{hm[i]!r},{hs[i]!r}" for i in range(bins)]
    return "\n".join(lines) + "\n"


def cmd_plot(paths, out=None):
    for path in paths:
        stem = os.path.splitext(path)[0] if out is None else os.path.join(out, os.path.splitext(os.path.basename(path))[0])
        try:
            with open(path, encoding="utf-8") as fh:
                head = fh.readline()
        except (OSError, UnicodeDecodeError) as exc:
            raise DataError(f"{path}: {exc}") from None
        if head.startswith("x,"):
            t = plotting.read_table(path, ["x", "mean", "variance"])
            data = plotting.toy_fit_data(t["x"], t["mean"], t["variance"])
            ds = toy_dataset()
            plotting.plot_toy_fit(data, stem + ".svg", ds.X, ds.y)
        else:
            t = plotting.read_table(path, ["target", "mean", "variance", "cu_variance"])
            data = plotting.uncertainty_error_data(t["target"], t["mean"], t["variance"], t["cu_variance"])
            plotting.plot_uncertainty_error(data, stem + ".svg")
        write_text(stem + "_plot.csv", plotting.table_to_csv(data))
        print(f"wrote {stem}.svg")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="mcbn", description="MC batch normalization experiments")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--dataset", help="registry name, 'toy', 'hetero' or a CSV path")
        sp.add_argument("--model", choices=["mcbn", "mcdo", "cubn", "cudo"])
        sp.add_argument("--grid", choices=["desk", "full"])
        sp.add_argument("--passes", type=int, help="stochastic forward passes T")
        sp.add_argument("--batch-size", dest="batch_size", type=int, help="inference batch size")
        sp.add_argument("--seed", type=int, help="split seed")
        sp.add_argument("--out", help=f"output root (default ${OUT_ENV} or ./runs)")
        sp.add_argument("--config", help="JSON file with defaults for the flags")
        sp.add_argument("--data-dir", dest="data_dir", help="directory holding dataset CSVs")
        sp.add_argument("--max-epochs", dest="max_epochs", type=int)

    for name in ("train", "evaluate", "verify"):
        common(sub.add_parser(name))
    sp = sub.add_parser("sweep")
    common(sp)
    sp.add_argument("--axis", choices=["batch_size", "passes"], default="batch_size")
    sp = sub.add_parser("plot")
    sp.add_argument("csv", nargs="+", help="score or toy-prediction CSV files")
    sp.add_argument("--out", help="directory for the figures (default: next to each CSV)")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    warnings.simplefilter("ignore")
    try:
        if args.command == "plot":
            return cmd_plot(args.csv, args.out)
        cfg = resolve_config(args)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "evaluate":
            return cmd_evaluate(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg, args.axis)
        return cmd_verify(cfg)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CSV if args.command == "plot" else EXIT_DATA
    except (DomainError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS


if __name__ == "__main__":
    sys.exit(main())
