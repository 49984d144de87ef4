# # Boston Housing: MCBN against its constant-uncertainty baseline
#
# Five 80/20 splits, each with a grid search over weight decay and batch
# size by 5-fold cross-validation, then five MC evaluations with T = 500.
# Pass --quick for a single split with short training.

import sys
import warnings

import numpy as np

from mcbn.data import load_registered
from mcbn.experiment import run_protocol

warnings.simplefilter("ignore")
quick = "--quick" in sys.argv

ds = load_registered("boston", "datasets")
print(ds.name, ds.n, "rows,", ds.q, "features")

res = run_protocol(ds, "mcbn", split_seeds=(0,) if quick else (0, 1, 2, 3, 4),
                   max_epochs=300 if quick else 2000, log=print)
print(f"CRPS-bar {res.crps_bar.mean():.2f}  t = {res.crps_t[0]:.2f}  p = {res.crps_t[1]:.2e}")
print(f"PLL-bar  {res.pll_bar.mean():.2f}  t = {res.pll_t[0]:.2f}  p = {res.pll_t[1]:.2e}")
print("test RMSE", np.mean([r.rmse for r in res.reports]))
