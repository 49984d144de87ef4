# # MC batch normalization on a 1-D toy problem
#
# A batch-normalized MLP is trained on two clusters of noisy samples of
# x sin(x).  At test time every stochastic pass normalizes with the
# statistics of a random training mini-batch; the spread of the passes plus
# the noise variance 1/tau gives the predictive variance.

import warnings

import numpy as np

from mcbn.cli import toy_prediction
from mcbn.data import make_split, toy_dataset
from mcbn.experiment import train_split
from mcbn import plotting

warnings.simplefilter("ignore")

ds = toy_dataset(seed=0)
split = make_split(ds.n, 0)
print(ds.n, "rows,", len(split.train), "for training")

# Grid search over weight decay and batch size, then tau fitted on the folds.
# Fewer epochs than the full protocol keep this under a minute.
trained = train_split(ds, split, max_epochs=600, passes=200, seed=0)
print("chosen:", trained.point, "epoch", trained.best_epoch, "tau", round(trained.tau, 3))

# Predict on a grid reaching well outside the training inputs [-4, -1] U [1, 4].
xq, mean, var = toy_prediction(ds, trained, "mcbn", 500)
far, median = plotting.band_widening(xq, ds.X[split.train], var)
print(f"95% half-width: {far:.2f} far from the data vs {median:.2f} median")

data = plotting.toy_fit_data(xq, mean, var)
plotting.plot_toy_fit(data, "toy_mcbn.svg", ds.X[split.train], ds.y[split.train], title="MCBN on toy data")
with open("toy_mcbn.csv", "w") as fh:
    fh.write(plotting.table_to_csv(data))
print("wrote toy_mcbn.svg")

# The constant-uncertainty baseline reuses the MCBN means with one variance.
cu = np.full_like(var, trained.cu_variance)
print("CU 95% half-width everywhere:", round(float(plotting.Z95 * np.sqrt(cu[0])), 3))
