"""Monte Carlo batch normalization: predictive uncertainty from the noise
of mini-batch statistics in batch-normalized regression networks."""

from .data import Dataset, load_csv, load_dataset, make_splits, normalize, toy_dataset
from .inference import InferenceConfig, PredictiveDistribution, mcbn_predict, mcdo_predict
from .metrics import crps_gaussian, pll_gaussian, pll_mc
from .network import build_network, forward, backward, predict
from .training import TrainConfig, train

__version__ = "0.1.0"
