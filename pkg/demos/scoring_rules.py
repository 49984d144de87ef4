# # CRPS, PLL and normalized scores
#
# Scores are normalized between a constant-variance baseline (0) and the
# per-observation optimal variance (100).

import numpy as np

from mcbn import metrics
from mcbn.mathcore import rng_stream

print("CRPS of N(0, 1) at 0:", metrics.crps_gaussian(0.0, 1.0, 0.0))
print("PLL  of N(0, 1) at 0:", metrics.pll_gaussian(0.0, 1.0, 0.0))

# For a residual r the best CRPS variance is r^2 / ln 2, the best PLL variance r^2.
print("CRPS-optimal variance for r = 1:", metrics.optimal_variance_crps(0.0, 1.0), 1 / np.log(2))

rng = rng_stream(0)
n = 200
noise_sd = rng.uniform(0.2, 2.0, n)
y = rng.normal(0, noise_sd)
mean = np.zeros(n)

honest = metrics.score_gaussian(mean, noise_sd ** 2, y)
constant = metrics.score_gaussian(mean, np.mean(noise_sd ** 2), y)
bound = metrics.score_bounds(mean, y)
print("normalized (CRPS, PLL), true variances:", metrics.normalized_scores(honest, constant, bound))
print("normalized (CRPS, PLL), baseline itself:", metrics.normalized_scores(constant, constant, bound))
print("one-sided t-test of {1, 2, 3} > 0:", metrics.one_sample_t_test([1, 2, 3]))
