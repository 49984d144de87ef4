# # How Gaussian are the mini-batch statistics?
#
# For one BN unit, the batch mean over M random training rows should follow
# N(mu, sigma^2 / M) and the batch std N(sigma, (E4 - sigma^4) / (4 sigma^2 M)).
# We draw 1000 batches and compare.

import numpy as np

from mcbn import analysis
from mcbn.cli import verification_net
from mcbn.mathcore import rng_stream

net, X = verification_net(seed=0)
M = 32
summary = analysis.unit_moment_summaries(net, X)[0]
mus, sigmas = analysis.collect_bn_stat_samples(net, X, M, 1000, rng_stream(0, 14))

u = 0
m_mean, m_var = analysis.predicted_mean_dist(summary.mean, summary.std, M)
s_mean, s_var = analysis.predicted_std_dist(summary.std, summary.fourth, M)
print("batch mean: empirical", mus[0][:, u].mean(), mus[0][:, u].var(), "predicted", m_mean[u], m_var[u])
print("batch std:  empirical", sigmas[0][:, u].mean(), sigmas[0][:, u].var(), "predicted", s_mean[u], s_var[u])

# The batch std sits below sigma by roughly sigma / (2M) + (kurtosis - 1) sigma / (8M).
shift = (sigmas[0].mean(axis=0) - summary.std) / np.sqrt(s_var)
print("mean shift of batch std, in predicted standard deviations:", round(float(np.median(shift)), 3))

rows = analysis.normality_table(net, X, M, 1000, rng_stream(0, 14), layers=[0])
print("KS p > 0.01, batch mean:", np.mean([r.p_mu > 0.01 for r in rows]))
print("KS p > 0.01, batch std :", np.mean([r.p_sigma > 0.01 for r in rows]))
print("KS p > 0.01, batch std shape only:", np.mean([r.p_sigma_shape > 0.01 for r in rows]))

# Weight decay lambda implies a prior on the batch std with scale 1 / (2 N tau lambda).
print(analysis.prior_params(len(X), tau=1.0, weight_decay=1e-2))
